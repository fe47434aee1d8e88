use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use ideal_core::synthetic::{gaussian_blobs, BlobSpec};
use ideal_core::{
    save_bundle, save_prototypes, EmbeddingDataset, Fingerprint, Method, NormalizationMode,
    Prototype, PrototypeSet, SelectionParams,
};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ideal"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "ideal {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn blobs(dir: &Path, classes: usize, per_class: usize) {
    for (name, seed) in [("train.emb", 1), ("test.emb", 2)] {
        let ds = gaussian_blobs(&BlobSpec {
            classes,
            dim: 6,
            per_class,
            separation: 8.0,
            sigma: 1.0,
            seed,
        });
        save_bundle(&ds, dir.join(name)).unwrap();
    }
}

#[test]
fn help_exits_zero_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--help"]);
    for sub in [
        "fit",
        "eval",
        "predict",
        "incremental",
        "explain",
        "rules",
        "inspect",
        "import-csv",
        "sweep",
    ] {
        let text = ok(dir.path(), &[sub, "--help"]);
        assert!(text.contains("Usage"), "{sub}");
    }
}

#[test]
fn fit_writes_prototypes_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path(), 3, 20);
    ok(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "kmeans",
            "--budget-frac",
            "0.1",
            "--seed",
            "7",
            "--out",
            "p.bin",
        ],
    );
    let set = ideal_core::load_prototypes(dir.path().join("p.bin")).unwrap();
    assert_eq!(set.len(), 6);
    assert_eq!(set.seed, 7);
    assert!(dir.path().join("p.bin.json").exists());

    ok(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "elm",
            "--radius",
            "12",
            "--out",
            "e.bin",
        ],
    );
    let elm = ideal_core::load_prototypes(dir.path().join("e.bin")).unwrap();
    assert_eq!(elm.params.radius, Some(12.0));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path(), 2, 10);
    let missing = run(
        dir.path(),
        &["fit", "--train", "train.emb", "--out", "p.bin"],
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--method"));

    let both = run(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "random",
            "--budget-frac",
            "0.1",
            "--budget-count",
            "2",
            "--out",
            "p.bin",
        ],
    );
    assert_eq!(both.status.code(), Some(2));

    let too_many = run(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "random",
            "--budget-count",
            "11",
            "--out",
            "p.bin",
        ],
    );
    assert_eq!(too_many.status.code(), Some(2));
    assert!(!dir.path().join("p.bin").exists());

    let no_radius = run(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "elm",
            "--out",
            "p.bin",
        ],
    );
    assert_eq!(no_radius.status.code(), Some(2));
}

#[test]
fn io_and_format_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path(), 2, 10);
    let missing = run(
        dir.path(),
        &[
            "fit", "--train", "nope.emb", "--method", "xdnn", "--out", "p.bin",
        ],
    );
    assert_eq!(missing.status.code(), Some(3));

    let bytes = std::fs::read(dir.path().join("train.emb")).unwrap();
    std::fs::write(dir.path().join("cut.emb"), &bytes[..bytes.len() - 10]).unwrap();
    let out = run(dir.path(), &["inspect", "cut.emb"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("truncated") && err.contains("offset"), "{err}");
}

#[test]
fn numeric_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let ds = EmbeddingDataset::from_rows(
        "z",
        vec![0, 0, 1],
        vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]],
    )
    .unwrap();
    save_bundle(&ds, dir.path().join("z.emb")).unwrap();
    let out = run(
        dir.path(),
        &[
            "fit",
            "--train",
            "z.emb",
            "--method",
            "xdnn",
            "--normalize",
            "unit_l2",
            "--out",
            "p.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn inspect_summarizes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path(), 3, 10);
    ok(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "random",
            "--budget-count",
            "2",
            "--out",
            "p.bin",
        ],
    );
    let b = ok(dir.path(), &["inspect", "train.emb"]);
    assert!(
        b.contains("records: 30") && b.contains("dimension: 6"),
        "{b}"
    );
    let p = ok(dir.path(), &["inspect", "p.bin"]);
    assert!(
        p.contains("prototypes: 6") && p.contains("method: random"),
        "{p}"
    );
}

#[test]
fn eval_and_predict_outputs() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path(), 3, 20);
    ok(
        dir.path(),
        &[
            "eval",
            "--train",
            "train.emb",
            "--test",
            "test.emb",
            "--method",
            "kmeans",
            "--budget-count",
            "2",
            "--runs",
            "3",
            "--out",
            "r.csv",
        ],
    );
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "method,budget,n_prototypes,accuracy_mean,accuracy_std,f1_mean,f1_std,fit_seconds,eval_seconds"
    );
    assert!(lines[1].starts_with("kmeans,2,6,1,0,1,0,"), "{}", lines[1]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.csv.json")).unwrap())
            .unwrap();
    assert_eq!(json[0]["runs"].as_array().unwrap().len(), 3);
    assert!(json[0]["runs"][0]["confusion"]["counts"].is_array());

    ok(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "kmeans",
            "--budget-count",
            "2",
            "--out",
            "p.bin",
        ],
    );
    ok(
        dir.path(),
        &[
            "eval",
            "--prototypes",
            "p.bin",
            "--test",
            "test.emb",
            "--out",
            "t.csv",
            "--record-timing",
        ],
    );
    let timed = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let row: Vec<&str> = timed.lines().nth(1).unwrap().split(',').collect();
    assert!(
        row[7].parse::<f64>().is_ok() && row[8].parse::<f64>().is_ok(),
        "{row:?}"
    );

    ok(
        dir.path(),
        &[
            "predict",
            "--prototypes",
            "p.bin",
            "--data",
            "test.emb",
            "--rule",
            "knn",
            "--k",
            "3",
            "--scores",
            "--similarity",
            "exp",
            "--out",
            "pred.csv",
        ],
    );
    let pred = std::fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    let mut lines = pred.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,label,predicted,distance,prototype,score_0,score_1,score_2"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 60);
    for r in &rows {
        assert_eq!(r[1], r[2]);
        let total: f64 = r[5..].iter().map(|s| s.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    let bad_k = run(
        dir.path(),
        &[
            "predict",
            "--prototypes",
            "p.bin",
            "--data",
            "test.emb",
            "--rule",
            "knn",
            "--k",
            "7",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(bad_k.status.code(), Some(2));
}

#[test]
fn incremental_with_increment_ten_has_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("train.emb", 1), ("test.emb", 2)] {
        let ds = gaussian_blobs(&BlobSpec {
            classes: 100,
            dim: 8,
            per_class: 4,
            separation: 12.0,
            sigma: 1.0,
            seed,
        });
        save_bundle(&ds, dir.path().join(name)).unwrap();
    }
    ok(
        dir.path(),
        &[
            "incremental",
            "--train",
            "train.emb",
            "--test",
            "test.emb",
            "--method",
            "random",
            "--budget-count",
            "1",
            "--increment",
            "10",
            "--runs",
            "2",
            "--out",
            "inc.csv",
        ],
    );
    let csv = std::fs::read_to_string(dir.path().join("inc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "step,n_classes,accuracy_mean,accuracy_std,fit_seconds,eval_seconds"
    );
    assert_eq!(lines.len(), 11);
    for (i, l) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols[0], (i + 1).to_string());
        assert_eq!(cols[1], ((i + 1) * 10).to_string());
    }
}

fn ship_fixture(dir: &Path) {
    let names = [
        "airplane",
        "automobile",
        "bird",
        "cat",
        "deer",
        "dog",
        "frog",
        "horse",
        "ship",
        "truck",
    ];
    let listed = [
        (8u32, 28.145f32),
        (8, 28.272),
        (8, 28.735),
        (2, 52.952),
        (4, 52.960),
        (7, 52.960),
    ];
    let mut per_class: BTreeMap<u32, Vec<Prototype>> = BTreeMap::new();
    for (axis, &(class, d)) in listed.iter().enumerate() {
        let mut v = vec![0.0; 6];
        v[axis] = d;
        per_class
            .entry(class)
            .or_default()
            .push(Prototype::exemplar(class, v, 1000 + axis as u64, 1));
    }
    let set = PrototypeSet::new(
        Fingerprint {
            backbone_id: "unknown".into(),
            dim: 6,
            normalization: NormalizationMode::None,
        },
        Method::KmeansNearest,
        SelectionParams::default(),
        0,
        per_class,
    )
    .unwrap()
    .with_class_names(names.iter().map(|s| s.to_string()).collect());
    save_prototypes(&set, dir.join("ships.bin")).unwrap();
    let queries =
        EmbeddingDataset::from_rows("q", vec![0, 8], vec![vec![1.0; 6], vec![0.0; 6]]).unwrap();
    save_bundle(&queries, dir.join("q.emb")).unwrap();
}

#[test]
fn explain_reproduces_ship_layout() {
    let dir = tempfile::tempdir().unwrap();
    ship_fixture(dir.path());
    let md = ok(
        dir.path(),
        &[
            "explain",
            "--prototypes",
            "ships.bin",
            "--data",
            "q.emb",
            "--query",
            "1",
            "--top",
            "3",
            "--bottom",
            "3",
        ],
    );
    let expected = "\
## Query 1

Predicted: **ship** (class 8)
Ground truth: class 8

| rank | similar | ℓ² | source | dissimilar | ℓ² | source |
|---:|---|---:|---:|---|---:|---:|
| 1 | ship | 28.145 | #1000 | bird | 52.952 | #1003 |
| 2 | ship | 28.272 | #1001 | deer | 52.960 | #1004 |
| 3 | ship | 28.735 | #1002 | horse | 52.960 | #1005 |
";
    assert_eq!(md, expected);

    let json = ok(
        dir.path(),
        &[
            "explain",
            "--prototypes",
            "ships.bin",
            "--data",
            "q.emb",
            "--query",
            "1",
            "--format",
            "json",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["predicted_class"], 8);
    assert_eq!(v["ranking"].as_array().unwrap().len(), 6);

    let missing = run(
        dir.path(),
        &[
            "explain",
            "--prototypes",
            "ships.bin",
            "--data",
            "q.emb",
            "--query",
            "9",
        ],
    );
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn rules_text_and_refusal() {
    let dir = tempfile::tempdir().unwrap();
    ship_fixture(dir.path());
    let text = ok(
        dir.path(),
        &[
            "rules",
            "--prototypes",
            "ships.bin",
            "--max-antecedents",
            "2",
        ],
    );
    assert_eq!(
        text,
        "IF (Q ~ #1003) THEN 'bird'\n\
         IF (Q ~ #1004) THEN 'deer'\n\
         IF (Q ~ #1005) THEN 'horse'\n\
         IF (Q ~ #1000) OR (Q ~ #1001) THEN 'ship'\n"
    );
    blobs(dir.path(), 2, 10);
    ok(
        dir.path(),
        &[
            "fit",
            "--train",
            "train.emb",
            "--method",
            "kmeans",
            "--budget-count",
            "2",
            "--out",
            "k.bin",
        ],
    );
    let refused = run(dir.path(), &["rules", "--prototypes", "k.bin"]);
    assert_eq!(refused.status.code(), Some(2));
}

#[test]
fn import_csv_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.csv"), "0,1.0,2.0\n1,3.5,-1\n0,0.5,2.5\n").unwrap();
    ok(
        dir.path(),
        &[
            "import-csv",
            "--csv",
            "e.csv",
            "--out",
            "e.emb",
            "--class-names",
            "a,b",
            "--backbone",
            "vit_b_16",
        ],
    );
    let ds = ideal_core::load_bundle(dir.path().join("e.emb")).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.manifest().class_names, ["a", "b"]);
    assert_eq!(ds.manifest().backbone_id, "vit_b_16");
    assert_eq!(ds.records()[1].vector, [3.5, -1.0]);

    std::fs::write(dir.path().join("bad.csv"), "0,1.0,2.0\n1,3.5\n").unwrap();
    let bad = run(
        dir.path(),
        &["import-csv", "--csv", "bad.csv", "--out", "bad.emb"],
    );
    assert_eq!(bad.status.code(), Some(3));

    blobs(dir.path(), 3, 20);
    ok(
        dir.path(),
        &[
            "sweep",
            "--train",
            "train.emb",
            "--test",
            "test.emb",
            "--method",
            "kmeans",
            "--budget-fracs",
            "0.05,0.1,0.5",
            "--runs",
            "2",
            "--out",
            "sw.csv",
        ],
    );
    let csv = std::fs::read_to_string(dir.path().join("sw.csv")).unwrap();
    let budgets: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(budgets, ["0.05", "0.1", "0.5"]);
}

#[test]
fn jobs_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path(), 3, 10);
    let out = Command::new(env!("CARGO_BIN_EXE_ideal"))
        .current_dir(dir.path())
        .env("IDEAL_JOBS", "2")
        .args([
            "fit",
            "--train",
            "train.emb",
            "--method",
            "xdnn",
            "--out",
            "p.bin",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_ideal"))
        .current_dir(dir.path())
        .env("IDEAL_JOBS", "many")
        .args(["inspect", "train.emb"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
