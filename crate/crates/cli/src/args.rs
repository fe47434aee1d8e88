use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ideal_core::{
    Budget, DecisionConfig, DecisionRule, Method, NormalizationMode, SelectionParams,
    SimilarityTransform,
};

#[derive(Debug, Parser)]
#[command(
    name = "ideal",
    version,
    about = "Prototype-based classification over frozen embeddings"
)]
pub struct Cli {
    /// Worker threads for fitting and classification.
    #[arg(long, global = true, env = "IDEAL_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select prototypes from a training bundle and write a prototype file.
    Fit(FitArgs),
    /// Measure accuracy and macro-F1 on a test bundle.
    Eval(EvalArgs),
    /// Write one prediction per record of a bundle.
    Predict(PredictArgs),
    /// Run a class-incremental plan and write per-step accuracy.
    Incremental(IncrementalArgs),
    /// Rank prototypes for one query record.
    Explain(ExplainArgs),
    /// Emit symbolic decision rules from an exemplar prototype set.
    Rules(RulesArgs),
    /// Summarize a bundle or prototype file.
    Inspect(InspectArgs),
    /// Convert `label,v1,...,vd` CSV rows to a bundle.
    ImportCsv(ImportCsvArgs),
    /// Evaluate one method over several prototype budgets.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Random,
    Kmeans,
    KmeansNearest,
    Xdnn,
    Elm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Random => Method::Random,
            MethodArg::Kmeans => Method::Kmeans,
            MethodArg::KmeansNearest => Method::KmeansNearest,
            MethodArg::Xdnn => Method::Xdnn,
            MethodArg::Elm => Method::Elm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizeArg {
    None,
    #[value(name = "unit_l2", alias = "unit-l2")]
    UnitL2,
    Zscore,
}

impl From<NormalizeArg> for NormalizationMode {
    fn from(n: NormalizeArg) -> Self {
        match n {
            NormalizeArg::None => NormalizationMode::None,
            NormalizeArg::UnitL2 => NormalizationMode::UnitL2,
            NormalizeArg::Zscore => NormalizationMode::Zscore,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Wta,
    Knn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimilarityArg {
    Raw,
    Exp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RulesFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
#[group(id = "budget", multiple = false)]
pub struct BudgetArgs {
    /// Prototypes per class as a fraction of the class size.
    #[arg(long, group = "budget")]
    pub budget_frac: Option<f64>,
    /// Fixed number of prototypes per class.
    #[arg(long, group = "budget")]
    pub budget_count: Option<usize>,
}

impl BudgetArgs {
    pub fn budget(&self) -> Option<Budget> {
        match (self.budget_frac, self.budget_count) {
            (Some(f), _) => Some(Budget::FractionOfClass(f)),
            (_, Some(k)) => Some(Budget::FixedPerClass(k)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    /// Radius for elm.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Base seed; each class uses the base seed xor its class id.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// k-means iteration cap.
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    /// k-means stopping threshold on relative inertia improvement.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// k-means restarts; the lowest-inertia run is kept.
    #[arg(long, default_value_t = 10)]
    pub n_init: usize,
    /// Normalization fitted on the training data and applied to queries.
    #[arg(long, value_enum, default_value = "none")]
    pub normalize: NormalizeArg,
}

impl TuningArgs {
    pub fn params(&self, budget: Option<Budget>) -> SelectionParams {
        SelectionParams {
            budget,
            radius: self.radius,
            max_iters: self.max_iters,
            tol: self.tol,
            n_init: self.n_init,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Prototype selection method.
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

impl MethodArgs {
    pub fn params(&self) -> SelectionParams {
        self.tuning.params(self.budget.budget())
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecisionArgs {
    /// Decision rule.
    #[arg(long, value_enum, default_value = "wta")]
    pub rule: RuleArg,
    /// Neighbours for the knn rule.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Per-class similarity scores reported alongside predictions.
    #[arg(long, value_enum, default_value = "raw")]
    pub similarity: SimilarityArg,
}

impl DecisionArgs {
    pub fn config(&self) -> DecisionConfig {
        DecisionConfig {
            rule: match self.rule {
                RuleArg::Wta => DecisionRule::WinnerTakesAll,
                RuleArg::Knn => DecisionRule::Knn { k: self.k },
            },
            similarity_transform: match self.similarity {
                SimilarityArg::Raw => SimilarityTransform::RawDistance,
                SimilarityArg::Exp => SimilarityTransform::ExpNormalized,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training bundle.
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Prototype file to write; the sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Test bundle.
    #[arg(long)]
    pub test: PathBuf,
    /// Evaluate an existing prototype file.
    #[arg(long, conflicts_with_all = ["train", "method"], required_unless_present = "train")]
    pub prototypes: Option<PathBuf>,
    /// Fit on this bundle instead, once per run.
    #[arg(long, requires = "method")]
    pub train: Option<PathBuf>,
    /// Prototype selection method when fitting.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Repetitions with derived seeds (fitting mode only).
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[command(flatten)]
    pub decision: DecisionArgs,
    /// Results CSV; a JSON mirror with confusion matrices goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Fill in the timing columns.
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Prototype file.
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Bundle to classify.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub decision: DecisionArgs,
    /// Add one score column per class.
    #[arg(long)]
    pub scores: bool,
    /// Predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IncrementalArgs {
    /// Training bundle.
    #[arg(long)]
    pub train: PathBuf,
    /// Test bundle.
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Classes per step.
    #[arg(long)]
    pub increment: usize,
    /// Arrival order of classes; defaults to ascending class id.
    #[arg(long, value_delimiter = ',')]
    pub class_order: Option<Vec<u32>>,
    /// Repetitions with derived seeds.
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[command(flatten)]
    pub decision: DecisionArgs,
    /// Step metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Fill in the timing columns.
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Prototype file.
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Bundle holding the query record.
    #[arg(long)]
    pub data: PathBuf,
    /// Record index of the query.
    #[arg(long)]
    pub query: u64,
    /// Most similar prototypes to list.
    #[arg(long, default_value_t = 3)]
    pub top: usize,
    /// Least similar prototypes to list.
    #[arg(long, default_value_t = 3)]
    pub bottom: usize,
    /// Report format.
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: ReportFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    /// Prototype file.
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Exemplars listed per class.
    #[arg(long, default_value_t = 3)]
    pub max_antecedents: usize,
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: RulesFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Bundle or prototype file.
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportCsvArgs {
    /// CSV input, one `label,v1,...,vd` row per record.
    #[arg(long)]
    pub csv: PathBuf,
    /// Bundle to write; the manifest goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset name; defaults to the CSV file stem.
    #[arg(long)]
    pub name: Option<String>,
    /// Identifier of the feature extractor.
    #[arg(long, default_value = "unknown")]
    pub backbone: String,
    /// Comma-separated class names, indexed by label.
    #[arg(long, value_delimiter = ',')]
    pub class_names: Option<Vec<String>>,
}

#[derive(Debug, Args)]
#[group(id = "budgets", required = true, multiple = false)]
pub struct SweepBudgets {
    /// Comma-separated fractions of each class.
    #[arg(long, value_delimiter = ',', group = "budgets")]
    pub budget_fracs: Option<Vec<f64>>,
    /// Comma-separated per-class counts.
    #[arg(long, value_delimiter = ',', group = "budgets")]
    pub budget_counts: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Training bundle.
    #[arg(long)]
    pub train: PathBuf,
    /// Test bundle.
    #[arg(long)]
    pub test: PathBuf,
    /// Prototype selection method.
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[command(flatten)]
    pub budgets: SweepBudgets,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Repetitions per budget with derived seeds.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[command(flatten)]
    pub decision: DecisionArgs,
    /// Results CSV; a JSON mirror goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Fill in the timing columns.
    #[arg(long)]
    pub record_timing: bool,
}
