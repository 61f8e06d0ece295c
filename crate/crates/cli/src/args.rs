use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "shs-threat",
    version,
    about = "Formal threat analysis of ML-driven smart healthcare controllers",
    long_about = "Trains a diagnosis classifier and a pairwise sensor-relationship atlas, \
then asks an SMT solver which sensor alterations flip a patient's diagnosis while \
staying consistent with the atlas. Every reported attack is re-validated against the \
live models."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory receiving every artifact and report.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Seed for generation, splitting, training and the builtin backend.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for parallel sweeps (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset as CSV plus its schema sidecar.
    Generate(GenerateArgs),
    /// Train a classifier and report held-out metrics.
    Train(TrainArgs),
    /// Cluster sensor pairs per label and write the polygon atlas.
    Atlas(AtlasArgs),
    /// Escalate one attack goal for one patient along the ladder.
    Attack(AttackArgs),
    /// Attack matrix over every (source, target) label pair.
    Matrix(MatrixArgs),
    /// Certify how many compromised sensors a goal withstands.
    Resiliency(ResiliencyArgs),
    /// Feasible-attack counts over the capability grid, sensor frequencies
    /// and stage timings, as JSON and plot-ready CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Number of records.
    #[arg(long)]
    pub samples: Option<usize>,
    /// JSON generator configuration (sensor ranges and label profiles).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset CSV; a `<stem>.schema.json` sidecar is used when present.
    #[arg(long, conflicts_with = "generate", required_unless_present = "generate")]
    pub data: Option<PathBuf>,
    /// Generate the synthetic dataset in memory instead of reading a file.
    #[arg(long)]
    pub generate: bool,
    /// Records to generate with --generate.
    #[arg(long, requires = "generate")]
    pub samples: Option<usize>,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Held-out fraction of the stratified split.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcmChoice {
    Dt,
    Lr,
    Nn,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmChoice {
    Dbscan,
    Kmeans,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    /// SMT-LIB solver process (z3).
    External,
    /// In-process randomized search; sound for Sat, never proves Unsat.
    Builtin,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Classifier to train when --model is not given.
    #[arg(long, value_enum, default_value_t = DcmChoice::Dt)]
    pub dcm: DcmChoice,
    /// Trained classifier JSON written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training epochs for --dcm nn.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct AtlasChoiceArgs {
    /// Clustering algorithm used when --atlas is not given.
    #[arg(long, value_enum, default_value_t = AdmChoice::Dbscan)]
    pub adm: AdmChoice,
    /// Fixed cluster count for k-means; chosen by silhouette when absent.
    #[arg(long)]
    pub k: Option<usize>,
    /// Atlas JSON written by `atlas`.
    #[arg(long)]
    pub atlas: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendChoice::External)]
    pub backend: BackendChoice,
    /// Solver binary; falls back to $SHS_SOLVER, then `z3` on PATH.
    #[arg(long)]
    pub solver_path: Option<PathBuf>,
    /// Per-query solver timeout in seconds.
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
}

#[derive(Args, Debug, Clone)]
pub struct PatientArgs {
    /// Record index in the dataset; defaults to the first valid record of
    /// --source in the training split.
    #[arg(long)]
    pub patient: Option<usize>,
    /// Source label (name or index); must match the patient's prediction.
    #[arg(long)]
    pub source: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct AtlasArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub atlas: AtlasChoiceArgs,
}

#[derive(Args, Debug)]
pub struct AnalysisArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub atlas: AtlasChoiceArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// `default`, or comma-separated `max_sensors:threshold` rungs such as
    /// `1:0.05,2:10%`, sorted ascending.
    #[arg(long, default_value = "default")]
    pub ladder: String,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub patient: PatientArgs,
    /// Target label (name or index).
    #[arg(long)]
    pub target: String,
}

#[derive(Args, Debug)]
pub struct MatrixArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Fill only this record's row instead of one representative per label.
    #[arg(long)]
    pub patient: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ResiliencyArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub patient: PatientArgs,
    #[arg(long)]
    pub target: String,
    /// Largest sensor count to certify; defaults to all sensors but one.
    #[arg(long)]
    pub max_r: Option<usize>,
    /// Alteration threshold as a fraction.
    #[arg(long, default_value_t = 0.3)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub patient: PatientArgs,
}
