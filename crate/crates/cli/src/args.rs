use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "cfnlab", version, about = "Chaos-free recurrent networks: training and dynamics experiments")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Output directory.
    #[arg(long, global = true, env = "CFNLAB_OUT", default_value = "cfnlab-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Train a language model and write a checkpoint and a training log.
    Train(TrainArgs),
    /// Report the perplexity of a checkpoint on one corpus split.
    Eval(EvalArgs),
    /// Run a dynamics experiment and write its CSV files.
    Dynamics(DynamicsArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct CorpusArgs {
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Vocabulary size including the end-of-sentence and unknown markers.
    #[arg(long, default_value_t = 10_000)]
    pub vocab_size: usize,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cell {
    Cfn,
    Lstm,
    Gru,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    Div3,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskModeArg {
    Window,
    Step,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = Cell::Cfn)]
    pub cell: Cell,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 224)]
    pub hidden: usize,
    /// Truncation length of backpropagation through time.
    #[arg(long, default_value_t = 35)]
    pub unroll: usize,
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    #[arg(long, default_value_t = 5.5)]
    pub lr0: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Div3)]
    pub schedule: ScheduleArg,
    /// Dropout rate between layers.
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    /// Dropout rate on gate inputs.
    #[arg(long, default_value_t = 0.0)]
    pub q: f64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value_t = MaskModeArg::Window)]
    pub mask_mode: MaskModeArg,
    /// Also log every N updates (0: epoch ends only).
    #[arg(long, default_value_t = 0)]
    pub log_every: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Vocabulary file; defaults to vocab.tsv next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Attractor,
    Diverge,
    Impulse,
    Lemma1,
    Lemma2,
    Multilayer,
    Lyapunov,
    Henon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSource {
    PaperLstm,
    PaperGru,
    Henon,
    Checkpoint,
}

#[derive(Args, Debug, Serialize)]
pub struct DynamicsArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    #[arg(long, value_enum, default_value_t = MapSource::PaperLstm)]
    pub map: MapSource,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Corpus directory, for warm-up tokens and data-driven runs.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Total iterations (attractor: 100000, diverge: 200, lyapunov: 100000).
    #[arg(long)]
    pub steps: Option<usize>,
    /// First stored iterate; also the burn-in before divergence runs.
    #[arg(long, default_value_t = 1000)]
    pub keep_from: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Number of initial states (attractor) or per-map initial states (lemma2).
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long, default_value_t = 1e-7)]
    pub perturb: f64,
    /// Trials (diverge: 1000, lemma1: 1000 instances, lemma2: 100 maps).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub threshold: f64,
    /// State dimension of random CFN instances.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub unit: usize,
    /// Step of the impulse.
    #[arg(long, default_value_t = 10)]
    pub spike: usize,
    #[arg(long, default_value_t = 10.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
    #[arg(long, default_value_t = 10)]
    pub renorm: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
    /// Tokens fed before the input is switched off.
    #[arg(long, default_value_t = 200)]
    pub warm: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct GradcheckArgs {
    /// Cell to check; all three when omitted.
    #[arg(long, value_enum)]
    pub cell: Option<Cell>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    #[arg(long, default_value_t = 11)]
    pub vocab: usize,
    #[arg(long, default_value_t = 5)]
    pub unroll: usize,
    /// Perturb one analytic partial; the check must then fail.
    #[arg(long)]
    pub corrupt: bool,
}
