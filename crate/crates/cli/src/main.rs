//! `corrnn`: synthetic data, training, evaluation and gradient checks.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};

use corrnn_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "corrnn",
    version,
    about = "Correlational recurrent multimodal fusion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the seeded two-modality benchmark as a CRNS file.
    Synth(SynthArgs),
    /// Train a model configuration and write a CRNM checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint in one of the five settings.
    Eval(EvalArgs),
    /// Compare analytic gradients with central differences on a toy model.
    Gradcheck(GradcheckArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 75)]
    pub per_class: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 20)]
    pub dim_x: usize,
    #[arg(long, default_value_t = 12)]
    pub dim_y: usize,
    /// Observation noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigName {
    Baseline,
    Fused,
    #[value(name = "self")]
    SelfRecon,
    Cross,
    All,
    Corr,
    #[value(name = "corr-dw")]
    CorrDw,
}

impl ConfigName {
    pub fn name(self) -> &'static str {
        match self {
            ConfigName::Baseline => "baseline",
            ConfigName::Fused => "fused",
            ConfigName::SelfRecon => "self",
            ConfigName::Cross => "cross",
            ConfigName::All => "all",
            ConfigName::Corr => "corr",
            ConfigName::CorrDw => "corr-dw",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecurrenceArg {
    Fused,
    PerModality,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderArg {
    Reverse,
    Forward,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: String,
    #[arg(long, value_enum)]
    pub config: ConfigName,
    /// Fusion-layer width.
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_adapt: f64,
    /// Global gradient-norm clipping threshold.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, value_enum, default_value_t = RecurrenceArg::Fused)]
    pub recurrence: RecurrenceArg,
    #[arg(long, value_enum, default_value_t = OrderArg::Reverse)]
    pub decode_order: OrderArg,
    /// Float width of the checkpoint payload.
    #[arg(long, default_value_t = 64, value_parser = PossibleValuesParser::new(["32", "64"]).map(|s| s.parse::<u16>().unwrap()))]
    pub precision: u16,
    /// Train on the first N windows of each class only.
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Checkpoint path; for `baseline` a prefix for PREFIX.x.crnm and PREFIX.y.crnm.
    #[arg(long)]
    pub out: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModalityArg {
    X,
    Y,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Checkpoint path (for `--config baseline`, the prefix used at training).
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: String,
    /// Windows per class used to train the classifier; the rest are tested.
    #[arg(long, default_value_t = 50)]
    pub train_per_class: usize,
    #[arg(long, default_value = "fusion", value_parser = ["fusion", "cross-x", "cross-y", "shared-xy", "shared-yx"])]
    pub setting: String,
    #[arg(long, default_value_t = 1, value_parser = PossibleValuesParser::new(["1", "3"]).map(|s| s.parse::<usize>().unwrap()))]
    pub slices: usize,
    /// Add white Gaussian noise at this SNR (dB) to the test split.
    #[arg(long)]
    pub noise_snr: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModalityArg::Y)]
    pub noise_modality: ModalityArg,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// Only `baseline` changes behaviour; anything else reads the checkpoint.
    #[arg(long, value_enum)]
    pub config: Option<ConfigName>,
    /// Concatenated baseline width after PCA.
    #[arg(long)]
    pub baseline_dim: Option<usize>,
    /// Mini-batch size for the correlation diagnostic.
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the key=value summary here.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = ["fused", "self", "cross", "all", "corr", "corr-dw"], default_value = "corr-dw")]
    pub config: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Flip the sign of one analytic gradient block (negative control).
    #[arg(long, hide = true)]
    pub corrupt_block: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: String,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::Argument(_) => Failure::Usage(msg),
            Error::Format { .. } | Error::Io(_) | Error::Shape(_) => Failure::Io(msg),
            Error::NonFinite(_) | Error::Consistency(_) => Failure::Check(msg),
        }
    }
}

pub fn run(argv: Vec<String>) -> Result<(), Failure> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(Failure::Usage(e.to_string()));
        }
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&a, &argv),
        Command::Train(a) => commands::train(&a, &argv),
        Command::Eval(a) => commands::eval(&a, &argv),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Replay(a) => {
            let recorded = manifest::read_argv(&a.manifest)?;
            if recorded.get(1).map(String::as_str) == Some("replay") {
                return Err(Failure::Usage(
                    "a manifest cannot replay another replay".into(),
                ));
            }
            run(recorded)
        }
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) if m.starts_with("error:") => eprintln!("{}", m.trim_end()),
                Failure::Usage(m) | Failure::Check(m) | Failure::Io(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
