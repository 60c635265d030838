use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mixlab", version, about = "Agnostic learning and verification with simulated quantum examples")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

/// Shared flags; each command falls back to its own defaults.
#[derive(Debug, Args)]
pub struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true)]
    pub a2: Option<f64>,
    #[arg(long, global = true)]
    pub b2: Option<f64>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// The distribution to work on: a file, or a noisy parity at `--n`/`--eta`.
#[derive(Debug, Args)]
pub struct InstanceArgs {
    /// Distribution file (JSON).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Parity string for the default noisy-parity instance, x_1 first;
    /// random from the seed when absent.
    #[arg(long)]
    pub parity: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Source {
    #[default]
    Natural,
    Mixture,
    NoisyPure,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the exact spectrum, or an approximation from simulated copies.
    Spectrum {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        approximate: bool,
        #[arg(long, value_enum, default_value_t)]
        source: Source,
    },
    /// Draw classical examples or Fourier samples as JSON lines.
    Sample {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum, default_value_t = SampleKind::Classical)]
        kind: SampleKind,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, value_enum, default_value_t)]
        source: Source,
    },
    /// Run a learner and print its hypothesis with the exact risk.
    Learn {
        #[arg(value_enum)]
        learner: Learner,
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum, default_value_t)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Variant::Randomized)]
        variant: Variant,
    },
    /// Run one verifier-prover interaction and write its transcript.
    Verify {
        #[arg(value_enum)]
        protocol: ProtocolArg,
        #[arg(long, default_value = "distributional-examples")]
        setting: String,
        #[command(flatten)]
        instance: InstanceArgs,
        /// Replace the honest prover by an adversary.
        #[arg(long, value_enum)]
        adversary: Option<Adversary>,
        /// Inflation used by the `inflate` adversary (default 1.5·eps).
        #[arg(long)]
        amount: Option<f64>,
        #[arg(long, value_enum, default_value_t = Policy::Exact)]
        sq_policy: Policy,
    },
    /// Run a batch experiment from a JSON config.
    Experiment {
        name: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Numerical checks.
    Check {
        #[command(subcommand)]
        what: CheckCommand,
    },
    /// Recompute the verdict of a logged transcript.
    Replay { transcript: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum CheckCommand {
    /// Closed forms of the hard-instance states.
    Theory {
        #[arg(value_enum)]
        name: TheoryCheck,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Sample count for the distance check.
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TheoryCheck {
    AverageSpectrum,
    InstanceSpectrum,
    MutualInformation,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleKind {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Learner {
    Parity,
    Sparse,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Randomized,
    Thresholded,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Parity,
    Sparse,
    Spectrum,
    SingleSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Adversary {
    DropHeaviest,
    JunkPad,
    Oversize,
    CoefficientSwap,
    Empty,
    Inflate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Exact,
    UniformNoise,
}
