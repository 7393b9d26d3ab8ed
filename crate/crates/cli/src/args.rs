use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

/// Flags taking a value that may appear before the subcommand.
pub const GLOBAL_VALUE_FLAGS: [&str; 5] = ["--threads", "--out", "--format", "--config", "--seed"];

/// Global arguments that are not part of the recorded configuration.
pub const UNRECORDED: [&str; 3] = ["threads", "out", "config"];

#[derive(Debug, Parser)]
#[command(name = "esmlab", version, about = "Entropy support maps and sparse factor-of-iid experiments")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// Worker threads for trial-parallel work.
    #[arg(long, global = true, env = "ESMLAB_THREADS")]
    pub threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Flat `key=value` file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CondArg {
    Rejection,
    Planted,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entropy support maps on {0,1}^n.
    #[command(subcommand)]
    Esm(EsmCmd),
    /// Inequality sweeps and rate experiments.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Factor-of-iid subsets of Cayley graphs.
    #[command(subcommand)]
    Fiid(FiidCmd),
    /// Unimodular random rooted sets.
    #[command(subcommand)]
    Urs(UrsCmd),
}

#[derive(Debug, Subcommand)]
pub enum EsmCmd {
    /// Mass, telescoping, disjointness and equivariance checks.
    #[command(args_override_self = true)]
    Verify(EsmVerify),
    /// Heights J(w,i) of one field.
    #[command(args_override_self = true)]
    Dump(EsmDump),
    /// Union excess for random nested pairs.
    #[command(args_override_self = true)]
    Excess(EsmExcess),
}

#[derive(Debug, Subcommand)]
pub enum BoundsCmd {
    /// Per-check violation counts.
    #[command(args_override_self = true)]
    Sweep(BoundsSweep),
    /// Relative excess against density.
    #[command(args_override_self = true)]
    Rate(BoundsRate),
    /// Projective metric checks on random vector pairs.
    #[command(args_override_self = true)]
    Proj(BoundsProj),
}

#[derive(Debug, Subcommand)]
pub enum FiidCmd {
    /// Root density estimate.
    #[command(args_override_self = true)]
    Density(FiidDensity),
    /// Per-trial cut statistics.
    #[command(args_override_self = true)]
    Cut(FiidCut),
    /// Cut fraction across intensities.
    #[command(args_override_self = true)]
    Curve(FiidCurve),
}

#[derive(Debug, Subcommand)]
pub enum UrsCmd {
    /// Cylinder probabilities conditioned on the root.
    #[command(args_override_self = true)]
    Cylinders(UrsCylinders),
    /// Weak-* distance between two tables.
    #[command(args_override_self = true)]
    Distance(UrsDistance),
    /// Mass transport checks on finite sets.
    #[command(args_override_self = true)]
    Mtp(UrsMtp),
    /// Distance from zoo thinnings to their pattern.
    #[command(args_override_self = true)]
    Limit(UrsLimit),
}

#[derive(Debug, Args)]
pub struct EsmVerify {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Every subset under every order (n ≤ 4).
    #[arg(long)]
    pub exhaustive: bool,
    /// Random subsets when not exhaustive.
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    pub samples: usize,
    /// Orders per random subset.
    #[arg(long, default_value = "4", value_parser = parse_count)]
    pub orders: usize,
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    pub pairs: usize,
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    pub triples: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct EsmDump {
    /// Subset as `n=<n>;bits=<hex>`; random when absent.
    #[arg(long)]
    pub set: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    /// Revelation sequence such as `2:0:1`; uniform when absent.
    #[arg(long)]
    pub order: Option<String>,
}

#[derive(Debug, Args)]
pub struct EsmExcess {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0625)]
    pub density: f64,
    /// Keep probability of V inside U.
    #[arg(long, default_value_t = 0.5)]
    pub thin: f64,
    #[arg(long, default_value = "20", value_parser = parse_count)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct BoundsSweep {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Random triples even when n ≤ 4.
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value = "10000", value_parser = parse_count)]
    pub triples: usize,
    /// Largest |U| in the exhaustive sweep; all when absent.
    #[arg(long)]
    pub max_u: Option<usize>,
    /// Every order in the exhaustive sweep rather than the natural one.
    #[arg(long)]
    pub all_orders: bool,
    /// κ for the s₁ lower bound.
    #[arg(long, default_value_t = 0.1)]
    pub kappa: f64,
    /// Region thresholds κ₀,κ₁,κ₂.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [0.2, 0.1, 0.0125])]
    pub kappas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BoundsRate {
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Densities; 2^-4 … 2^-12 when absent.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub densities: Vec<f64>,
    #[arg(long, default_value = "100", value_parser = parse_count)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct BoundsProj {
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [2, 3, 4, 5, 6, 7, 8])]
    pub dims: Vec<usize>,
    #[arg(long, default_value = "10000", value_parser = parse_count)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    #[arg(long, default_value = "free:2")]
    pub group: String,
    /// `bernoulli:p=…`, `minlabel:w=…` or `zoo:q=…,pat=…`.
    #[arg(long, default_value = "zoo:q=1e-2,pat=ball1")]
    pub rule: String,
}

#[derive(Debug, Args)]
pub struct FiidDensity {
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long, default_value_t = 4)]
    pub radius: usize,
    #[arg(long, default_value = "100000", value_parser = parse_count)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct FiidCut {
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long, default_value_t = 8)]
    pub radius: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value = "50", value_parser = parse_count)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct FiidCurve {
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Intensities, strictly decreasing.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [1e-2, 1e-3, 1e-4])]
    pub densities: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub radius: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value = "50", value_parser = parse_count)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct UrsCylinders {
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value = "100000", value_parser = parse_count)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = CondArg::Rejection)]
    pub conditioning: CondArg,
}

#[derive(Debug, Args)]
pub struct UrsDistance {
    /// Table JSON file.
    #[arg(long)]
    pub a: PathBuf,
    /// Second table JSON file; the exact table of `--pattern` when absent.
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub pattern: Option<String>,
}

#[derive(Debug, Args)]
pub struct UrsMtp {
    #[arg(long, default_value = "free:2")]
    pub group: String,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value_t = 4)]
    pub max_size: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct UrsLimit {
    #[arg(long, default_value = "free:2")]
    pub group: String,
    #[arg(long, default_value = "ball1")]
    pub pattern: String,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [1e-2, 1e-3, 1e-4])]
    pub qs: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value = "1000000", value_parser = parse_count)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = CondArg::Planted)]
    pub conditioning: CondArg,
    /// Largest allowed distance at the last intensity.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
}

/// Nonnegative integer, also written as `1e5`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) {
        Ok(x as usize)
    } else {
        Err(format!("`{s}` is not a whole number"))
    }
}
