//! Seeded experiment runner over `goodhart_core`.
//!
//! Every subcommand resolves its settings from flags, then the optional
//! `--config` file, then built-in defaults, and echoes the resolved settings
//! into each artifact it writes.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

/// Exit status for success.
pub const EXIT_OK: u8 = 0;
/// Bad flags, config or input data.
pub const EXIT_VALIDATION: u8 = 1;
/// A numerical routine failed.
pub const EXIT_NUMERIC: u8 = 2;
/// `verify` ran but at least one check failed.
pub const EXIT_SUITE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "goodhart",
    version,
    about = "Reproducible sweeps for KL-regularized and conditioned optimization under heavy and light tails"
)]
pub struct Cli {
    /// TOML file with one table per subcommand; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for artifacts. Without it the primary artifact goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tail upweighting of a base law over a threshold grid.
    TiltSweep(TiltArgs),
    /// Conditional mean E[V | X + V > t] with its region table.
    ConditionSweep(ConditionArgs),
    /// Upweight, lift and compare policies on a small deterministic MDP.
    MdpDemo(MdpArgs),
    /// Hill curve, probability plots and a tail verdict for a sample.
    Tails(TailsArgs),
    /// KL of a mixture that mixes in a rare high-reward outcome.
    KlCalc(KlArgs),
    /// Run the built-in check suites and report pass/fail per check.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct TiltArgs {
    /// Base law, e.g. `student_t:3`.
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Threshold grid: `10,100` or `logspace:A:B:N`.
    #[arg(long)]
    pub t: Option<String>,
    /// Accept a base law that is not classified heavy-tailed.
    #[arg(long)]
    pub allow_light: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConditionArgs {
    /// Law of the true utility V.
    #[arg(long)]
    pub v: Option<String>,
    /// Law of the error X.
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub t: Option<String>,
    /// Region split h(t): `sqrt`, `log_power` or `constant:C`.
    #[arg(long)]
    pub h: Option<String>,
    /// Exponent for `log_power` and the region-4 tail bound.
    #[arg(long)]
    pub p: Option<f64>,
    /// Use the dependent V-shaped joint law instead of independent V and X.
    #[arg(long)]
    pub dependent: bool,
    /// Also tabulate P(V < c | ·)/P(V > c+1 | ·) at this c.
    #[arg(long)]
    pub ratio_c: Option<f64>,
    /// Rejection-sampling cross-check with this many draws per threshold.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MdpArgs {
    /// Instance file in the JSON schema of `goodhart_core::mdp::MdpFile`.
    #[arg(long, conflicts_with = "builtin")]
    pub input: Option<PathBuf>,
    /// `token-chain` or `six-state`.
    #[arg(long)]
    pub builtin: Option<String>,
    #[arg(long)]
    pub alphabet: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Law discretized onto the token-chain sinks.
    #[arg(long)]
    pub returns: Option<String>,
    #[arg(long)]
    pub atoms: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub t: Option<String>,
    /// Report the first threshold whose mean return exceeds this.
    #[arg(long)]
    pub target_mean: Option<f64>,
    /// ... while the per-state average KL stays below this.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Weight applied to one merged trajectory in the non-Markovian control.
    #[arg(long)]
    pub control_factor: Option<f64>,
    /// Also write the instance as JSON to this file.
    #[arg(long)]
    pub emit_instance: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TailsArgs {
    /// Sample file.
    #[arg(long, conflicts_with = "sample")]
    pub input: Option<PathBuf>,
    /// `csv_single_column` or `json_array`.
    #[arg(long)]
    pub format: Option<String>,
    /// `auto` or a comma list of k values.
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Draw the sample from this law instead of reading a file.
    #[arg(long)]
    pub sample: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct KlArgs {
    /// Mixture weight on the rare outcome.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Natural log of the base probability of the rare outcome.
    #[arg(long, allow_hyphen_values = true)]
    pub log_q: Option<f64>,
    /// Reward gap between the rare outcome and the base mean.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct VerifyArgs {
    /// Comma list of suites to run.
    #[arg(long)]
    pub only: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test hook: swap in a wrong upweighted-mean formula.
    #[arg(long, hide = true)]
    pub break_tilt_formula: bool,
}

/// A `goodhart_core` validation error carrying a CLI context.
pub fn invalid(
    context: &str,
    field: impl Into<String>,
    reason: impl Into<String>,
) -> anyhow::Error {
    goodhart_core::Error::InvalidParameter {
        context: format!("goodhart {context}"),
        field: field.into(),
        reason: reason.into(),
    }
    .into()
}

/// Map an error to the documented exit status.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<goodhart_core::Error>() {
            return if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERIC
            };
        }
        if cause.is::<std::io::Error>()
            || cause.is::<toml::de::Error>()
            || cause.is::<serde_json::Error>()
        {
            return EXIT_VALIDATION;
        }
    }
    EXIT_NUMERIC
}

/// Run a parsed command line; returns the exit status on success paths.
pub fn run(cli: Cli) -> anyhow::Result<u8> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    let sink = output::Sink::new(cli.out.as_deref())?;
    match cli.command {
        Command::TiltSweep(a) => commands::tilt_sweep(&a, &file.tilt_sweep, &sink),
        Command::ConditionSweep(a) => commands::condition_sweep(&a, &file.condition_sweep, &sink),
        Command::MdpDemo(a) => commands::mdp_demo(&a, &file.mdp_demo, &sink),
        Command::Tails(a) => commands::tails(&a, &file.tails, &sink),
        Command::KlCalc(a) => commands::kl_calc(&a, &file.kl_calc, &sink),
        Command::Verify(a) => commands::verify(&a, &file.verify, &sink),
    }
}
