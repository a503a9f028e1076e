//! Command-line surface. Every subcommand option is optional here; missing
//! values come from the `--config` file section and then from defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "tiltsens", version, about = "Sensitivity analysis for matched observational studies")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run file with one section per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file, written atomically on completion (default: stdout).
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    /// Output format (default: from the output extension, else json).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "TILTSENS_THREADS")]
    pub threads: Option<usize>,
    /// Suppress progress on stderr.
    #[arg(long, short = 'q', global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deviates and p-values of each method at each Γ.
    Analyze(AnalyzeArgs),
    /// Largest Γ at which a method still rejects.
    Senval(SenvalArgs),
    /// Design sensitivities under the simulation model.
    #[command(name = "design-sens")]
    DesignSens(DesignSensArgs),
    /// Power curves under the simulation model.
    Power(PowerArgs),
    /// Runs the brute-force oracle checks.
    Validate(ValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Senval(_) => "senval",
            Command::DesignSens(_) => "design-sens",
            Command::Power(_) => "power",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Study file (.csv or .json).
    #[arg(long, short = 'i')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// diff, huber[:trim], arank, mh.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stat: Option<String>,
    /// Comma-separated: conventional, tilted[:unit|ss|ipw], adaptive[:…].
    #[arg(long = "method", alias = "methods", value_delimiter = ',')]
    #[serde(rename = "methods", skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    /// One value, a list `1,1.5,2`, or a range `start:stop:step`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Weight family for methods given without one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SenvalArgs {
    #[arg(long, short = 'i')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stat: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct DesignSensArgs {
    /// Error families, comma-separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<String>>,
    /// Controls per set, comma-separated.
    #[arg(long = "J", alias = "controls", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<usize>>,
    /// Statistics, comma-separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stat: Option<Vec<String>>,
    /// Effect size τ/σ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// Matched sets in the Monte-Carlo pool.
    #[arg(long = "I", alias = "sets")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sets: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Standard deviation of normal set fixed effects (0 for none).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_effect_sd: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PowerArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[arg(long = "J", alias = "controls")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stat: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[arg(long = "I", alias = "sets")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sets: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// One value, a list, or a range `start:stop:step`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,
    #[arg(long = "method", alias = "methods", value_delimiter = ',')]
    #[serde(rename = "methods", skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_effect_sd: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}
