use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use popbo::bench::{self, ConfigOverrides, InstanceKind, RunSpec, Summary};
use popbo::kernel::KernelSpec;

use crate::CliError;

/// Environment variable that replaces the base seed.
pub const SEED_ENV: &str = "POPBO_SEED";

#[derive(Debug, Parser)]
#[command(name = "popbo", version, about = "Preferential Bayesian optimization from pairwise comparisons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulated episodes and write per-episode CSVs plus a summary.
    Bench(BenchArgs),
    /// Answer comparisons at the terminal.
    Interactive(InteractiveArgs),
    /// Serve the session protocol over HTTP.
    Serve(ServeArgs),
}

fn parse_instance(s: &str) -> Result<InstanceKind, String> {
    s.parse().map_err(|e: popbo::Error| e.to_string())
}

/// Settings layered over an instance's defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct Tuning {
    /// Confidence width scale: beta = beta0 * sqrt(t).
    #[arg(long)]
    pub beta0: Option<f64>,
    /// Regularizer of the duel uncertainty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Diagonal jitter added to Gram matrices.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// RKHS norm bound B.
    #[arg(long)]
    pub norm_bound: Option<f64>,
    /// Kernel as inline JSON or a path to a JSON file.
    #[arg(long, value_name = "JSON|PATH")]
    pub kernel: Option<String>,
}

impl Tuning {
    pub fn overrides(&self) -> Result<ConfigOverrides, CliError> {
        let kernel = match &self.kernel {
            None => None,
            Some(s) if s.trim_start().starts_with('{') => Some(KernelSpec::from_json(s)?),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read kernel file {path}: {e}")))?;
                Some(KernelSpec::from_json(&text)?)
            }
        };
        Ok(ConfigOverrides {
            beta0: self.beta0,
            lambda: self.lambda,
            jitter: self.jitter,
            norm_bound: self.norm_bound,
            kernel,
            ..Default::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// gp-se, gp-se-2d, a test function name, or comfort_synth.
    #[arg(long, value_parser = parse_instance)]
    pub instance: InstanceKind,
    /// Number of episodes; episode i uses seed base + i.
    #[arg(long, default_value_t = 30)]
    pub seeds: usize,
    #[arg(long, default_value_t = 30)]
    pub horizon: usize,
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Directory name under the output directory.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Steps skipped by the regret slope fit.
    #[arg(long, default_value_t = 5)]
    pub burn_in: usize,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct InteractiveArgs {
    #[arg(long, value_parser = parse_instance, default_value = "comfort_synth")]
    pub instance: InstanceKind,
    /// Stop after this many answered comparisons.
    #[arg(long, default_value_t = 30)]
    pub horizon: usize,
    #[arg(long, default_value = "checkpoints")]
    pub checkpoint_dir: PathBuf,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "checkpoints")]
    pub checkpoint_dir: PathBuf,
}

/// Base seed: `POPBO_SEED` when set, else 0.
pub fn base_seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

pub fn run_bench(args: &BenchArgs, base_seed: u64) -> Result<(PathBuf, Summary), CliError> {
    if args.seeds == 0 || args.horizon == 0 {
        return Err(CliError::Usage("--seeds and --horizon must be at least 1".into()));
    }
    let spec = RunSpec {
        instance: args.instance,
        episodes: args.seeds,
        base_seed,
        horizon: args.horizon,
        burn_in: args.burn_in,
        overrides: args.tuning.overrides()?,
    };
    let run_id = args
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}-seed{}-n{}-h{}", args.instance, base_seed, args.seeds, args.horizon));
    let out = bench::run(&spec, &run_id, Some(&args.out_dir))?;
    Ok((args.out_dir.join(run_id), out.summary))
}
