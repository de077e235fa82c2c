//! Episode runner, regret metrics and run output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::instances::{
    comfort_synth, fit_lengthscale, gp_instance, oracle_from_truth, test_function, Benchmark, GroundTruth, Objective,
    GP_NORM_MARGIN, TEST_FUNCTION_NORM_BOUND,
};
use crate::kernel::{KernelSpec, Point};
use crate::session::{PopBoConfig, Session};

/// Sub-stream ids derived from an episode seed.
const INSTANCE_STREAM: u64 = 0;
const ORACLE_STREAM: u64 = 1;
const START_STREAM: u64 = 2;

/// Which past query an episode reports as its recommendation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportRule {
    /// Smallest report radius.
    TStar,
    /// Argmax of the maximum-likelihood interpolant.
    MaxMle,
}

/// A named family of ground truths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    GpSe { dim: usize },
    Function(Benchmark),
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp-se" | "gp-se-1d" => Ok(InstanceKind::GpSe { dim: 1 }),
            "gp-se-2d" => Ok(InstanceKind::GpSe { dim: 2 }),
            other => other.parse().map(InstanceKind::Function),
        }
    }
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceKind::GpSe { dim: 1 } => f.write_str("gp-se"),
            InstanceKind::GpSe { dim } => write!(f, "gp-se-{dim}d"),
            InstanceKind::Function(b) => f.write_str(b.name()),
        }
    }
}

impl InstanceKind {
    /// The report rule used for this family's headline numbers.
    pub fn default_report(self) -> ReportRule {
        match self {
            InstanceKind::GpSe { .. } => ReportRule::TStar,
            InstanceKind::Function(_) => ReportRule::MaxMle,
        }
    }
}

/// Overrides applied on top of an instance's default configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_bound: Option<f64>,
    /// Multiplies the default norm bound; ignored when `norm_bound` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub adapt_norm_bound: bool,
}

/// Ground truth and optimizer configuration for episode `seed`.
#[derive(Clone, Debug)]
pub struct EpisodeSetup {
    pub seed: u64,
    pub truth: GroundTruth,
    pub config: PopBoConfig,
    pub report: ReportRule,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The simulated oracle an episode with this seed answers from.
pub fn episode_oracle(truth: &GroundTruth, seed: u64) -> crate::instances::Oracle<'_> {
    oracle_from_truth(truth, stream_rng(seed, ORACLE_STREAM))
}

/// SE kernel with unit variance and a lengthscale fitted to random samples
/// of the normalized function. The fit uses a fixed generator so every
/// episode of a function shares the same kernel.
pub fn fitted_kernel(truth: &GroundTruth) -> Result<KernelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = fit_lengthscale(truth, 100, &mut rng)?;
    Ok(KernelSpec::squared_exponential(1.0, l, truth.domain.dim()))
}

/// Builds the ground truth and configuration of one episode. The instance
/// and the starting point come from separate sub-streams of `seed`, so the
/// instance does not depend on optimizer settings.
pub fn episode_setup(kind: InstanceKind, seed: u64, overrides: &ConfigOverrides) -> Result<EpisodeSetup> {
    let mut instance_seed_rng = stream_rng(seed, INSTANCE_STREAM);
    let (truth, kernel, norm_bound) = match kind {
        InstanceKind::GpSe { dim } => {
            let truth = gp_instance(rand::Rng::random(&mut instance_seed_rng), dim)?;
            let (kernel, norm) = match &truth.objective {
                Objective::GpSample { interpolant, .. } => (interpolant.kernel.clone(), interpolant.norm_sq().sqrt()),
                _ => unreachable!("gp_instance returns a GP sample"),
            };
            (truth, kernel, GP_NORM_MARGIN * norm)
        }
        InstanceKind::Function(b) => {
            let truth = if b == Benchmark::ComfortSynth { comfort_synth()? } else { test_function(b.name())? };
            let kernel = fitted_kernel(&truth)?;
            (truth, kernel, TEST_FUNCTION_NORM_BOUND)
        }
    };
    let kernel = overrides.kernel.clone().unwrap_or(kernel);
    let norm_bound = overrides
        .norm_bound
        .unwrap_or(norm_bound * overrides.norm_scale.unwrap_or(1.0));
    let mut config = PopBoConfig::new(kernel, truth.domain.clone(), norm_bound);
    config.x0 = Some(truth.domain.sample_uniform(&mut stream_rng(seed, START_STREAM)));
    config.seed = seed;
    config.adapt_norm_bound = overrides.adapt_norm_bound;
    if let Some(v) = overrides.beta0 {
        config.beta0 = v;
    }
    if let Some(v) = overrides.lambda {
        config.lambda = v;
    }
    if let Some(v) = overrides.jitter {
        config.jitter = v;
    }
    if matches!(kind, InstanceKind::Function(Benchmark::ComfortSynth)) {
        config.labels = vec![
            crate::session::DimensionLabel { name: "Temperature".into(), unit: Some("°C".into()) },
            crate::session::DimensionLabel { name: "Air speed".into(), unit: Some("m/s".into()) },
        ];
    }
    config.validate()?;
    Ok(EpisodeSetup { seed, truth, config, report: kind.default_report() })
}

/// Metrics of one optimization step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: usize,
    pub x: Point,
    pub regret: f64,
    pub report_radius: f64,
    pub sigma: f64,
    pub t_star: usize,
    /// Suboptimality of the point selected by the episode's report rule.
    pub report_subopt: f64,
    pub t_star_subopt: f64,
    pub max_mle_subopt: f64,
    pub norm_bound: f64,
    /// Seconds spent on this step, excluding oracle and metric work.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub config_hash: String,
    pub report: ReportRule,
    pub steps: Vec<StepOutcome>,
}

/// An episode that failed part-way, with the steps completed so far.
#[derive(Debug, thiserror::Error)]
#[error("episode {} failed after {} steps: {source}", .partial.seed, .partial.steps.len())]
pub struct EpisodeFailure {
    pub partial: EpisodeTrace,
    #[source]
    pub source: Error,
}

/// Hex SHA-256 of the configuration's JSON form.
pub fn config_hash(config: &PopBoConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(config)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs `horizon` steps against a simulated oracle seeded from `seed`.
pub fn run_episode(
    config: &PopBoConfig,
    truth: &GroundTruth,
    horizon: usize,
    seed: u64,
    report: ReportRule,
) -> std::result::Result<EpisodeTrace, EpisodeFailure> {
    let mut trace = EpisodeTrace { seed, config_hash: String::new(), report, steps: Vec::new() };
    let fail = |trace: EpisodeTrace, source: Error| EpisodeFailure { partial: trace, source };
    if horizon == 0 {
        return Err(fail(trace, Error::Input("horizon must be at least 1".into())));
    }
    match config_hash(config) {
        Ok(h) => trace.config_hash = h,
        Err(e) => return Err(fail(trace, e)),
    }
    let mut session = match Session::new(config.clone()) {
        Ok(s) => s,
        Err(e) => return Err(fail(trace, e)),
    };
    let mut oracle = episode_oracle(truth, seed);
    for _ in 0..horizon {
        match step(&mut session, &mut oracle, truth, report) {
            Ok(outcome) => trace.steps.push(outcome),
            Err(e) => return Err(fail(trace, e)),
        }
    }
    Ok(trace)
}

fn step(
    session: &mut Session,
    oracle: &mut crate::instances::Oracle<'_>,
    truth: &GroundTruth,
    report: ReportRule,
) -> Result<StepOutcome> {
    let started = Instant::now();
    let duel = session.next_query()?;
    let mut wall_time = started.elapsed().as_secs_f64();
    let pref = oracle.compare(&duel.x, &duel.x_prime)?;
    let resumed = Instant::now();
    session.observe(pref)?;
    let rec = session.trace().last().cloned().ok_or_else(|| Error::Numerical("missing step record".into()))?;
    let t_star = session.report_t_star()?;
    let max_mle = session.report_max_mle()?;
    wall_time += resumed.elapsed().as_secs_f64();
    let t_star_subopt = truth.suboptimality(&t_star.x)?;
    let max_mle_subopt = truth.suboptimality(&max_mle)?;
    Ok(StepOutcome {
        t: rec.t,
        regret: truth.suboptimality(&rec.x)?,
        x: rec.x,
        report_radius: rec.report_radius,
        sigma: rec.sigma,
        t_star: t_star.t_star,
        report_subopt: match report {
            ReportRule::TStar => t_star_subopt,
            ReportRule::MaxMle => max_mle_subopt,
        },
        t_star_subopt,
        max_mle_subopt,
        norm_bound: session.norm_bound(),
        wall_time,
    })
}

/// Prefix sums of the instantaneous regret.
pub fn cumulative_regret(trace: &EpisodeTrace) -> Vec<f64> {
    cumulative(trace.steps.iter().map(|s| s.regret))
}

pub fn cumulative(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    values
        .into_iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Least-squares slope of `ln R_t` against `ln t` over `t > burn_in`, where
/// `curve[i]` is `R_{i+1}`.
pub fn loglog_slope(curve: &[f64], burn_in: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .skip(burn_in)
        .map(|(i, &r)| {
            if r > 0.0 && r.is_finite() {
                Ok((((i + 1) as f64).ln(), r.ln()))
            } else {
                Err(Error::Input(format!("curve value {r} at t = {} is not positive", i + 1)))
            }
        })
        .collect::<Result<_>>()?;
    if pts.len() < 2 {
        return Err(Error::Input("need at least two points after burn-in".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Per-step mean and sample standard deviation (divisor `n - 1`, zero for
/// a single series).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn mean_std(series: &[Vec<f64>]) -> Result<MeanStd> {
    let first = series.first().ok_or_else(|| Error::Input("nothing to aggregate".into()))?;
    let len = first.len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Input("series have different lengths".into()));
    }
    let n = series.len() as f64;
    let mean: Vec<f64> = (0..len).map(|t| series.iter().map(|s| s[t]).sum::<f64>() / n).collect();
    let std = (0..len)
        .map(|t| {
            if series.len() < 2 {
                0.0
            } else {
                (series.iter().map(|s| (s[t] - mean[t]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        })
        .collect();
    Ok(MeanStd { mean, std })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalStat {
    pub mean: f64,
    pub std: f64,
}

/// Run-level summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub cumulative_regret: MeanStd,
    pub report_subopt: MeanStd,
    pub final_cumulative_regret: FinalStat,
    pub final_report_subopt: FinalStat,
    pub final_t_star_subopt: FinalStat,
    pub final_max_mle_subopt: FinalStat,
    /// Log-log slope of the mean cumulative-regret curve; absent when the
    /// curve is not positive after burn-in.
    pub regret_slope: Option<f64>,
    pub burn_in: usize,
}

fn final_stat(series: &[Vec<f64>]) -> Result<FinalStat> {
    let last: Vec<Vec<f64>> = series.iter().map(|s| vec![*s.last().unwrap_or(&f64::NAN)]).collect();
    let ms = mean_std(&last)?;
    Ok(FinalStat { mean: ms.mean[0], std: ms.std[0] })
}

pub fn aggregate(traces: &[EpisodeTrace], burn_in: usize) -> Result<Summary> {
    let first = traces.first().ok_or_else(|| Error::Input("nothing to aggregate".into()))?;
    let horizon = first.steps.len();
    if traces.iter().any(|t| t.steps.len() != horizon) {
        return Err(Error::Input("episodes have different horizons".into()));
    }
    let regret: Vec<Vec<f64>> = traces.iter().map(cumulative_regret).collect();
    let column = |f: fn(&StepOutcome) -> f64| -> Vec<Vec<f64>> {
        traces.iter().map(|t| t.steps.iter().map(f).collect()).collect()
    };
    let report = column(|s| s.report_subopt);
    let cumulative_regret = mean_std(&regret)?;
    let regret_slope = loglog_slope(&cumulative_regret.mean, burn_in).ok();
    Ok(Summary {
        episodes: traces.len(),
        horizon,
        seeds: traces.iter().map(|t| t.seed).collect(),
        final_cumulative_regret: final_stat(&regret)?,
        final_report_subopt: final_stat(&report)?,
        final_t_star_subopt: final_stat(&column(|s| s.t_star_subopt))?,
        final_max_mle_subopt: final_stat(&column(|s| s.max_mle_subopt))?,
        cumulative_regret,
        report_subopt: mean_std(&report)?,
        regret_slope,
        burn_in,
    })
}

/// CSV with one row per step. Wall time is left out so that reruns produce
/// identical files.
pub fn episode_csv(trace: &EpisodeTrace) -> Result<String> {
    let dim = trace.steps.first().map_or(0, |s| s.x.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.extend(
        ["regret", "cum_regret", "report_radius", "t_star", "report_subopt", "t_star_subopt", "max_mle_subopt", "norm_bound"]
            .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    let cum = cumulative_regret(trace);
    for (s, c) in trace.steps.iter().zip(cum) {
        let mut row = vec![s.t.to_string()];
        row.extend(s.x.iter().map(|v| v.to_string()));
        row.extend([
            s.regret.to_string(),
            c.to_string(),
            s.report_radius.to_string(),
            s.t_star.to_string(),
            s.report_subopt.to_string(),
            s.t_star_subopt.to_string(),
            s.max_mle_subopt.to_string(),
            s.norm_bound.to_string(),
        ]);
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Inputs of one episode, enough to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub seed: u64,
    pub config: PopBoConfig,
    pub instance: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub instance: String,
    pub horizon: usize,
    pub base_seed: u64,
    pub report: ReportRule,
    pub overrides: ConfigOverrides,
    pub episodes: Vec<EpisodeManifest>,
}

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text)?;
        for e in &m.episodes {
            e.config.validate()?;
            e.instance.validate()?;
        }
        Ok(m)
    }
}

/// A benchmark run request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub instance: InstanceKind,
    pub episodes: usize,
    pub base_seed: u64,
    pub horizon: usize,
    pub burn_in: usize,
    pub overrides: ConfigOverrides,
}

/// Output of a completed run.
pub struct RunOutput {
    pub manifest: RunManifest,
    pub traces: Vec<EpisodeTrace>,
    pub summary: Summary,
}

/// Runs episodes `base_seed .. base_seed + episodes`. When `out_dir` is set,
/// each finished episode is written immediately, so a failure leaves the
/// completed episodes on disk.
pub fn run(spec: &RunSpec, run_id: &str, out_dir: Option<&Path>) -> std::result::Result<RunOutput, Error> {
    if spec.episodes == 0 {
        return Err(Error::Input("need at least one episode".into()));
    }
    let dir = out_dir.map(|d| d.join(run_id));
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    let mut manifest = RunManifest {
        run_id: run_id.into(),
        instance: spec.instance.to_string(),
        horizon: spec.horizon,
        base_seed: spec.base_seed,
        report: spec.instance.default_report(),
        overrides: spec.overrides.clone(),
        episodes: Vec::new(),
    };
    let mut traces = Vec::new();
    for i in 0..spec.episodes as u64 {
        let seed = spec.base_seed.wrapping_add(i);
        let setup = episode_setup(spec.instance, seed, &spec.overrides)?;
        manifest.episodes.push(EpisodeManifest { seed, config: setup.config.clone(), instance: setup.truth.clone() });
        if let Some(d) = &dir {
            write_json(&d.join("manifest.json"), &manifest)?;
        }
        let result = run_episode(&setup.config, &setup.truth, spec.horizon, seed, setup.report);
        let trace = match result {
            Ok(t) => t,
            Err(failure) => {
                if let Some(d) = &dir {
                    fs::write(episode_path(d, seed), episode_csv(&failure.partial)?)?;
                }
                return Err(Error::Numerical(failure.to_string()));
            }
        };
        if let Some(d) = &dir {
            fs::write(episode_path(d, seed), episode_csv(&trace)?)?;
        }
        log::info!(
            "episode {seed}: final cumulative regret {:.4}, report suboptimality {:.4}",
            cumulative_regret(&trace).last().unwrap_or(&0.0),
            trace.steps.last().map_or(0.0, |s| s.report_subopt)
        );
        traces.push(trace);
    }
    let summary = aggregate(&traces, spec.burn_in)?;
    if let Some(d) = &dir {
        write_json(&d.join("summary.json"), &summary)?;
    }
    Ok(RunOutput { manifest, traces, summary })
}

pub fn episode_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("episode_{seed}.csv"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
