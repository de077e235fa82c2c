//! The optimization loop: propose a comparison against the previous query,
//! ingest the answer, refit, and report a recommended point.
//!
//! A session is a deterministic function of its configuration and the
//! sequence of answers. Randomness used by the outer search at step `t` comes
//! from a generator keyed by `(seed, t)`, so no generator state needs to be
//! stored.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{check_dim, Error, Result};
use crate::interpolant::Interpolant;
use crate::kernel::{duel_sigma, Duel, KernelSpec, Point, DEFAULT_JITTER, DEFAULT_LAMBDA};
use crate::likelihood::History;
use crate::search;
use crate::solver::{solve_mle, AcquisitionContext, OuterSearch, SolveReport};

pub const CHECKPOINT_FORMAT: &str = "popbo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Doublings allowed over the lifetime of a session.
const MAX_DOUBLINGS: u32 = 16;

/// Stream offset separating report-search randomness from query randomness.
const REPORT_STREAM: u64 = 1 << 40;

/// Display name and unit for one input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionLabel {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

fn default_beta0() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_jitter() -> f64 {
    DEFAULT_JITTER
}
fn default_guard() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopBoConfig {
    pub kernel: KernelSpec,
    pub domain: Domain,
    /// Initial RKHS norm bound `B`.
    pub norm_bound: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Starting point; the domain center when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Point>,
    #[serde(default)]
    pub search: OuterSearch,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<DimensionLabel>,
    /// Double `B` when the data fit a larger ball much better.
    #[serde(default)]
    pub adapt_norm_bound: bool,
    #[serde(default = "default_guard")]
    pub guard_factor: f64,
}

impl PopBoConfig {
    pub fn new(kernel: KernelSpec, domain: Domain, norm_bound: f64) -> Self {
        PopBoConfig {
            kernel,
            domain,
            norm_bound,
            beta0: default_beta0(),
            lambda: default_lambda(),
            jitter: default_jitter(),
            x0: None,
            search: OuterSearch::default(),
            seed: 0,
            labels: Vec::new(),
            adapt_norm_bound: false,
            guard_factor: default_guard(),
        }
    }

    pub fn initial_point(&self) -> Point {
        self.x0.clone().unwrap_or_else(|| self.domain.center())
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        check_dim(self.kernel.dim, self.domain.dim())?;
        for (name, v) in [
            ("norm_bound", self.norm_bound),
            ("beta0", self.beta0),
            ("lambda", self.lambda),
            ("jitter", self.jitter),
            ("guard_factor", self.guard_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        self.domain.check(&self.initial_point())?;
        if !self.labels.is_empty() {
            check_dim(self.domain.dim(), self.labels.len())?;
        }
        if self.search.grid_1d == 0 || self.search.grid_2d == 0 || self.search.lhs_starts == 0 {
            return Err(Error::Input("search sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Confidence width at step `t`: `beta0 * sqrt(t)`.
pub fn beta1(t: usize, beta0: f64) -> f64 {
    beta0 * (t as f64).sqrt()
}

/// Report radius `2 (2B + lambda^{-1/2} sqrt(beta)) sigma`.
pub fn report_radius(norm_bound: f64, lambda: f64, beta: f64, sigma: f64) -> f64 {
    2.0 * (2.0 * norm_bound + beta.sqrt() / lambda.sqrt()) * sigma
}

/// A proposed comparison awaiting an answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingDuel {
    pub t: usize,
    pub x: Point,
    pub x_prime: Point,
    pub advantage: f64,
    pub beta: f64,
    pub norm_bound: f64,
    /// Uncertainty of `(x, x_prime)` given the comparisons before step `t`.
    pub sigma: f64,
    pub report_radius: f64,
}

/// One resolved step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub x: Point,
    pub x_prime: Point,
    pub pref: u8,
    pub advantage: f64,
    pub beta: f64,
    pub norm_bound: f64,
    pub sigma: f64,
    pub report_radius: f64,
    /// Maximum log-likelihood after ingesting this answer.
    pub ell_mle: f64,
    /// Whether the norm bound was doubled after this step.
    #[serde(default)]
    pub doubled: bool,
}

/// Recommended point by smallest report radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub t_star: usize,
    pub x: Point,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: PopBoConfig,
    pub history: History,
    pub norm_bound: f64,
    pub trace: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingDuel>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                cp.format, cp.version
            )));
        }
        Ok(cp)
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    config: PopBoConfig,
    history: History,
    mle: SolveReport,
    norm_bound: f64,
    doublings: u32,
    pending: Option<PendingDuel>,
    trace: Vec<StepRecord>,
}

impl Session {
    pub fn new(config: PopBoConfig) -> Result<Self> {
        config.validate()?;
        let history = History::new(config.initial_point());
        let mle = solve_mle(&history, &config.kernel, config.norm_bound, config.jitter)?;
        Ok(Session {
            norm_bound: config.norm_bound,
            config,
            history,
            mle,
            doublings: 0,
            pending: None,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &PopBoConfig {
        &self.config
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn mle(&self) -> &SolveReport {
        &self.mle
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// Number of answered comparisons.
    pub fn t(&self) -> usize {
        self.history.len()
    }

    pub fn pending(&self) -> Option<&PendingDuel> {
        self.pending.as_ref()
    }

    pub fn trace(&self) -> &[StepRecord] {
        &self.trace
    }

    fn step_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(stream);
        rng
    }

    /// Proposes the next comparison `(x_t, x_{t-1})`.
    pub fn next_query(&mut self) -> Result<Duel> {
        if self.pending.is_some() {
            return Err(Error::Protocol("a comparison is already pending".into()));
        }
        let t = self.t() + 1;
        let beta = beta1(t, self.config.beta0);
        let cfg = &self.config;
        let ctx = AcquisitionContext::new(&self.history, &cfg.kernel, self.norm_bound, beta, cfg.jitter, &self.mle)?;
        let mut rng = self.step_rng(t as u64);
        let (x, advantage) = ctx.maximize(&cfg.domain, &cfg.search, &mut rng)?;
        let x_prime = self.history.last_point().clone();
        let duel = Duel::new(x.clone(), x_prime.clone());
        let sigma = duel_sigma(&cfg.kernel, &self.history.duels(), cfg.lambda, &duel)?;
        self.pending = Some(PendingDuel {
            t,
            x,
            x_prime,
            advantage,
            beta,
            norm_bound: self.norm_bound,
            sigma,
            report_radius: report_radius(self.norm_bound, cfg.lambda, beta, sigma),
        });
        Ok(duel)
    }

    /// The pending comparison, proposing one first if needed.
    pub fn current_duel(&mut self) -> Result<&PendingDuel> {
        if self.pending.is_none() {
            self.next_query()?;
        }
        self.pending
            .as_ref()
            .ok_or_else(|| Error::Protocol("no pending comparison".into()))
    }

    /// Records the answer to the pending comparison; `pref == true` means
    /// the new query `x_t` won.
    pub fn observe(&mut self, pref: bool) -> Result<()> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("no pending comparison to answer".into()))?;
        self.history.push(pending.x.clone(), pref);
        match solve_mle(&self.history, &self.config.kernel, self.norm_bound, self.config.jitter) {
            Ok(mle) => self.mle = mle,
            Err(e) => {
                self.history.records.pop();
                self.pending = Some(pending);
                return Err(e);
            }
        }
        if !self.mle.converged {
            log::warn!("likelihood fit at step {} did not fully converge", pending.t);
        }
        self.trace.push(StepRecord {
            t: pending.t,
            x: pending.x,
            x_prime: pending.x_prime,
            pref: u8::from(pref),
            advantage: pending.advantage,
            beta: pending.beta,
            norm_bound: pending.norm_bound,
            sigma: pending.sigma,
            report_radius: pending.report_radius,
            ell_mle: self.mle.objective,
            doubled: false,
        });
        if self.config.adapt_norm_bound && self.adapt_norm_bound()? {
            if let Some(last) = self.trace.last_mut() {
                last.doubled = true;
            }
        }
        Ok(())
    }

    /// Compares the best fit inside the current ball with the best fit inside
    /// a ball twice as large. If the larger ball explains the answers better
    /// by more than `guard_factor` confidence widths, the current bound is
    /// implausible and `B` is doubled. Returns whether it was.
    pub fn adapt_norm_bound(&mut self) -> Result<bool> {
        let t = self.t();
        if t == 0 || self.doublings >= MAX_DOUBLINGS {
            return Ok(false);
        }
        let cfg = &self.config;
        let wider = solve_mle(&self.history, &cfg.kernel, 2.0 * self.norm_bound, cfg.jitter)?;
        let gain = wider.objective - self.mle.objective;
        if gain <= cfg.guard_factor * beta1(t, cfg.beta0) {
            return Ok(false);
        }
        log::info!(
            "doubling norm bound {} -> {} at t = {t} (likelihood gain {gain:.3})",
            self.norm_bound,
            2.0 * self.norm_bound
        );
        self.norm_bound *= 2.0;
        self.doublings += 1;
        self.mle = wider;
        self.pending = None;
        Ok(true)
    }

    /// The past query with the smallest report radius; ties go to the
    /// earliest step.
    pub fn report_t_star(&self) -> Result<RadiusReport> {
        let first = self
            .trace
            .first()
            .ok_or_else(|| Error::Protocol("no answered comparisons to report from".into()))?;
        let best = self.trace.iter().fold(first, |best, s| {
            if s.report_radius < best.report_radius {
                s
            } else {
                best
            }
        });
        Ok(RadiusReport { t_star: best.t, x: best.x.clone(), radius: best.report_radius })
    }

    /// Maximizer of the minimum-norm interpolant through the fitted values.
    pub fn max_mle_interpolant(&self) -> Result<Interpolant> {
        Interpolant::fit(&self.config.kernel, self.history.points(), &self.mle.argmax, self.config.jitter)
    }

    /// Argmax of the maximum-likelihood function over the domain; `x_0`
    /// before any comparison.
    pub fn report_max_mle(&self) -> Result<Point> {
        if self.t() == 0 {
            return Ok(self.history.x0.clone());
        }
        let f = self.max_mle_interpolant()?;
        let mut rng = self.step_rng(REPORT_STREAM + self.t() as u64);
        let (x, _) = search::maximize(&self.config.domain, &self.config.search, &mut rng, |x| Ok(f.eval_unchecked(x)))?;
        Ok(x)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            history: self.history.clone(),
            norm_bound: self.norm_bound,
            trace: self.trace.clone(),
            pending: self.pending.clone(),
        }
    }

    /// Runs a fresh session through the given answers.
    pub fn replay(config: PopBoConfig, prefs: &[bool]) -> Result<Self> {
        let mut session = Session::new(config)?;
        for &p in prefs {
            session.next_query()?;
            session.observe(p)?;
        }
        Ok(session)
    }

    /// Rebuilds a session by replaying the checkpoint's answers and checks
    /// that every recomputed query, trace entry and pending comparison is
    /// bit-identical to the stored one.
    pub fn restore(cp: &Checkpoint) -> Result<Self> {
        cp.config.validate()?;
        cp.history.validate(cp.config.kernel.dim)?;
        if cp.history.x0 != cp.config.initial_point() {
            return Err(Error::Checkpoint("history starts from a different point than the config".into()));
        }
        if cp.trace.len() != cp.history.len() {
            return Err(Error::Checkpoint(format!(
                "trace has {} steps but history has {}",
                cp.trace.len(),
                cp.history.len()
            )));
        }
        let prefs = cp.history.outcomes();
        let session = Session::replay(cp.config.clone(), &prefs)?;
        if session.history != cp.history {
            return Err(Error::Checkpoint("replayed queries differ from the stored history".into()));
        }
        if session.trace != cp.trace {
            return Err(Error::Checkpoint("replayed trace differs from the stored trace".into()));
        }
        if session.norm_bound != cp.norm_bound {
            return Err(Error::Checkpoint("replayed norm bound differs".into()));
        }
        let mut session = session;
        if let Some(stored) = &cp.pending {
            session.next_query()?;
            if session.pending.as_ref() != Some(stored) {
                return Err(Error::Checkpoint("replayed pending comparison differs".into()));
            }
        }
        Ok(session)
    }
}
