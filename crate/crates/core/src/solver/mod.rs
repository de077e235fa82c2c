//! Constrained concave maximization for the two finite-dimensional problems
//! the optimizer solves every step: the maximum-likelihood values inside the
//! RKHS ball, and the optimistic advantage of a candidate point over the
//! last query.

mod acquisition;
mod barrier;
mod chain;
mod mle;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use acquisition::AcquisitionContext;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Point};
use crate::likelihood::History;

/// Result of one constrained solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Maximizing function values: `z_0..z_t` for the likelihood problem,
    /// `z_0..z_t` followed by the candidate value for the advantage problem.
    pub argmax: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Smallest constraint slack at `argmax`; nonnegative when feasible.
    pub constraint_slack: f64,
    pub converged: bool,
}

/// Interior-point settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the barrier duality gap is below `gap_tol * (1 + |objective|)`.
    pub gap_tol: f64,
    /// Centering stops when half the squared Newton decrement drops below
    /// this, relative to the barrier weight and objective scale.
    pub newton_tol: f64,
    /// Total Newton iterations across all rounds.
    pub max_iterations: usize,
    /// Number of barrier-weight increases.
    pub max_outer_rounds: usize,
    pub initial_barrier_weight: f64,
    pub barrier_growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-9,
            newton_tol: 1e-10,
            max_iterations: 500,
            max_outer_rounds: 20,
            initial_barrier_weight: 1.0,
            barrier_growth: 20.0,
        }
    }
}

/// How the acquisition is maximized over the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterSearch {
    pub grid_1d: usize,
    pub grid_2d: usize,
    pub lhs_starts: usize,
    /// Acquisition evaluations per start during coordinate refinement.
    pub refine_steps: usize,
}

impl Default for OuterSearch {
    fn default() -> Self {
        OuterSearch { grid_1d: 101, grid_2d: 41, lhs_starts: 32, refine_steps: 50 }
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("norm bound must be positive, got {radius}")))
    }
}

/// Maximum-likelihood values `z_0..z_t` over functions with RKHS norm at most
/// `radius`.
pub fn solve_mle(history: &History, kernel: &KernelSpec, radius: f64, jitter: f64) -> Result<SolveReport> {
    check_radius(radius)?;
    let chain = acquisition::build_chain(history, kernel, jitter)?;
    mle::solve(&chain, radius, &SolverOptions::default())
}

/// Optimistic advantage of `x` over the last query among functions in the
/// ball whose likelihood is within `beta` of `ell_mle`.
pub fn solve_acquisition_inner(
    x: &[f64],
    history: &History,
    kernel: &KernelSpec,
    radius: f64,
    beta: f64,
    ell_mle: f64,
    jitter: f64,
) -> Result<SolveReport> {
    AcquisitionContext::with_likelihood_level(history, kernel, radius, beta, ell_mle, jitter)?.solve(x)
}

/// Next query point and its advantage.
#[allow(clippy::too_many_arguments)]
pub fn maximize_acquisition<R: Rng + ?Sized>(
    domain: &Domain,
    history: &History,
    kernel: &KernelSpec,
    radius: f64,
    beta: f64,
    ell_mle: f64,
    jitter: f64,
    search: &OuterSearch,
    rng: &mut R,
) -> Result<(Point, f64)> {
    AcquisitionContext::with_likelihood_level(history, kernel, radius, beta, ell_mle, jitter)?
        .maximize(domain, search, rng)
}

