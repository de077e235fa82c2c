//! The optimistic-advantage problem.
//!
//! For a candidate `x` with kernel column `k`, the bordered Gram matrix has
//! Schur complement `rho^2 = k(x, x) + jitter - k^T K^{-1} k`. Writing the
//! candidate value as `z = a^T Z + rho v` with `a = K^{-1} k`, the problem is
//!
//! ```text
//! maximize   (a - e_last)^T Z + rho v
//! subject to Z^T K^{-1} Z + v^2 <= B^2,   loglik(Z) >= loglik_mle - beta
//! ```
//!
//! Only `a` and `rho` depend on `x`. The feasible set is shared by every
//! candidate, so the advantage is its support function in the direction
//! `(a - e_last, rho)`.
//!
//! When `rho > 0` the ball is always active. The solver first tries the
//! ball-only maximizer, then a Newton solve of the KKT system with both
//! constraints active (warm-started from a nearby candidate), and falls back
//! to the barrier method. A KKT point with nonnegative multipliers is a
//! global maximizer since the problem is concave.
//!
//! The outer search over a candidate set is exact but prunes candidates with
//! a Lagrangian bound: for any multiplier `mu >= 0` and any reference point
//! `Z0` with likelihood gradient `g0`, concavity of the likelihood gives
//!
//! ```text
//! value(x) <= B sqrt(N + 2 mu (k - K e_last)^T g0 + mu^2 g0^T K g0)
//!             + mu (loglik(Z0) - g0^T Z0 - floor)
//! ```
//!
//! with `N = k(x, x) + jitter - 2 k(x, x_last) + K_last,last`. Candidates are
//! solved best-bound-first until no remaining bound can beat the best value.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::barrier::{self, BarrierProblem};
use super::chain::ValueChain;
use super::mle;
use super::{OuterSearch, SolveReport, SolverOptions};
use crate::domain::Domain;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{KernelSpec, Point};
use crate::likelihood::History;

/// Below this confidence width the likelihood constraint pins the values to
/// the maximum-likelihood solution.
const PINNED_BETA: f64 = 1e-12;

/// Values within this distance of the best are treated as ties.
const TIE_TOL: f64 = 1e-7;

const KKT_MAX_ITERATIONS: usize = 30;
/// Tolerances for accepting a KKT point, relative to the gradient scale, to
/// `B^2`, and to the likelihood floor. The ball residual is limited by the
/// conditioning of the Gram matrix.
const KKT_STATIONARITY_TOL: f64 = 1e-8;
const KKT_BALL_TOL: f64 = 1e-8;
const KKT_LIKELIHOOD_TOL: f64 = 1e-10;

struct CandidateGeometry {
    /// Kernel column against the chain points.
    k: DVector<f64>,
    /// `K^{-1} k - e_last`.
    d: DVector<f64>,
    rho: f64,
    /// `|d|^2` in the ball metric plus `rho^2`.
    norm_sq: f64,
}

/// Primal point and multipliers of the inner problem.
#[derive(Clone)]
struct KktPoint {
    z: DVector<f64>,
    v: f64,
    /// Ball multiplier.
    nu: f64,
    /// Likelihood multiplier.
    mu: f64,
}

struct InnerProblem<'a> {
    chain: &'a ValueChain,
    geo: &'a CandidateGeometry,
    radius_sq: f64,
    floor: f64,
}

impl BarrierProblem for InnerProblem<'_> {
    fn n_constraints(&self) -> usize {
        2
    }

    fn evaluate(&self, u: &DVector<f64>, g: &mut [f64]) -> f64 {
        let n = self.chain.n();
        let z = u.rows(0, n);
        let v = u[n];
        g[0] = self.radius_sq - self.chain.quad(z) - v * v;
        g[1] = self.chain.log_likelihood(z) - self.floor;
        self.geo.d.dot(&z) + self.geo.rho * v
    }

    fn newton_system(&self, u: &DVector<f64>, g: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.chain.n();
        let z = u.rows(0, n);
        let v = u[n];
        let (_, grad_ll, q) = self.chain.derivatives(z);
        let (s_ball, s_lik) = (g[0], g[1]);
        let p = self.chain.precision_mul(z);

        let mut grad = DVector::zeros(n + 1);
        grad.rows_mut(0, n)
            .copy_from(&(&self.geo.d * tau - &p * (2.0 / s_ball) + &grad_ll / s_lik));
        grad[n] = self.geo.rho * tau - 2.0 * v / s_ball;

        let mut neg_hess = DMatrix::zeros(n + 1, n + 1);
        {
            let mut block = neg_hess.view_mut((0, 0), (n, n));
            block += &self.chain.precision * (2.0 / s_ball);
            block.ger(1.0 / (s_lik * s_lik), &grad_ll, &grad_ll, 1.0);
            ValueChain::add_curvature(&mut block, &q, 1.0 / s_lik);
        }
        neg_hess[(n, n)] += 2.0 / s_ball;
        let mut ball_grad = DVector::zeros(n + 1);
        ball_grad.rows_mut(0, n).copy_from(&p);
        ball_grad[n] = v;
        neg_hess.ger(4.0 / (s_ball * s_ball), &ball_grad, &ball_grad, 1.0);
        (grad, neg_hess)
    }
}

/// Exact inner solution at one candidate.
struct InnerSolution {
    report: SolveReport,
    /// Present when the likelihood constraint is active.
    kkt: Option<KktPoint>,
    z: DVector<f64>,
}

/// Linearization of the likelihood at a feasible point, used for bounds.
struct Cut {
    /// Likelihood gradient.
    g: DVector<f64>,
    /// `(K g)_last`.
    kg_last: f64,
    /// `g^T K g`.
    gkg: f64,
    kappa: f64,
}

/// Everything the acquisition needs at one step: the history's Gram
/// factorization, the maximum-likelihood values, and the confidence width.
pub struct AcquisitionContext {
    kernel: KernelSpec,
    jitter: f64,
    radius: f64,
    beta: f64,
    ell_mle: f64,
    floor: f64,
    chain: ValueChain,
    z_mle: DVector<f64>,
    opts: SolverOptions,
}

impl AcquisitionContext {
    /// Builds the context from a maximum-likelihood solution for the same
    /// history (its `argmax` holds the values at `x_0..x_t`).
    pub fn new(
        history: &History,
        kernel: &KernelSpec,
        radius: f64,
        beta: f64,
        jitter: f64,
        mle: &SolveReport,
    ) -> Result<Self> {
        let chain = build_chain(history, kernel, jitter)?;
        check_dim(chain.n(), mle.argmax.len())?;
        let z_mle = DVector::from_column_slice(&mle.argmax);
        Self::assemble(kernel, jitter, radius, beta, mle.objective, chain, z_mle)
    }

    /// Builds the context when only the maximum-likelihood value is known;
    /// the maximizer is recomputed to obtain a feasible starting point.
    pub fn with_likelihood_level(
        history: &History,
        kernel: &KernelSpec,
        radius: f64,
        beta: f64,
        ell_mle: f64,
        jitter: f64,
    ) -> Result<Self> {
        super::check_radius(radius)?;
        let chain = build_chain(history, kernel, jitter)?;
        let report = mle::solve(&chain, radius, &SolverOptions::default())?;
        if ell_mle > report.objective + beta.max(0.0) + 1e-6 {
            return Err(Error::Input(format!(
                "likelihood level {ell_mle} exceeds the attainable maximum {}",
                report.objective
            )));
        }
        let z = DVector::from_vec(report.argmax);
        Self::assemble(kernel, jitter, radius, beta, ell_mle, chain, z)
    }

    fn assemble(
        kernel: &KernelSpec,
        jitter: f64,
        radius: f64,
        beta: f64,
        ell_mle: f64,
        chain: ValueChain,
        z_mle: DVector<f64>,
    ) -> Result<Self> {
        super::check_radius(radius)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Input(format!("confidence width must be nonnegative, got {beta}")));
        }
        Ok(AcquisitionContext {
            kernel: kernel.clone(),
            jitter,
            radius,
            beta,
            ell_mle,
            floor: ell_mle - beta,
            chain,
            z_mle,
            opts: SolverOptions::default(),
        })
    }

    fn radius_sq(&self) -> f64 {
        self.radius * self.radius
    }

    fn geometry(&self, x: &[f64]) -> Result<CandidateGeometry> {
        check_dim(self.kernel.dim, x.len())?;
        let n = self.chain.n();
        let k = self.kernel.column(&self.chain.points, x);
        let half = self
            .chain
            .l
            .solve_lower_triangular(&k)
            .ok_or_else(|| Error::Numerical("triangular solve failed for candidate".into()))?;
        let rho_sq = self.kernel.eval_unchecked(x, x) + self.jitter - half.norm_squared();
        let mut d = self
            .chain
            .l
            .tr_solve_lower_triangular(&half)
            .ok_or_else(|| Error::Numerical("triangular solve failed for candidate".into()))?;
        d[n - 1] -= 1.0;
        let rho = rho_sq.max(0.0).sqrt();
        let norm_sq = half.norm_squared() - 2.0 * k[n - 1] + self.chain.gram[(n - 1, n - 1)] + rho * rho;
        Ok(CandidateGeometry { k, d, rho, norm_sq: norm_sq.max(0.0) })
    }

    fn package(&self, geo: &CandidateGeometry, z: DVector<f64>, v: f64, iterations: usize, converged: bool) -> InnerSolution {
        let objective = geo.d.dot(&z) + geo.rho * v;
        let z_new = objective + z[z.len() - 1];
        let ball = self.radius_sq() - self.chain.quad(z.as_view()) - v * v;
        let lik = self.chain.log_likelihood(z.as_view()) - self.floor;
        let mut argmax = z.as_slice().to_vec();
        argmax.push(z_new);
        InnerSolution {
            report: SolveReport { argmax, objective, iterations, constraint_slack: ball.min(lik), converged },
            kkt: None,
            z,
        }
    }

    fn pinned_solution(&self, geo: &CandidateGeometry) -> InnerSolution {
        let z = self.z_mle.clone();
        let room = (self.radius_sq() - self.chain.quad(z.as_view())).max(0.0);
        self.package(geo, z, room.sqrt(), 1, true)
    }

    /// Maximizer over the ball alone, `B (k - K e_last, rho) / sqrt(N)`.
    fn ball_maximizer(&self, geo: &CandidateGeometry) -> (DVector<f64>, f64) {
        let n = self.chain.n();
        let norm = geo.norm_sq.sqrt();
        if norm == 0.0 {
            return (DVector::zeros(n), 0.0);
        }
        let scale = self.radius / norm;
        let z = (&geo.k - self.chain.gram.column(n - 1)) * scale;
        (z, geo.rho * scale)
    }

    /// Newton's method on the KKT conditions with both constraints active.
    /// Returns a point only if it satisfies the conditions with nonnegative
    /// multipliers.
    fn kkt_newton(&self, geo: &CandidateGeometry, start: &KktPoint) -> Option<(KktPoint, usize)> {
        let chain = &self.chain;
        let radius_sq = self.radius_sq();
        let mut pt = start.clone();
        for iter in 0..KKT_MAX_ITERATIONS {
            if pt.nu.is_nan() || pt.nu <= 0.0 {
                return None;
            }
            let p = chain.precision_mul(pt.z.as_view());
            let (ll, g, q) = chain.derivatives(pt.z.as_view());
            let r1 = &geo.d - &p * (2.0 * pt.nu) + &g * pt.mu;
            let r2 = geo.rho - 2.0 * pt.nu * pt.v;
            let r3 = radius_sq - pt.z.dot(&p) - pt.v * pt.v;
            let r4 = ll - self.floor;
            let scale = geo.d.amax() + 2.0 * pt.nu * p.amax() + pt.mu * g.amax() + geo.rho;
            let stationary = r1.amax().max(r2.abs()) <= KKT_STATIONARITY_TOL * scale.max(1.0);
            let feasible = r3.abs() <= KKT_BALL_TOL * radius_sq.max(1.0)
                && r4.abs() <= KKT_LIKELIHOOD_TOL * (1.0 + self.floor.abs());
            if stationary && feasible {
                return (pt.mu >= 0.0 && pt.v.is_finite()).then_some((pt, iter));
            }

            let mut a = &chain.precision * (2.0 * pt.nu);
            ValueChain::add_curvature(&mut a.as_view_mut(), &q, pt.mu.max(0.0));
            let chol = nalgebra::Cholesky::new(a)?;
            let ar = chol.solve(&r1);
            let ap = chol.solve(&p);
            let ag = chol.solve(&g);
            let m11 = 4.0 * p.dot(&ap) + 2.0 * pt.v * pt.v / pt.nu;
            let m12 = -2.0 * p.dot(&ag);
            let m22 = g.dot(&ag);
            let b1 = -r3 + 2.0 * p.dot(&ar) + pt.v * r2 / pt.nu;
            let b2 = -r4 - g.dot(&ar);
            let det = m11 * m22 - m12 * m12;
            if !det.is_finite() || det.abs() <= 1e-300 {
                return None;
            }
            let d_nu = (b1 * m22 - m12 * b2) / det;
            let d_mu = (m11 * b2 - m12 * b1) / det;
            let d_z = ar - ap * (2.0 * d_nu) + ag * d_mu;
            let d_v = (r2 - 2.0 * pt.v * d_nu) / (2.0 * pt.nu);
            pt.z += d_z;
            pt.v += d_v;
            pt.nu += d_nu;
            pt.mu += d_mu;
            if !(pt.z.iter().all(|v| v.is_finite()) && pt.v.is_finite() && pt.mu.is_finite()) {
                return None;
            }
        }
        None
    }

    fn barrier_solve(&self, geo: &CandidateGeometry) -> Result<InnerSolution> {
        let n = self.chain.n();
        // Shrink the maximum-likelihood point toward the origin until it is
        // strictly inside both constraints.
        let ll_mle = self.chain.log_likelihood(self.z_mle.as_view());
        let ll_origin = self.chain.log_likelihood(DVector::zeros(n).as_view());
        let mut shrink = (0.5 * self.beta / (ll_mle - ll_origin).max(1e-300)).min(0.5);
        let mut start = None;
        for _ in 0..60 {
            let z = &self.z_mle * (1.0 - shrink);
            if self.chain.log_likelihood(z.as_view()) > self.floor && self.chain.quad(z.as_view()) < self.radius_sq() {
                start = Some(z);
                break;
            }
            shrink *= 0.5;
        }
        let Some(z0) = start else {
            return Ok(self.pinned_solution(geo));
        };
        let room = self.radius_sq() - self.chain.quad(z0.as_view());
        let mut u0 = DVector::zeros(n + 1);
        u0.rows_mut(0, n).copy_from(&z0);
        u0[n] = 0.5 * room.sqrt();

        let problem = InnerProblem { chain: &self.chain, geo, radius_sq: self.radius_sq(), floor: self.floor };
        let out = barrier::maximize(&problem, u0, &self.opts)?;
        let z = out.u.rows(0, n).into_owned();
        let v = out.u[n];
        let estimate = KktPoint {
            z: z.clone(),
            v,
            nu: 1.0 / (out.tau * out.constraints[0]),
            mu: 1.0 / (out.tau * out.constraints[1]),
        };
        // Polish to the exact KKT point when possible.
        if let Some((pt, extra)) = self.kkt_newton(geo, &estimate) {
            let candidate = self.package(geo, pt.z.clone(), pt.v, out.iterations + extra, true);
            if candidate.report.objective >= out.objective - 1e-9 * (1.0 + out.objective.abs()) {
                return Ok(InnerSolution { kkt: Some(pt), ..candidate });
            }
        }
        let mut sol = self.package(geo, z, v, out.iterations, out.converged);
        sol.kkt = Some(estimate);
        Ok(sol)
    }

    fn solve_geometry(&self, geo: &CandidateGeometry, warm: Option<&KktPoint>) -> Result<InnerSolution> {
        let (z_ball, v_ball) = self.ball_maximizer(geo);
        if self.chain.outcomes.is_empty() {
            // No comparisons yet: only the ball constrains.
            return Ok(self.package(geo, z_ball, v_ball, 0, true));
        }
        let ll_mle = self.chain.log_likelihood(self.z_mle.as_view());
        if self.beta <= PINNED_BETA || ll_mle - self.floor <= PINNED_BETA {
            return Ok(self.pinned_solution(geo));
        }
        if self.chain.log_likelihood(z_ball.as_view()) >= self.floor {
            return Ok(self.package(geo, z_ball, v_ball, 0, true));
        }
        if geo.rho > 0.0 {
            if let Some((pt, iters)) = warm.and_then(|w| self.kkt_newton(geo, w)) {
                let mut sol = self.package(geo, pt.z.clone(), pt.v, iters, true);
                sol.kkt = Some(pt);
                return Ok(sol);
            }
        }
        self.barrier_solve(geo)
    }

    /// Solves the inner problem at `x`. The objective is the optimistic
    /// advantage `z - z_last`.
    pub fn solve(&self, x: &[f64]) -> Result<SolveReport> {
        let geo = self.geometry(x)?;
        Ok(self.solve_geometry(&geo, None)?.report)
    }

    /// Ball-only bound `B |(c, rho)|`: the advantage without the likelihood
    /// constraint.
    pub fn unconstrained_advantage(&self, x: &[f64]) -> Result<f64> {
        Ok(self.radius * self.geometry(x)?.norm_sq.sqrt())
    }

    fn cut_at(&self, z: &DVector<f64>) -> Cut {
        let n = self.chain.n();
        let (value, g, _) = self.chain.derivatives(z.as_view());
        let kg = &self.chain.gram * &g;
        Cut { kg_last: kg[n - 1], gkg: g.dot(&kg), kappa: value - g.dot(z) - self.floor, g }
    }

    /// Minimum over `mu >= 0` of the Lagrangian bound for one cut.
    fn bound(&self, norm_sq: f64, cg: f64, cut: &Cut) -> f64 {
        let r = self.radius;
        let at = |mu: f64| r * (norm_sq + 2.0 * mu * cg + mu * mu * cut.gkg).max(0.0).sqrt() + mu * cut.kappa;
        let mut best = at(0.0);
        let gap = r * r * cut.gkg - cut.kappa * cut.kappa;
        if cut.gkg > 0.0 && cut.kappa < 0.0 && gap > 0.0 {
            let disc = cg * cg - cut.gkg * (r * r * cg * cg - cut.kappa * cut.kappa * norm_sq) / gap;
            if disc >= 0.0 {
                let mu = (-cg + disc.sqrt()) / cut.gkg;
                if mu > 0.0 {
                    best = best.min(at(mu));
                }
            }
        }
        best
    }

    /// Exact argmax of the advantage over `candidates`, ties going to the
    /// lowest index. Returns `(index, advantage, exact solves performed)`.
    pub fn argmax_over(&self, candidates: &[Point]) -> Result<(usize, f64, usize)> {
        if candidates.is_empty() {
            return Err(Error::Input("no acquisition candidates".into()));
        }
        let geos = candidates.iter().map(|x| self.geometry(x)).collect::<Result<Vec<_>>>()?;
        let mut upper: Vec<f64> = geos.iter().map(|g| self.radius * g.norm_sq.sqrt()).collect();
        let mut solved: Vec<Option<f64>> = vec![None; candidates.len()];
        let mut warm: Vec<Option<KktPoint>> = vec![None; candidates.len()];

        let tighten = |cut: &Cut, upper: &mut [f64], solved: &[Option<f64>]| {
            for (j, geo) in geos.iter().enumerate() {
                if solved[j].is_none() {
                    let cg = geo.k.dot(&cut.g) - cut.kg_last;
                    let b = self.bound(geo.norm_sq, cg, cut);
                    if b < upper[j] {
                        upper[j] = b;
                    }
                }
            }
        };
        if !self.chain.outcomes.is_empty() {
            tighten(&self.cut_at(&self.z_mle), &mut upper, &solved);
        }

        let mut best = f64::NEG_INFINITY;
        let mut n_solved = 0;
        loop {
            let next = (0..candidates.len())
                .filter(|&j| solved[j].is_none())
                .fold(None, |acc: Option<usize>, j| match acc {
                    Some(i) if upper[i] >= upper[j] => Some(i),
                    _ => Some(j),
                });
            let Some(j) = next else { break };
            if upper[j] < best - TIE_TOL {
                break;
            }
            let nearest = (0..candidates.len())
                .filter(|&i| warm[i].is_some())
                .min_by_key(|&i| i.abs_diff(j));
            let sol = self.solve_geometry(&geos[j], nearest.and_then(|i| warm[i].as_ref()))?;
            n_solved += 1;
            let value = sol.report.objective;
            solved[j] = Some(value);
            best = best.max(value);
            if !self.chain.outcomes.is_empty() {
                tighten(&self.cut_at(&sol.z), &mut upper, &solved);
            }
            warm[j] = sol.kkt;
        }

        let (idx, value) = solved
            .iter()
            .enumerate()
            .filter_map(|(j, v)| v.map(|v| (j, v)))
            .find(|&(_, v)| v >= best - TIE_TOL)
            .ok_or_else(|| Error::Numerical("acquisition search solved no candidate".into()))?;
        Ok((idx, value, n_solved))
    }

    /// Outer maximization over the domain: a uniform grid for one and two
    /// dimensions, Latin-hypercube starts with coordinate refinement beyond.
    pub fn maximize<R: Rng + ?Sized>(&self, domain: &Domain, search: &OuterSearch, rng: &mut R) -> Result<(Point, f64)> {
        check_dim(self.kernel.dim, domain.dim())?;
        match domain.dim() {
            1 | 2 => {
                let per_dim = if domain.dim() == 1 { search.grid_1d } else { search.grid_2d };
                let grid = domain.grid(per_dim);
                let (idx, value, n_solved) = self.argmax_over(&grid)?;
                log::debug!("acquisition grid: {} candidates, {} exact solves", grid.len(), n_solved);
                Ok((grid[idx].clone(), value))
            }
            _ => crate::search::multistart(domain, search, rng, |x| Ok(self.solve(x)?.objective)),
        }
    }

    pub fn ell_mle(&self) -> f64 {
        self.ell_mle
    }
}

pub(crate) fn build_chain(history: &History, kernel: &KernelSpec, jitter: f64) -> Result<ValueChain> {
    history.validate(kernel.dim)?;
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::Input(format!("jitter must be nonnegative, got {jitter}")));
    }
    ValueChain::new(kernel, history.points(), history.outcomes(), jitter)
}
