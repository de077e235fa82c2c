//! Log-barrier interior-point method for smooth concave maximization with a
//! handful of smooth concave inequality constraints `g_i(u) > 0`.

use nalgebra::{DMatrix, DVector};

use super::SolverOptions;
use crate::error::{Error, Result};

pub(crate) trait BarrierProblem {
    fn n_constraints(&self) -> usize;

    /// Returns the objective and writes the constraint values into `g`.
    fn evaluate(&self, u: &DVector<f64>, g: &mut [f64]) -> f64;

    /// Gradient and negated Hessian of `tau * f0(u) + sum_i ln g_i(u)`.
    fn newton_system(&self, u: &DVector<f64>, g: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>);
}

#[derive(Debug)]
pub(crate) struct BarrierOutcome {
    pub u: DVector<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final barrier weight; `1 / (tau g_i)` estimates the multipliers.
    pub tau: f64,
}

fn phi(objective: f64, g: &[f64], tau: f64) -> f64 {
    tau * objective + g.iter().map(|v| v.ln()).sum::<f64>()
}

fn strictly_feasible(g: &[f64]) -> bool {
    g.iter().all(|v| *v > 0.0 && v.is_finite())
}

/// Solves `neg_hess * d = grad`, adding a growing ridge if the matrix is not
/// numerically positive definite.
fn newton_direction(mut neg_hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = neg_hess.diagonal().amax().max(1.0);
    let mut ridge = 0.0;
    for _ in 0..8 {
        if let Some(chol) = nalgebra::Cholesky::new(neg_hess.clone()) {
            return Some(chol.solve(grad));
        }
        let next = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
        for i in 0..neg_hess.nrows() {
            neg_hess[(i, i)] += next - ridge;
        }
        ridge = next;
    }
    None
}

pub(crate) fn maximize<P: BarrierProblem>(
    problem: &P,
    start: DVector<f64>,
    opts: &SolverOptions,
) -> Result<BarrierOutcome> {
    let m = problem.n_constraints();
    let mut g = vec![0.0; m];
    let mut g_trial = vec![0.0; m];
    let mut u = start;
    let mut objective = problem.evaluate(&u, &mut g);
    if !strictly_feasible(&g) || !objective.is_finite() {
        return Err(Error::Numerical("barrier start point is not strictly feasible".into()));
    }

    let mut tau = opts.initial_barrier_weight;
    let mut iterations = 0;
    let mut converged = false;

    'outer: for _ in 0..opts.max_outer_rounds {
        loop {
            if iterations >= opts.max_iterations {
                break 'outer;
            }
            iterations += 1;
            let (grad, neg_hess) = problem.newton_system(&u, &g, tau);
            let Some(dir) = newton_direction(neg_hess, &grad) else {
                break 'outer;
            };
            let decrement = grad.dot(&dir);
                if !decrement.is_finite() {
                break 'outer;
            }
            // Half the squared decrement bounds the centering error of
            // `phi`, which is `tau` times the objective scale.
            if decrement <= 2.0 * opts.newton_tol * tau * (1.0 + objective.abs()) {
                break;
            }

            let current = phi(objective, &g, tau);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &u + &dir * step;
                let f = problem.evaluate(&trial, &mut g_trial);
                if strictly_feasible(&g_trial)
                    && f.is_finite()
                    && phi(f, &g_trial, tau) - current >= 0.25 * step * decrement
                {
                    u = trial;
                    objective = f;
                    g.copy_from_slice(&g_trial);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No ascent possible at working precision: the point is as
                // centered as it will get.
                break;
            }
        }

        let gap = m as f64 / tau;
        if gap <= opts.gap_tol * (1.0 + objective.abs()) {
            converged = true;
            break;
        }
        tau *= opts.barrier_growth;
    }

    Ok(BarrierOutcome { u, objective, constraints: g, iterations, converged, tau })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// maximize a^T u subject to 1 - |u|^2 > 0; optimum |a| at a / |a|.
    struct LinearOverBall {
        a: DVector<f64>,
    }

    impl BarrierProblem for LinearOverBall {
        fn n_constraints(&self) -> usize {
            1
        }

        fn evaluate(&self, u: &DVector<f64>, g: &mut [f64]) -> f64 {
            g[0] = 1.0 - u.norm_squared();
            self.a.dot(u)
        }

        fn newton_system(&self, u: &DVector<f64>, g: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
            let n = u.len();
            let grad = &self.a * tau - u * (2.0 / g[0]);
            let neg_hess = DMatrix::identity(n, n) * (2.0 / g[0]) + (u * u.transpose()) * (4.0 / (g[0] * g[0]));
            (grad, neg_hess)
        }
    }

    #[test]
    fn linear_objective_over_unit_ball() {
        let p = LinearOverBall { a: DVector::from_vec(vec![3.0, -4.0]) };
        let out = maximize(&p, DVector::zeros(2), &SolverOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.objective - 5.0).abs() < 1e-6, "{}", out.objective);
        assert!(out.constraints[0] > 0.0);
    }

    #[test]
    fn infeasible_start_is_an_error() {
        let p = LinearOverBall { a: DVector::from_vec(vec![1.0]) };
        assert!(maximize(&p, DVector::from_vec(vec![2.0]), &SolverOptions::default()).is_err());
    }
}
