use nalgebra::{DMatrix, DVector};

use super::barrier::{self, BarrierProblem};
use super::chain::ValueChain;
use super::{SolveReport, SolverOptions};
use crate::error::Result;

/// maximize loglik(Z) subject to Z^T P Z < B^2.
struct MleProblem<'a> {
    chain: &'a ValueChain,
    radius_sq: f64,
}

impl BarrierProblem for MleProblem<'_> {
    fn n_constraints(&self) -> usize {
        1
    }

    fn evaluate(&self, z: &DVector<f64>, g: &mut [f64]) -> f64 {
        g[0] = self.radius_sq - self.chain.quad(z.as_view());
        self.chain.log_likelihood(z.as_view())
    }

    fn newton_system(&self, z: &DVector<f64>, g: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let (_, grad_ll, q) = self.chain.derivatives(z.as_view());
        let slack = g[0];
        let p = self.chain.precision_mul(z.as_view());
        let grad = grad_ll * tau - &p * (2.0 / slack);
        let mut neg_hess = &self.chain.precision * (2.0 / slack);
        neg_hess.ger(4.0 / (slack * slack), &p, &p, 1.0);
        ValueChain::add_curvature(&mut neg_hess.as_view_mut(), &q, tau);
        (grad, neg_hess)
    }
}

pub(crate) fn solve(chain: &ValueChain, radius: f64, opts: &SolverOptions) -> Result<SolveReport> {
    let n = chain.n();
    let radius_sq = radius * radius;
    if chain.outcomes.is_empty() {
        return Ok(SolveReport {
            argmax: vec![0.0; n],
            objective: 0.0,
            iterations: 0,
            constraint_slack: radius_sq,
            converged: true,
        });
    }
    let problem = MleProblem { chain, radius_sq };
    let out = barrier::maximize(&problem, DVector::zeros(n), opts)?;
    Ok(SolveReport {
        argmax: out.u.as_slice().to_vec(),
        objective: out.objective,
        iterations: out.iterations,
        constraint_slack: out.constraints[0],
        converged: out.converged,
    })
}
