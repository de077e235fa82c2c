//! The chained likelihood together with the jittered Gram matrix of the
//! chain points, in value coordinates `Z = (z_0, ..., z_t)`.
//!
//! The ball constraint is `Z^T P Z <= B^2` with `P = (K + jitter I)^{-1}`.
//! The likelihood's negative Hessian is tridiagonal: comparison `i` adds
//! `q_i (e_{i+1} - e_i)(e_{i+1} - e_i)^T`.

use nalgebra::{DMatrix, DVector, DVectorView, DMatrixViewMut};

use crate::error::Result;
use crate::kernel::{cholesky, gram_unchecked, KernelSpec, Point};
use crate::likelihood::{accumulate_grad, log_likelihood_unchecked};

pub(crate) struct ValueChain {
    pub points: Vec<Point>,
    pub outcomes: Vec<bool>,
    /// `K + jitter I`.
    pub gram: DMatrix<f64>,
    /// Lower Cholesky factor of `gram`.
    pub l: DMatrix<f64>,
    /// `gram^{-1}`, used only to assemble Newton matrices. Constraint values
    /// and gradients go through `l`.
    pub precision: DMatrix<f64>,
}

impl ValueChain {
    pub fn new(kernel: &KernelSpec, points: Vec<Point>, outcomes: Vec<bool>, jitter: f64) -> Result<Self> {
        debug_assert_eq!(points.len(), outcomes.len() + 1);
        let gram = gram_unchecked(kernel, &points, jitter);
        let chol = cholesky(gram.clone())?;
        let mut precision = chol.inverse();
        precision = (&precision + precision.transpose()) * 0.5;
        Ok(ValueChain { points, outcomes, gram, l: chol.unpack(), precision })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// `L^{-1} Z`.
    fn whiten(&self, z: DVectorView<'_, f64>) -> DVector<f64> {
        let mut w = z.into_owned();
        self.l.solve_lower_triangular_mut(&mut w);
        w
    }

    /// `Z^T P Z`, through the Cholesky factor.
    pub fn quad(&self, z: DVectorView<'_, f64>) -> f64 {
        self.whiten(z).norm_squared()
    }

    /// `P Z`, through the Cholesky factor.
    pub fn precision_mul(&self, z: DVectorView<'_, f64>) -> DVector<f64> {
        let mut w = self.whiten(z);
        self.l.tr_solve_lower_triangular_mut(&mut w);
        w
    }

    pub fn log_likelihood(&self, z: DVectorView<'_, f64>) -> f64 {
        log_likelihood_unchecked(z.as_slice(), &self.outcomes)
    }

    /// Value, gradient and per-comparison curvature of the likelihood.
    pub fn derivatives(&self, z: DVectorView<'_, f64>) -> (f64, DVector<f64>, Vec<f64>) {
        let value = log_likelihood_unchecked(z.as_slice(), &self.outcomes);
        let mut grad = vec![0.0; self.n()];
        let mut q = vec![0.0; self.outcomes.len()];
        accumulate_grad(z.as_slice(), &self.outcomes, &mut grad, Some(&mut q));
        (value, DVector::from_vec(grad), q)
    }

    /// Adds `scale` times the likelihood's negative Hessian to `m`.
    pub fn add_curvature(m: &mut DMatrixViewMut<'_, f64>, q: &[f64], scale: f64) {
        for (i, qi) in q.iter().enumerate() {
            let s = qi * scale;
            m[(i, i)] += s;
            m[(i + 1, i + 1)] += s;
            m[(i, i + 1)] -= s;
            m[(i + 1, i)] -= s;
        }
    }
}
