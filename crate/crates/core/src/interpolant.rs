//! Minimum-norm interpolation: the smallest-RKHS-norm function through given
//! `(point, value)` pairs, `f(x) = k(x)^T (K + jitter I)^{-1} values`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{cholesky, gram, KernelSpec, Point};

/// A kernel expansion `f(x) = sum_i coefficients[i] k(points[i], x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolant {
    pub kernel: KernelSpec,
    pub points: Vec<Point>,
    pub coefficients: Vec<f64>,
}

impl Interpolant {
    /// Fits the jittered minimum-norm interpolant through `values`.
    pub fn fit(kernel: &KernelSpec, points: Vec<Point>, values: &[f64], jitter: f64) -> Result<Self> {
        check_dim(points.len(), values.len())?;
        let k = gram(kernel, &points, jitter)?;
        let coefficients = cholesky(k)?.solve(&DVector::from_column_slice(values));
        Self::new(kernel.clone(), points, coefficients.as_slice().to_vec())
    }

    pub fn new(kernel: KernelSpec, points: Vec<Point>, coefficients: Vec<f64>) -> Result<Self> {
        kernel.validate()?;
        check_dim(points.len(), coefficients.len())?;
        if points.is_empty() {
            return Err(Error::Input("interpolant needs at least one point".into()));
        }
        for p in &points {
            check_dim(kernel.dim, p.len())?;
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("interpolant coefficients must be finite".into()));
        }
        Ok(Interpolant { kernel, points, coefficients })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.kernel.dim, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.coefficients)
            .map(|(p, c)| c * self.kernel.eval_unchecked(p, x))
            .sum()
    }

    /// Squared RKHS norm `a^T K a` of the expansion, without jitter.
    pub fn norm_sq(&self) -> f64 {
        let a = DVector::from_column_slice(&self.coefficients);
        let k = crate::kernel::gram_unchecked(&self.kernel, &self.points, 0.0);
        a.dot(&(k * &a)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_values_with_small_jitter() {
        let kernel = KernelSpec::squared_exponential(1.0, 0.7, 1);
        let points = vec![vec![0.0], vec![0.5], vec![2.0]];
        let f = Interpolant::fit(&kernel, points.clone(), &[1.0, -0.5, 2.0], 1e-10).unwrap();
        for (p, v) in points.iter().zip([1.0, -0.5, 2.0]) {
            assert!((f.eval(p).unwrap() - v).abs() < 1e-6);
        }
    }

    #[test]
    fn single_point_norm() {
        let kernel = KernelSpec::squared_exponential(4.0, 1.0, 1);
        let f = Interpolant::fit(&kernel, vec![vec![1.0]], &[2.0], 0.0).unwrap();
        // coefficient 0.5, norm^2 = 0.5 * 4 * 0.5
        assert!((f.norm_sq() - 1.0).abs() < 1e-12);
        assert!(f.eval(&[3.0]).unwrap().abs() < f.eval(&[1.0]).unwrap());
    }
}
