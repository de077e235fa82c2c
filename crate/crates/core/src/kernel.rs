//! Kernel evaluation, jittered Gram matrices, and the additive duel kernel.
//!
//! The duel kernel acts on ordered pairs `(x, x')` and is the sum of the base
//! kernel applied to the first and to the second components. Its regularized
//! posterior variance, [`duel_sigma`], measures how uncertain a new comparison
//! is given the comparisons already made.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Default diagonal jitter added to Gram matrices before factorization.
pub const DEFAULT_JITTER: f64 = 1e-6;

/// Default regularization for the duel-wise uncertainty.
pub const DEFAULT_LAMBDA: f64 = 1.0;

pub type Point = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Se,
    Matern,
}

/// Kernel family plus hyperparameters.
///
/// Serialized as a flat JSON object
/// `{"family", "variance", "lengthscale", "nu", "rho", "dim"}`. Fields that do
/// not apply to a family are still carried so that a spec round-trips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscale: f64,
    pub nu: f64,
    pub rho: f64,
    pub dim: usize,
}

#[derive(Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    #[serde(default = "one")]
    variance: f64,
    #[serde(default = "one")]
    lengthscale: f64,
    #[serde(default = "two_and_half")]
    nu: f64,
    #[serde(default = "one")]
    rho: f64,
    dim: usize,
}

fn one() -> f64 {
    1.0
}

fn two_and_half() -> f64 {
    2.5
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        let spec = KernelSpec {
            family: raw.family,
            variance: raw.variance,
            lengthscale: raw.lengthscale,
            nu: raw.nu,
            rho: raw.rho,
            dim: raw.dim,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl KernelSpec {
    pub fn linear(dim: usize) -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            variance: 1.0,
            lengthscale: 1.0,
            nu: 2.5,
            rho: 1.0,
            dim,
        }
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64, dim: usize) -> Self {
        KernelSpec {
            family: KernelFamily::Se,
            variance,
            lengthscale,
            nu: 2.5,
            rho: 1.0,
            dim,
        }
    }

    pub fn matern(nu: f64, rho: f64, dim: usize) -> Self {
        KernelSpec {
            family: KernelFamily::Matern,
            variance: 1.0,
            lengthscale: 1.0,
            nu,
            rho,
            dim,
        }
    }

    /// Checks hyperparameters. Variances above one are accepted with a warning
    /// since the bound `k(x, x) <= 1` is then violated.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Input("kernel dimension must be positive".into()));
        }
        for (name, v) in [
            ("variance", self.variance),
            ("lengthscale", self.lengthscale),
            ("nu", self.nu),
            ("rho", self.rho),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Input(format!("kernel {name} must be positive, got {v}")));
            }
        }
        if self.family == KernelFamily::Matern && matern_order(self.nu).is_none() {
            return Err(Error::Input(format!(
                "matern nu must be one of 0.5, 1.5, 2.5, got {}",
                self.nu
            )));
        }
        if self.family == KernelFamily::Se && self.variance > 1.0 {
            static WARNED: std::sync::Once = std::sync::Once::new();
            WARNED.call_once(|| {
                log::warn!(
                    "squared-exponential variance {} exceeds 1; k(x, x) <= 1 does not hold",
                    self.variance
                )
            });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Evaluates `k(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelFamily::Se => {
                let r2 = sq_dist(x, y);
                self.variance * (-r2 / (self.lengthscale * self.lengthscale)).exp()
            }
            KernelFamily::Matern => {
                let r = sq_dist(x, y).sqrt();
                // validated at construction
                let order = matern_order(self.nu).unwrap_or(2);
                matern_half_integer(order, r / self.rho)
            }
        }
    }

    /// Largest value of `k(x, x)` for this family when it does not depend on
    /// `x`, `None` for the linear kernel.
    pub fn stationary_variance(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Linear => None,
            KernelFamily::Se => Some(self.variance),
            KernelFamily::Matern => Some(1.0),
        }
    }

    /// Evaluates the kernel between `x` and every point in `points`.
    pub fn column(&self, points: &[Point], x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(points.len(), points.iter().map(|p| self.eval_unchecked(p, x)))
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Maps nu in {1/2, 3/2, 5/2} to 0, 1, 2.
fn matern_order(nu: f64) -> Option<u8> {
    [0.5, 1.5, 2.5]
        .iter()
        .position(|&v| (nu - v).abs() < 1e-12)
        .map(|p| p as u8)
}

/// Closed-form Matérn correlation for half-integer smoothness, `u = r / rho`.
fn matern_half_integer(order: u8, u: f64) -> f64 {
    match order {
        0 => (-u).exp(),
        1 => {
            let a = 3f64.sqrt() * u;
            (1.0 + a) * (-a).exp()
        }
        _ => {
            let a = 5f64.sqrt() * u;
            (1.0 + a + a * a / 3.0) * (-a).exp()
        }
    }
}

/// An ordered pair of points submitted for comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Duel {
    pub x: Point,
    pub x_prime: Point,
}

impl Duel {
    pub fn new(x: Point, x_prime: Point) -> Self {
        Duel { x, x_prime }
    }
}

/// Returns `K + jitter * I` for the given points.
pub fn gram(spec: &KernelSpec, points: &[Point], jitter: f64) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::Input("gram matrix needs at least one point".into()));
    }
    if jitter.is_nan() || jitter < 0.0 {
        return Err(Error::Input(format!("jitter must be nonnegative, got {jitter}")));
    }
    for p in points {
        check_dim(spec.dim, p.len())?;
    }
    Ok(gram_unchecked(spec, points, jitter))
}

pub(crate) fn gram_unchecked(spec: &KernelSpec, points: &[Point], jitter: f64) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += jitter;
    }
    k
}

/// Cholesky factorization; on failure reports the smallest eigenvalue.
pub fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let min_eigenvalue = if m.iter().all(|v| v.is_finite()) {
                m.symmetric_eigenvalues().min()
            } else {
                f64::NAN
            };
            Err(Error::NotPositiveDefinite { min_eigenvalue })
        }
    }
}

/// `k(x, x̄) + k(x', x̄')`.
pub fn duel_kernel(spec: &KernelSpec, a: &Duel, b: &Duel) -> Result<f64> {
    Ok(spec.eval(&a.x, &b.x)? + spec.eval(&a.x_prime, &b.x_prime)?)
}

fn duel_kernel_unchecked(spec: &KernelSpec, a: &Duel, b: &Duel) -> f64 {
    spec.eval_unchecked(&a.x, &b.x) + spec.eval_unchecked(&a.x_prime, &b.x_prime)
}

/// Gram matrix of the duel kernel over `duels` (no regularization added).
pub fn duel_gram(spec: &KernelSpec, duels: &[Duel]) -> Result<DMatrix<f64>> {
    for d in duels {
        check_dim(spec.dim, d.x.len())?;
        check_dim(spec.dim, d.x_prime.len())?;
    }
    let n = duels.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = duel_kernel_unchecked(spec, &duels[i], &duels[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Regularized uncertainty of a comparison `omega` given the comparisons in
/// `past`:
///
/// ```text
/// sigma^2 = k(w, w) - k(past, w)^T (K_past + lambda I)^{-1} k(past, w)
/// ```
///
/// Round-off negatives are clamped to zero.
pub fn duel_sigma(spec: &KernelSpec, past: &[Duel], lambda: f64, omega: &Duel) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Input(format!("lambda must be positive, got {lambda}")));
    }
    check_dim(spec.dim, omega.x.len())?;
    check_dim(spec.dim, omega.x_prime.len())?;
    let prior = duel_kernel_unchecked(spec, omega, omega);
    if past.is_empty() {
        return Ok(prior.max(0.0).sqrt());
    }
    let mut k = duel_gram(spec, past)?;
    for i in 0..past.len() {
        k[(i, i)] += lambda;
    }
    let chol = cholesky(k)?;
    let cross = DVector::from_iterator(
        past.len(),
        past.iter().map(|d| duel_kernel_unchecked(spec, d, omega)),
    );
    let v = chol.l().solve_lower_triangular(&cross).ok_or_else(|| {
        Error::Numerical("triangular solve failed in duel_sigma".into())
    })?;
    Ok((prior - v.norm_squared()).max(0.0).sqrt())
}
