//! Ground-truth objectives and simulated comparison oracles.
//!
//! Every ground truth serializes to a manifest from which it can be rebuilt
//! exactly: GP samples store their knots, values and expansion coefficients,
//! test functions store their name and normalization scale.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{check_dim, Error, Result};
use crate::interpolant::Interpolant;
use crate::kernel::{cholesky, gram, KernelSpec, Point};
use crate::preference::{btl_prob, sample_preference};
use crate::search::argmax_index;

/// Norm bound used for the normalized test functions.
pub const TEST_FUNCTION_NORM_BOUND: f64 = 6.0;

/// GP instances get a norm bound this much larger than the true norm.
pub const GP_NORM_MARGIN: f64 = 1.1;

/// Closed-form benchmark objectives. All but the comfort model are
/// minimization problems in their usual form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Beale,
    Branin,
    Bukin,
    CrossInTray,
    Eggholder,
    HolderTable,
    Levy13,
    ComfortSynth,
}

impl Benchmark {
    pub const TEST_FUNCTIONS: [Benchmark; 7] = [
        Benchmark::Beale,
        Benchmark::Branin,
        Benchmark::Bukin,
        Benchmark::CrossInTray,
        Benchmark::Eggholder,
        Benchmark::HolderTable,
        Benchmark::Levy13,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Beale => "beale",
            Benchmark::Branin => "branin",
            Benchmark::Bukin => "bukin",
            Benchmark::CrossInTray => "cross_in_tray",
            Benchmark::Eggholder => "eggholder",
            Benchmark::HolderTable => "holder_table",
            Benchmark::Levy13 => "levy13",
            Benchmark::ComfortSynth => "comfort_synth",
        }
    }

    pub fn domain(self) -> Domain {
        let b = match self {
            Benchmark::Beale => vec![[-4.5, 4.5], [-4.5, 4.5]],
            Benchmark::Branin => vec![[-5.0, 10.0], [0.0, 15.0]],
            Benchmark::Bukin => vec![[-15.0, -5.0], [-3.0, 3.0]],
            Benchmark::CrossInTray | Benchmark::HolderTable | Benchmark::Levy13 => vec![[-10.0, 10.0]; 2],
            Benchmark::Eggholder => vec![[-512.0, 512.0]; 2],
            // temperature in degrees C, air speed in m/s
            Benchmark::ComfortSynth => vec![[18.0, 30.0], [0.0, 1.5]],
        };
        Domain::new(b).expect("static domains are valid")
    }

    /// `true` when larger raw values are better.
    pub fn maximizes(self) -> bool {
        self == Benchmark::ComfortSynth
    }

    /// Published optimizers, used to make the reference optimum exact.
    pub fn known_optimizers(self) -> Vec<Point> {
        match self {
            Benchmark::Beale => vec![vec![3.0, 0.5]],
            Benchmark::Branin => vec![vec![-PI, 12.275], vec![PI, 2.275], vec![9.42478, 2.475]],
            Benchmark::Bukin => vec![vec![-10.0, 1.0]],
            Benchmark::CrossInTray => {
                let a = 1.349_406_6;
                vec![vec![a, a], vec![a, -a], vec![-a, a], vec![-a, -a]]
            }
            Benchmark::Eggholder => vec![vec![512.0, 404.2319]],
            Benchmark::HolderTable => {
                let (a, b) = (8.05502, 9.66459);
                vec![vec![a, b], vec![a, -b], vec![-a, b], vec![-a, -b]]
            }
            Benchmark::Levy13 => vec![vec![1.0, 1.0]],
            Benchmark::ComfortSynth => vec![vec![24.5, 0.35]],
        }
    }

    /// The objective in its usual (unnormalized) form.
    pub fn raw(self, p: &[f64]) -> f64 {
        let (x, y) = (p[0], p[1]);
        match self {
            Benchmark::Beale => {
                (1.5 - x + x * y).powi(2) + (2.25 - x + x * y * y).powi(2) + (2.625 - x + x * y.powi(3)).powi(2)
            }
            Benchmark::Branin => {
                let b = 5.1 / (4.0 * PI * PI);
                let c = 5.0 / PI;
                let t = 1.0 / (8.0 * PI);
                (y - b * x * x + c * x - 6.0).powi(2) + 10.0 * (1.0 - t) * x.cos() + 10.0
            }
            Benchmark::Bukin => 100.0 * (y - 0.01 * x * x).abs().sqrt() + 0.01 * (x + 10.0).abs(),
            Benchmark::CrossInTray => {
                let e = (100.0 - (x * x + y * y).sqrt() / PI).abs().exp();
                -0.0001 * ((x.sin() * y.sin() * e).abs() + 1.0).powf(0.1)
            }
            Benchmark::Eggholder => {
                -(y + 47.0) * (x / 2.0 + y + 47.0).abs().sqrt().sin() - x * (x - (y + 47.0)).abs().sqrt().sin()
            }
            Benchmark::HolderTable => {
                -(x.sin() * y.cos() * (1.0 - (x * x + y * y).sqrt() / PI).abs().exp()).abs()
            }
            Benchmark::Levy13 => {
                (3.0 * PI * x).sin().powi(2)
                    + (x - 1.0).powi(2) * (1.0 + (3.0 * PI * y).sin().powi(2))
                    + (y - 1.0).powi(2) * (1.0 + (2.0 * PI * y).sin().powi(2))
            }
            Benchmark::ComfortSynth => {
                let main = (-((x - 24.5) / 2.5).powi(2) - ((y - 0.35) / 0.4).powi(2)).exp();
                let side = (-((x - 27.5) / 1.5).powi(2) - ((y - 1.1) / 0.3).powi(2)).exp();
                main + 0.6 * side
            }
        }
    }

    /// Raw objective oriented for maximization.
    fn oriented(self, p: &[f64]) -> f64 {
        if self.maximizes() {
            self.raw(p)
        } else {
            -self.raw(p)
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::TEST_FUNCTIONS
            .iter()
            .chain(std::iter::once(&Benchmark::ComfortSynth))
            .find(|b| b.name() == s)
            .copied()
            .ok_or_else(|| Error::Input(format!("unknown test function '{s}'")))
    }
}

/// How a ground truth is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Minimum-norm interpolant through sampled knot values.
    GpSample {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        jitter: f64,
        /// Interpolant values at the knots.
        values: Vec<f64>,
        interpolant: Interpolant,
    },
    /// A benchmark oriented for maximization and divided by `scale`.
    Normalized { function: Benchmark, scale: f64 },
    Constant { value: f64 },
}

/// An objective with its domain and reference optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub name: String,
    pub domain: Domain,
    pub objective: Objective,
    pub known_max: f64,
    pub argmax: Point,
}

impl GroundTruth {
    fn with_reference_max(name: String, domain: Domain, objective: Objective, extra: &[Point]) -> Result<Self> {
        let mut truth = GroundTruth { name, domain, objective, known_max: f64::NAN, argmax: Vec::new() };
        let per_dim = match truth.domain.dim() {
            1 => 10_001,
            2 => 401,
            3 => 101,
            _ => 21,
        };
        let mut candidates = truth.domain.grid(per_dim);
        candidates.extend(extra.iter().filter(|p| truth.domain.contains(p)).cloned());
        let values: Vec<f64> = candidates.iter().map(|p| truth.eval_unchecked(p)).collect();
        let i = argmax_index(&values, 0.0).ok_or_else(|| Error::Numerical("objective is NaN everywhere".into()))?;
        truth.known_max = values[i];
        truth.argmax = candidates.swap_remove(i);
        Ok(truth)
    }

    pub fn constant(domain: Domain, value: f64) -> Self {
        GroundTruth {
            name: "constant".into(),
            argmax: domain.center(),
            domain,
            objective: Objective::Constant { value },
            known_max: value,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::GpSample { interpolant, .. } => interpolant.eval_unchecked(x),
            Objective::Normalized { function, scale } => function.oriented(x) / scale,
            Objective::Constant { value } => *value,
        }
    }

    /// `f(x*) - f(x)` against the reference optimum.
    pub fn suboptimality(&self, x: &[f64]) -> Result<f64> {
        Ok(self.known_max - self.eval(x)?)
    }

    /// RKHS norm of the objective when it is a kernel expansion.
    pub fn rkhs_norm(&self) -> Option<f64> {
        match &self.objective {
            Objective::GpSample { interpolant, .. } => Some(interpolant.norm_sq().sqrt()),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a manifest and checks its internal consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let truth: GroundTruth = serde_json::from_str(text)?;
        truth.validate()?;
        Ok(truth)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.domain.dim(), self.argmax.len())?;
        if !self.known_max.is_finite() {
            return Err(Error::Input("reference optimum must be finite".into()));
        }
        match &self.objective {
            Objective::GpSample { interpolant, values, jitter, .. } => {
                let reloaded = Interpolant::new(
                    interpolant.kernel.clone(),
                    interpolant.points.clone(),
                    interpolant.coefficients.clone(),
                )?;
                check_dim(self.domain.dim(), reloaded.kernel.dim)?;
                check_dim(reloaded.points.len(), values.len())?;
                if jitter.is_nan() || *jitter < 0.0 {
                    return Err(Error::Input("jitter must be nonnegative".into()));
                }
                for (p, v) in reloaded.points.iter().zip(values) {
                    if (reloaded.eval_unchecked(p) - v).abs() > 1e-6 * (1.0 + v.abs()) {
                        return Err(Error::Input("knot values do not match the interpolant".into()));
                    }
                }
            }
            Objective::Normalized { function, scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::Input("normalization scale must be positive".into()));
                }
                if function.domain() != self.domain {
                    return Err(Error::Input(format!("{function} has a fixed domain")));
                }
            }
            Objective::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Input("constant must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// Samples knot values from the zero-mean Gaussian with the jittered Gram
/// covariance and returns the minimum-norm interpolant through them.
///
/// Writing the sample as `v = L xi`, the interpolant coefficients are
/// `L^{-T} xi`; the stored knot values are those of the interpolant itself,
/// which differ from `v` by `jitter` times the coefficients.
pub fn sample_gp_instance<R: Rng + ?Sized>(
    rng: &mut R,
    kernel: &KernelSpec,
    n_knots: usize,
    domain: &Domain,
    jitter: f64,
) -> Result<GroundTruth> {
    if n_knots == 0 {
        return Err(Error::Input("need at least one knot".into()));
    }
    kernel.validate()?;
    check_dim(kernel.dim, domain.dim())?;
    let knots: Vec<Point> = (0..n_knots).map(|_| domain.sample_uniform(rng)).collect();
    let chol = cholesky(gram(kernel, &knots, jitter)?)?;
    let xi = DVector::from_iterator(n_knots, (0..n_knots).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let coefficients = chol
        .l()
        .tr_solve_lower_triangular(&xi)
        .ok_or_else(|| Error::Numerical("triangular solve failed while sampling".into()))?;
    let interpolant = Interpolant::new(kernel.clone(), knots, coefficients.as_slice().to_vec())?;
    let values: Vec<f64> = interpolant.points.iter().map(|p| interpolant.eval_unchecked(p)).collect();
    GroundTruth::with_reference_max(
        format!("gp-{}d", domain.dim()),
        domain.clone(),
        Objective::GpSample { seed: None, jitter, values, interpolant },
        &[],
    )
}

/// Default knot count for GP instances of a given dimension.
pub fn default_knots(dim: usize) -> usize {
    if dim == 1 {
        50
    } else {
        150
    }
}

/// The GP instance family used by the benchmarks: SE kernel with variance 9
/// and lengthscale 1 on `[0, 10]^dim`, drawn from a generator seeded with
/// `seed`.
pub fn gp_instance(seed: u64, dim: usize) -> Result<GroundTruth> {
    let kernel = KernelSpec::squared_exponential(9.0, 1.0, dim);
    let domain = Domain::new(vec![[0.0, 10.0]; dim])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = sample_gp_instance(&mut rng, &kernel, default_knots(dim), &domain, crate::kernel::DEFAULT_JITTER)?;
    if let Objective::GpSample { seed: s, .. } = &mut truth.objective {
        *s = Some(seed);
    }
    Ok(truth)
}

/// Population standard deviation of the raw objective on a 100 x 100 grid.
fn grid_std(function: Benchmark) -> f64 {
    let grid = function.domain().grid(100);
    let n = grid.len() as f64;
    let vals: Vec<f64> = grid.iter().map(|p| function.raw(p)).collect();
    let mean = vals.iter().sum::<f64>() / n;
    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn normalized(function: Benchmark) -> Result<GroundTruth> {
    GroundTruth::with_reference_max(
        function.name().into(),
        function.domain(),
        Objective::Normalized { function, scale: grid_std(function) },
        &function.known_optimizers(),
    )
}

/// A standard test function, negated for maximization and divided by its
/// grid standard deviation.
pub fn test_function(name: &str) -> Result<GroundTruth> {
    let function: Benchmark = name.parse()?;
    if function == Benchmark::ComfortSynth {
        return Err(Error::Input(format!("'{name}' is not a test function")));
    }
    normalized(function)
}

/// Smooth two-bump comfort surface over temperature and air speed,
/// normalized like the test functions.
pub fn comfort_synth() -> Result<GroundTruth> {
    normalized(Benchmark::ComfortSynth)
}

/// Squared-exponential lengthscale maximizing the Gaussian-process marginal
/// likelihood of `n_samples` Latin-hypercube evaluations (unit variance,
/// small noise). Candidates are log-spaced between 1% and 100% of the mean
/// domain width.
pub fn fit_lengthscale<R: Rng + ?Sized>(truth: &GroundTruth, n_samples: usize, rng: &mut R) -> Result<f64> {
    let dim = truth.domain.dim();
    let xs = truth.domain.latin_hypercube(n_samples.max(2), rng);
    let ys = DVector::from_iterator(xs.len(), xs.iter().map(|x| truth.eval_unchecked(x)));
    let width = truth.domain.widths().iter().sum::<f64>() / dim as f64;
    let noise = 1e-4;
    let mut best = (f64::NEG_INFINITY, width);
    for i in 0..=40 {
        let l = width * 10f64.powf(-2.0 + 2.0 * i as f64 / 40.0);
        let kernel = KernelSpec::squared_exponential(1.0, l, dim);
        let Ok(chol) = cholesky(gram(&kernel, &xs, noise)?) else {
            continue;
        };
        let alpha = chol.solve(&ys);
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let ll = -0.5 * ys.dot(&alpha) - 0.5 * log_det;
        if ll > best.0 {
            best = (ll, l);
        }
    }
    Ok(best.1)
}

/// Simulated comparison oracle answering with the preference model.
pub struct Oracle<'a> {
    truth: &'a GroundTruth,
    rng: ChaCha8Rng,
}

impl<'a> Oracle<'a> {
    pub fn compare(&mut self, x: &[f64], x_prime: &[f64]) -> Result<bool> {
        let p = btl_prob(self.truth.eval(x)?, self.truth.eval(x_prime)?);
        sample_preference(&mut self.rng, p)
    }

    pub fn truth(&self) -> &GroundTruth {
        self.truth
    }
}

pub fn oracle_from_truth(truth: &GroundTruth, rng: ChaCha8Rng) -> Oracle<'_> {
    Oracle { truth, rng }
}
