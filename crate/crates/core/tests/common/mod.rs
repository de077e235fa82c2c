//! Brute-force references shared by the integration tests. Nothing here goes
//! through the library's solver: the Gram matrix is inverted explicitly,
//! the ball is parametrized by an eigendecomposition, and the optimum is
//! found by a zooming grid search.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use popbo::kernel::KernelSpec;

/// Plain chained log-likelihood, written out term by term.
pub fn loglik(z: &[f64], outcomes: &[bool]) -> f64 {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, &won)| {
            let (prev, cur) = (z[i], z[i + 1]);
            let m = prev.max(cur);
            let lse = m + ((prev - m).exp() + (cur - m).exp()).ln();
            (if won { cur } else { prev }) - lse
        })
        .sum()
}

pub fn jittered_gram(kernel: &KernelSpec, points: &[Vec<f64>], jitter: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| kernel.eval(&points[i], &points[j]).unwrap() + if i == j { jitter } else { 0.0 })
}

/// Maps ball coordinates `y` (with `|y| <= B`) to values `Z` satisfying
/// `Z^T K^{-1} Z = |y|^2`.
pub struct BallMap {
    pub map: DMatrix<f64>,
}

impl BallMap {
    pub fn new(k: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(k.clone());
        let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        BallMap { map: &eig.eigenvectors * scale }
    }

    pub fn values(&self, y: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; y.len()];
        self.values_into(y, &mut z);
        z
    }

    pub fn values_into(&self, y: &[f64], z: &mut [f64]) {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = y.iter().enumerate().map(|(j, yj)| self.map[(i, j)] * yj).sum();
        }
    }
}

/// Maximizes `objective` over `y` in the box `[-r, r]^n`, where `objective`
/// returns `None` outside the feasible set. A grid of `per_dim` points per
/// axis is searched, then the box is halved around the incumbent until its
/// cells are below `1e-7 r`. Infeasible grid points are replaced by the last
/// feasible point on the segment from `anchor`, found by bisection, so that
/// candidates on an active boundary sit exactly on it.
pub fn zoom_search(
    n: usize,
    r: f64,
    per_dim: usize,
    anchor: Vec<f64>,
    mut objective: impl FnMut(&[f64]) -> Option<f64>,
) -> (Vec<f64>, f64) {
    let anchor_value = objective(&anchor).expect("anchor must be feasible");
    let mut best = (anchor.clone(), anchor_value);
    let mut lo = vec![-r; n];
    let mut hi = vec![r; n];
    let mut idx = vec![0usize; n];
    let mut y = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let cells = (per_dim - 1) as f64;
    let levels = ((2.0 * 1e7 / cells).log2().ceil() as usize).max(1);
    for _ in 0..levels {
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            for d in 0..n {
                y[d] = lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / cells;
            }
            let found = match objective(&y) {
                Some(v) => Some(v),
                None => {
                    let (mut inside, mut outside) = (0.0, 1.0);
                    let mut value = None;
                    for _ in 0..20 {
                        let mid = 0.5 * (inside + outside);
                        for d in 0..n {
                            trial[d] = anchor[d] + mid * (y[d] - anchor[d]);
                        }
                        match objective(&trial) {
                            Some(v) => {
                                inside = mid;
                                value = Some(v);
                            }
                            None => outside = mid,
                        }
                    }
                    if value.is_some() {
                        for d in 0..n {
                            y[d] = anchor[d] + inside * (y[d] - anchor[d]);
                        }
                    }
                    value
                }
            };
            if let Some(v) = found {
                if v > best.1 {
                    best = (y.clone(), v);
                }
            }
            let mut d = 0;
            while d < n {
                idx[d] += 1;
                if idx[d] < per_dim {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                break;
            }
        }
        for d in 0..n {
            let half = 0.25 * (hi[d] - lo[d]);
            lo[d] = (best.0[d] - half).max(-r);
            hi[d] = (best.0[d] + half).min(r);
        }
    }
    best
}

fn grid_size(n: usize) -> usize {
    match n {
        1 => 2001,
        2 => 101,
        3 => 21,
        _ => 11,
    }
}

fn mle_search(ball: &BallMap, outcomes: &[bool], radius: f64) -> (Vec<f64>, f64) {
    let n = ball.map.nrows();
    let r2 = radius * radius;
    let mut z = vec![0.0; n];
    zoom_search(n, radius, grid_size(n), vec![0.0; n], |y| {
        if y.iter().map(|v| v * v).sum::<f64>() > r2 {
            return None;
        }
        ball.values_into(y, &mut z);
        Some(loglik(&z, outcomes))
    })
}

/// Brute-force maximum of the chained likelihood over the RKHS ball.
pub fn mle_oracle(kernel: &KernelSpec, points: &[Vec<f64>], outcomes: &[bool], radius: f64, jitter: f64) -> f64 {
    let ball = BallMap::new(&jittered_gram(kernel, points, jitter));
    mle_search(&ball, outcomes, radius).1
}

/// Brute-force optimistic advantage of `x` over the last point. For fixed
/// history values `Z`, the best candidate value follows from the Schur
/// complement of the bordered Gram matrix, so only `Z` is searched.
#[allow(clippy::too_many_arguments)]
pub fn advantage_oracle(
    kernel: &KernelSpec,
    points: &[Vec<f64>],
    outcomes: &[bool],
    x: &[f64],
    radius: f64,
    floor: f64,
    jitter: f64,
) -> f64 {
    let k = jittered_gram(kernel, points, jitter);
    let k_inv = k.clone().try_inverse().expect("jittered Gram is invertible");
    let kx = DVector::from_iterator(points.len(), points.iter().map(|p| kernel.eval(p, x).unwrap()));
    let a = &k_inv * &kx;
    let schur = (kernel.eval(x, x).unwrap() + jitter - kx.dot(&a)).max(0.0);
    let ball = BallMap::new(&k);
    let n = points.len();
    let r2 = radius * radius;
    let (y_mle, _) = mle_search(&ball, outcomes, radius);
    let mut z = vec![0.0; n];
    zoom_search(n, radius, grid_size(n), y_mle, |y| {
        let norm: f64 = y.iter().map(|v| v * v).sum();
        if norm > r2 {
            return None;
        }
        ball.values_into(y, &mut z);
        if loglik(&z, outcomes) < floor {
            return None;
        }
        let mean: f64 = a.iter().zip(&z).map(|(ai, zi)| ai * zi).sum();
        Some(mean + (schur * (r2 - norm)).sqrt() - z[n - 1])
    })
    .1
}

/// A small one-dimensional comparison problem.
#[derive(Clone, Debug)]
pub struct SmallInstance {
    pub kernel: KernelSpec,
    pub history: popbo::likelihood::History,
    pub radius: f64,
    pub beta: f64,
    pub candidate: Vec<f64>,
}

/// Draws a 1-D instance with `1..=3` chained comparisons. Some queries
/// repeat an earlier point, as the optimizer's chaining does.
pub fn random_instance<R: rand::Rng>(rng: &mut R) -> SmallInstance {
    let kernel = match rng.random_range(0..3) {
        0 => KernelSpec::squared_exponential(rng.random_range(0.5..9.0), rng.random_range(0.4..2.0), 1),
        1 => KernelSpec::matern([0.5, 1.5, 2.5][rng.random_range(0..3)], rng.random_range(0.5..2.0), 1),
        _ => KernelSpec::squared_exponential(1.0, 1.0, 1),
    };
    let t = rng.random_range(1..=3);
    let mut points = vec![vec![rng.random_range(0.0..5.0)]];
    let mut history = popbo::likelihood::History::new(points[0].clone());
    for _ in 0..t {
        let x = if points.len() >= 2 && rng.random_bool(0.2) {
            points[points.len() - 2].clone()
        } else {
            vec![rng.random_range(0.0..5.0)]
        };
        history.push(x.clone(), rng.random_bool(0.5));
        points.push(x);
    }
    SmallInstance {
        kernel,
        history,
        radius: rng.random_range(0.5..4.0),
        beta: rng.random_range(0.2..3.0),
        candidate: vec![rng.random_range(0.0..5.0)],
    }
}
