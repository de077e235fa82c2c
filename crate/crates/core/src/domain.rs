use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Point;

/// Axis-aligned box, one `[lo, hi]` interval per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Domain {
    bounds: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for Domain {
    type Error = Error;

    fn try_from(bounds: Vec<[f64; 2]>) -> Result<Self> {
        Domain::new(bounds)
    }
}

impl From<Domain> for Vec<[f64; 2]> {
    fn from(d: Domain) -> Self {
        d.bounds
    }
}

impl Domain {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Input("domain needs at least one dimension".into()));
        }
        for (i, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Input(format!("domain interval {i} is invalid: [{lo}, {hi}]")));
            }
        }
        Ok(Domain { bounds })
    }

    pub fn unit(dim: usize) -> Self {
        Domain { bounds: vec![[0.0, 1.0]; dim] }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.bounds).all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Input(format!("point {x:?} lies outside the domain")))
        }
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, [lo, hi]) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn center(&self) -> Point {
        self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bounds.iter().map(|[lo, hi]| hi - lo).collect()
    }

    /// Uniform tensor grid with `per_dim` points along each non-degenerate
    /// axis, in row-major order (last coordinate varies fastest).
    pub fn grid(&self, per_dim: usize) -> Vec<Point> {
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|&[lo, hi]| linspace(lo, hi, per_dim))
            .collect();
        let mut out = vec![Vec::with_capacity(self.dim())];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.bounds
            .iter()
            .map(|&[lo, hi]| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    }

    /// Latin-hypercube sample of `n` points.
    pub fn latin_hypercube<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        let mut pts = vec![vec![0.0; self.dim()]; n];
        for (j, &[lo, hi]) in self.bounds.iter().enumerate() {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(rng);
            for (p, s) in pts.iter_mut().zip(strata) {
                let u = (s as f64 + rng.random::<f64>()) / n as f64;
                p[j] = lo + u * (hi - lo);
            }
        }
        pts
    }
}

/// `n` evenly spaced values from `lo` to `hi`; a single value when the
/// interval is degenerate or `n < 2`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 || hi == lo {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}
