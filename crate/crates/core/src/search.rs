//! Maximization of a function over a box: exhaustive grids in one and two
//! dimensions, Latin-hypercube starts with coordinate refinement beyond.

use rand::Rng;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::kernel::Point;
use crate::solver::OuterSearch;

/// First grid index attaining the maximum within `tie_tol`.
pub fn argmax_index(values: &[f64], tie_tol: f64) -> Option<usize> {
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|v| *v >= best - tie_tol)
}

/// Coordinate search from each Latin-hypercube start; each start gets
/// `refine_steps` evaluations. Steps start at a quarter of the box width and
/// halve whenever no axis move improves.
pub fn multistart<R, F>(domain: &Domain, search: &OuterSearch, rng: &mut R, mut f: F) -> Result<(Point, f64)>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let starts = domain.latin_hypercube(search.lhs_starts.max(1), rng);
    let widths = domain.widths();
    let mut best: Option<(Point, f64)> = None;
    for start in starts {
        let mut x = start;
        let mut value = f(&x)?;
        let mut step = 0.25;
        let mut evals = 1;
        'refine: while evals < search.refine_steps && step > 1e-4 {
            let mut improved = false;
            for j in 0..x.len() {
                for sign in [1.0, -1.0] {
                    if evals >= search.refine_steps {
                        break 'refine;
                    }
                    let mut trial = x.clone();
                    trial[j] += sign * step * widths[j];
                    domain.clamp(&mut trial);
                    if trial == x {
                        continue;
                    }
                    let v = f(&trial)?;
                    evals += 1;
                    if v > value + 1e-12 {
                        x = trial;
                        value = v;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((x, value));
        }
    }
    best.ok_or_else(|| Error::Input("no search starts".into()))
}

/// Maximizes a cheap function over `domain` with the same candidate sets the
/// acquisition uses.
pub fn maximize<R, F>(domain: &Domain, search: &OuterSearch, rng: &mut R, mut f: F) -> Result<(Point, f64)>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<f64>,
{
    match domain.dim() {
        1 | 2 => {
            let per_dim = if domain.dim() == 1 { search.grid_1d } else { search.grid_2d };
            let grid = domain.grid(per_dim);
            let values = grid.iter().map(|x| f(x)).collect::<Result<Vec<_>>>()?;
            let i = argmax_index(&values, 0.0).ok_or_else(|| Error::Numerical("objective is NaN on the whole grid".into()))?;
            Ok((grid[i].clone(), values[i]))
        }
        _ => multistart(domain, search, rng, f),
    }
}
