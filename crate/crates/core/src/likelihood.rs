//! Log-likelihood of chained comparisons.
//!
//! Every comparison uses the previous query as its reference, so a history of
//! `t` comparisons touches only the `t + 1` points `x_0, ..., x_t` and the
//! likelihood is a function of the candidate values `z_0, ..., z_t` at those
//! points.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{Duel, KernelSpec, Point};
use crate::preference::{log_sum_exp2, logistic};

/// One answered comparison: `pref == true` means `x` beat `x_prime`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuelRecord {
    pub x: Point,
    pub x_prime: Point,
    #[serde(with = "bit")]
    pub pref: bool,
}

mod bit {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("preference must be 0 or 1, got {other}"))),
        }
    }
}

/// Ordered comparisons starting from `x0`, chained so that each reference
/// point is the previous query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub x0: Point,
    pub records: Vec<DuelRecord>,
}

#[derive(Serialize, Deserialize)]
struct HistoryHeader {
    x0: Point,
    kernel: KernelSpec,
}

impl History {
    pub fn new(x0: Point) -> Self {
        History { x0, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The most recent query, or `x0` if nothing has been compared yet.
    pub fn last_point(&self) -> &Point {
        self.records.last().map_or(&self.x0, |r| &r.x)
    }

    /// Appends a comparison of `x` against the current last point.
    pub fn push(&mut self, x: Point, pref: bool) {
        let x_prime = self.last_point().clone();
        self.records.push(DuelRecord { x, x_prime, pref });
    }

    /// `x_0, x_1, ..., x_t`.
    pub fn points(&self) -> Vec<Point> {
        std::iter::once(self.x0.clone())
            .chain(self.records.iter().map(|r| r.x.clone()))
            .collect()
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.pref).collect()
    }

    pub fn duels(&self) -> Vec<Duel> {
        self.records
            .iter()
            .map(|r| Duel::new(r.x.clone(), r.x_prime.clone()))
            .collect()
    }

    /// Checks the chaining invariant and that all points have dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        check_dim(dim, self.x0.len())?;
        let mut prev = &self.x0;
        for (i, r) in self.records.iter().enumerate() {
            check_dim(dim, r.x.len())?;
            check_dim(dim, r.x_prime.len())?;
            if &r.x_prime != prev {
                return Err(Error::Input(format!(
                    "record {} breaks chaining: reference is not the previous query",
                    i + 1
                )));
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("record {} has a non-finite coordinate", i + 1)));
            }
            prev = &r.x;
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("x0 has a non-finite coordinate".into()));
        }
        Ok(())
    }

    /// JSON lines: a header `{"x0", "kernel"}` followed by one record per line.
    pub fn to_jsonl(&self, kernel: &KernelSpec) -> Result<String> {
        let mut out = serde_json::to_string(&HistoryHeader {
            x0: self.x0.clone(),
            kernel: kernel.clone(),
        })?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the format written by [`History::to_jsonl`]. Blank lines are
    /// skipped; the result is validated against the header's kernel dimension.
    pub fn from_jsonl(text: &str) -> Result<(KernelSpec, History)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: HistoryHeader = match lines.next() {
            Some(l) => serde_json::from_str(l)?,
            None => return Err(Error::Input("history file is empty".into())),
        };
        let mut history = History::new(header.x0);
        for line in lines {
            history.records.push(serde_json::from_str(line)?);
        }
        history.validate(header.kernel.dim)?;
        Ok((header.kernel, history))
    }
}

fn check_lengths(z: &[f64], outcomes: &[bool]) -> Result<()> {
    if z.len() != outcomes.len() + 1 {
        return Err(Error::Input(format!(
            "value vector has length {} but {} outcomes need {}",
            z.len(),
            outcomes.len(),
            outcomes.len() + 1
        )));
    }
    Ok(())
}

/// Log-probability of the observed outcomes when the values at `x_0..x_t`
/// are `z`.
pub fn log_likelihood(z: &[f64], outcomes: &[bool]) -> Result<f64> {
    check_lengths(z, outcomes)?;
    Ok(log_likelihood_unchecked(z, outcomes))
}

pub(crate) fn log_likelihood_unchecked(z: &[f64], outcomes: &[bool]) -> f64 {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, &won)| {
            let (cur, prev) = (z[i + 1], z[i]);
            let chosen = if won { cur } else { prev };
            chosen - log_sum_exp2(cur, prev)
        })
        .sum()
}

/// Gradient of [`log_likelihood`] with respect to `z`.
pub fn grad_log_likelihood(z: &[f64], outcomes: &[bool]) -> Result<Vec<f64>> {
    check_lengths(z, outcomes)?;
    let mut g = vec![0.0; z.len()];
    accumulate_grad(z, outcomes, &mut g, None);
    Ok(g)
}

/// Adds the gradient into `grad` and, when given, the per-comparison
/// curvature `sigma'(z_i - z_{i-1})` into `curvature` (length `t`).
pub(crate) fn accumulate_grad(
    z: &[f64],
    outcomes: &[bool],
    grad: &mut [f64],
    mut curvature: Option<&mut [f64]>,
) {
    for (i, &won) in outcomes.iter().enumerate() {
        let p = logistic(z[i + 1] - z[i]);
        let r = f64::from(u8::from(won)) - p;
        grad[i + 1] += r;
        grad[i] -= r;
        if let Some(c) = curvature.as_deref_mut() {
            c[i] = p * (1.0 - p);
        }
    }
}

/// Adds `c` to every value. The likelihood only sees differences, so it is
/// unchanged.
pub fn shift(z: &[f64], c: f64) -> Vec<f64> {
    z.iter().map(|v| v + c).collect()
}
