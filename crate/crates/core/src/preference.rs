//! Bradley–Terry–Luce comparison model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic function, evaluated without overflow for large `|u|`.
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(e^a + e^b)` without overflow.
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (-(a - b).abs()).exp().ln_1p()
}

/// Probability that the point with value `y` is preferred over the point
/// with value `y_prime`.
pub fn btl_prob(y: f64, y_prime: f64) -> f64 {
    logistic(y - y_prime)
}

/// Draws a preference bit that is `true` with probability `p`.
pub fn sample_preference<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Input(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(rng.random::<f64>() < p)
}

/// Bounds on the logistic link and its derivative when applied to value
/// differences of functions with norm at most `B` (so differences lie in
/// `[-2B, 2B]`), plus derived constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConstants {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub dsigma_lo: f64,
    pub dsigma_hi: f64,
    pub b_p: f64,
    pub h_sigma: f64,
    pub c_l: f64,
}

pub fn link_constants(norm_bound: f64) -> LinkConstants {
    let b2 = 2.0 * norm_bound;
    let sigma_lo = logistic(-b2);
    let sigma_hi = logistic(b2);
    // 1 / (2 + e^{2B} + e^{-2B}) = sigma(2B) * sigma(-2B)
    let dsigma_lo = sigma_lo * sigma_hi;
    LinkConstants {
        sigma_lo,
        sigma_hi,
        dsigma_lo,
        dsigma_hi: 0.25,
        b_p: sigma_hi / sigma_lo - sigma_lo / sigma_hi,
        h_sigma: 1.0 / (2.0 * sigma_hi * sigma_hi),
        c_l: 1.0 + 2.0 / (1.0 + (-b2).exp()),
    }
}
