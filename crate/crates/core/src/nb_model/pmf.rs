//! Log-space probability mass functions.

use crate::error::{Error, Result};

use super::GammaParams;

/// Below this count, rising factorials are summed term by term instead of
/// taken as a difference of log-gamma values. This avoids cancellation when
/// the shape is large (the near-Poisson clamp puts it around 10^6).
const RISING_SUM_LIMIT: u64 = 32;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(a (a+1) ... (a+n-1)) = lnΓ(a+n) - lnΓ(a)`.
pub fn ln_rising(a: f64, n: u64) -> f64 {
    if n <= RISING_SUM_LIMIT {
        (0..n).map(|j| (a + j as f64).ln()).sum()
    } else {
        ln_gamma(a + n as f64) - ln_gamma(a)
    }
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_rising(1.0, n)
}

/// `ln(θ^x e^{-θ} / x!)`.
pub fn poisson_logpmf(x: u64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!(
            "Poisson rate must be positive and finite, got {theta}"
        )));
    }
    let xf = x as f64;
    let lead = if x == 0 { 0.0 } else { xf * theta.ln() };
    Ok(lead - theta - ln_factorial(x))
}

/// Posterior predictive of a Poisson count under a `Gamma(alpha, beta)` rate
/// (shape/rate): the negative binomial
/// `C(α+x-1, x) (β/(β+1))^α (1/(β+1))^x`, in log space.
pub fn negbin_logpmf(x: u64, params: &GammaParams) -> f64 {
    let (alpha, beta) = (params.alpha, params.beta);
    let xf = x as f64;
    // ln(β/(β+1)) = -ln1p(1/β), ln(1/(β+1)) = -ln1p(β)
    let tail = if x == 0 { 0.0 } else { xf * beta.ln_1p() };
    ln_rising(alpha, x) - ln_factorial(x) - alpha * (1.0 / beta).ln_1p() - tail
}
