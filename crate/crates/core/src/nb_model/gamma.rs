use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate assigned when the sample is not overdispersed. The prior then
/// concentrates at the sample mean and the predictive is effectively Poisson.
pub const BETA_MAX: f64 = 1e6;
/// Floor on the clamped mean so that an all-zero sample still yields `alpha > 0`.
pub const CLAMP_MEAN_FLOOR: f64 = 1e-3;

/// Shape/rate of one feature's latent error-rate prior, with the sufficient
/// statistics absorbed so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
    pub n_obs: u64,
    pub sum_x: u64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = GammaParams {
            alpha,
            beta,
            n_obs: 0,
            sum_x: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "beta must be positive and finite, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn is_clamped(&self) -> bool {
        self.beta >= BETA_MAX
    }

    /// Absorbs one observed count: `Gamma(α, β) -> Gamma(α + x, β + 1)`.
    pub fn absorb(&self, x: u64) -> Self {
        GammaParams {
            alpha: self.alpha + x as f64,
            beta: self.beta + 1.0,
            n_obs: self.n_obs + 1,
            sum_x: self.sum_x + x,
        }
    }
}

/// Method-of-moments fit of a gamma-mixed Poisson.
///
/// With sample mean `E` and unbiased variance `V`, inverts `E = α/β` and
/// `V = (α/β)(1 + 1/β)`. Samples with `V <= E` (or `E = 0`) get the
/// near-Poisson clamp `β = BETA_MAX`, `α = max(E, CLAMP_MEAN_FLOOR) β`.
pub fn fit_gamma_mom(observations: &[u32]) -> Result<GammaParams> {
    let n = observations.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "method of moments needs at least 2 observations, got {n}"
        )));
    }
    let sum_x: u64 = observations.iter().map(|&x| u64::from(x)).sum();
    let mean = sum_x as f64 / n as f64;
    let var = observations
        .iter()
        .map(|&x| (f64::from(x) - mean).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;

    let (alpha, beta) = if mean > 0.0 && var > mean {
        let beta = mean / (var - mean);
        (mean * beta, beta)
    } else {
        log::debug!("underdispersed sample (mean {mean}, variance {var}); clamping to near-Poisson");
        (mean.max(CLAMP_MEAN_FLOOR) * BETA_MAX, BETA_MAX)
    };
    let params = GammaParams {
        alpha,
        beta,
        n_obs: n as u64,
        sum_x,
    };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overdispersed_fit() {
        let p = fit_gamma_mom(&[0, 1, 2, 3, 4]).unwrap();
        assert!((p.beta - 4.0).abs() < 1e-12);
        assert!((p.alpha - 8.0).abs() < 1e-12);
        assert_eq!((p.n_obs, p.sum_x), (5, 10));
    }

    #[test]
    fn constant_sample_clamps() {
        let p = fit_gamma_mom(&[3, 3, 3, 3]).unwrap();
        assert_eq!(p.beta, BETA_MAX);
        assert_eq!(p.alpha, 3.0 * BETA_MAX);
        assert!(p.is_clamped());
    }

    #[test]
    fn all_zero_sample_clamps_to_floor() {
        let p = fit_gamma_mom(&[0, 0, 0]).unwrap();
        assert_eq!(p.beta, BETA_MAX);
        assert_eq!(p.alpha, CLAMP_MEAN_FLOOR * BETA_MAX);
    }

    #[test]
    fn underdispersed_sample_clamps() {
        // mean 2, variance 1/3
        let p = fit_gamma_mom(&[2, 2, 1, 3, 2, 2]).unwrap();
        assert_eq!(p.beta, BETA_MAX);
        assert!((p.alpha - 2.0 * BETA_MAX).abs() < 1e-6);
    }

    #[test]
    fn too_few_observations() {
        assert!(matches!(fit_gamma_mom(&[1]), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_gamma_mom(&[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn absorb_rule() {
        let p = GammaParams::new(8.0, 4.0).unwrap().absorb(2);
        assert_eq!((p.alpha, p.beta, p.n_obs, p.sum_x), (10.0, 5.0, 1, 2));
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(GammaParams::new(-1.0, 1.0).is_err());
        assert!(GammaParams::new(1.0, 0.0).is_err());
        assert!(GammaParams::new(f64::INFINITY, 1.0).is_err());
    }
}
