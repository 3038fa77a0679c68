//! Negative binomial classifier.
//!
//! Each feature's edit-distance count is treated as a Poisson draw whose rate
//! has a gamma prior fitted on matching pairs only. A pair's match score is
//! the sum over shared features of the log posterior predictive
//! (negative binomial) probability; a pair is a match when that score lies
//! strictly above the model threshold.

mod gamma;
mod gaussian;
mod io;
mod pmf;

pub use gamma::{fit_gamma_mom, GammaParams, BETA_MAX, CLAMP_MEAN_FLOOR};
pub use gaussian::{fit_nonmatch_gaussian, GaussianFit};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use pmf::{ln_factorial, ln_gamma, ln_rising, negbin_logpmf, poisson_logpmf};

use crate::error::{Error, Result};
use crate::features::{compare, feature_counts, ComparisonVector};
use crate::ingest::{Label, LabeledPair, SchemaConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    pub schema: SchemaConfig,
    /// One prior per schema feature, in schema order.
    pub params: Vec<GammaParams>,
    /// Log-score cut; `None` until a threshold has been selected.
    pub threshold: Option<f64>,
    pub version: u64,
    /// Number of match pairs the initial fit used.
    pub trained_on: u64,
    /// Divide the log score by the number of features used.
    pub average_per_feature: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreResult {
    pub log_score: f64,
    pub features_used: usize,
    /// `None` when the model has no threshold yet.
    pub decision: Option<Label>,
}

impl NbModel {
    /// Fits one gamma prior per feature from matching pairs.
    pub fn train(match_pairs: &[LabeledPair], schema: &SchemaConfig) -> Result<Self> {
        schema.validate()?;
        if let Some((i, p)) = match_pairs
            .iter()
            .enumerate()
            .find(|(_, p)| p.label != Label::Match)
        {
            return Err(Error::Precondition(format!(
                "training pair {} ({}, {}) is labelled {}; only matches may be used",
                i + 1,
                p.a.id,
                p.b.id,
                p.label
            )));
        }
        let params = schema
            .features
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let p = fit_gamma_mom(&feature_counts(match_pairs, i)).map_err(|e| match e {
                    Error::InsufficientData(msg) => {
                        Error::InsufficientData(format!("feature `{name}`: {msg}"))
                    }
                    other => other,
                })?;
                if p.is_clamped() {
                    log::warn!("feature `{name}`: match errors are not overdispersed; using a near-Poisson prior");
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NbModel {
            schema: schema.clone(),
            params,
            threshold: None,
            version: 1,
            trained_on: match_pairs.len() as u64,
            average_per_feature: false,
        })
    }

    /// Refits from scratch on a new set of matches, keeping the version history.
    pub fn retrain(&self, match_pairs: &[LabeledPair]) -> Result<Self> {
        let mut m = NbModel::train(match_pairs, &self.schema)?;
        m.version = self.version + 1;
        m.average_per_feature = self.average_per_feature;
        Ok(m)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn with_average_per_feature(mut self, on: bool) -> Self {
        self.average_per_feature = on;
        self
    }

    pub fn num_features(&self) -> usize {
        self.params.len()
    }

    pub fn score_vector(&self, cv: &ComparisonVector) -> Option<ScoreResult> {
        debug_assert_eq!(cv.len(), self.params.len());
        let mut log_score = 0.0;
        let mut used = 0;
        for (c, p) in cv.counts.iter().zip(&self.params) {
            if let Some(x) = c {
                log_score += negbin_logpmf(u64::from(*x), p);
                used += 1;
            }
        }
        if used == 0 {
            return None;
        }
        if self.average_per_feature {
            log_score /= used as f64;
        }
        Some(ScoreResult {
            log_score,
            features_used: used,
            decision: self.threshold.map(|t| decide(log_score, t)),
        })
    }

    pub fn score(&self, pair: &LabeledPair) -> Result<ScoreResult> {
        self.score_vector(&compare(&pair.a, &pair.b))
            .ok_or_else(|| unscorable(pair))
    }

    /// Absorbs one confirmed match. Returns a new model; `self` is untouched.
    pub fn update(&self, confirmed: &LabeledPair) -> Result<Self> {
        self.update_batch(std::slice::from_ref(confirmed))
    }

    /// Absorbs a chunk of confirmed matches as one version step. Fails without
    /// producing anything if any pair is unscorable or labelled non-match.
    pub fn update_batch(&self, confirmed: &[LabeledPair]) -> Result<Self> {
        let mut vectors = Vec::with_capacity(confirmed.len());
        for p in confirmed {
            if p.label == Label::NonMatch {
                return Err(Error::Precondition(format!(
                    "pair ({}, {}) is labelled nonmatch and cannot be absorbed",
                    p.a.id, p.b.id
                )));
            }
            let cv = compare(&p.a, &p.b);
            if cv.num_present() == 0 {
                return Err(unscorable(p));
            }
            vectors.push(cv);
        }
        let mut next = self.clone();
        for cv in &vectors {
            next.absorb(cv);
        }
        next.version = self.version + 1;
        Ok(next)
    }

    fn absorb(&mut self, cv: &ComparisonVector) {
        for (c, p) in cv.counts.iter().zip(self.params.iter_mut()) {
            if let Some(x) = c {
                *p = p.absorb(u64::from(*x));
            }
        }
    }

    /// Checks the structural invariants a loaded or hand-built model must hold.
    pub fn validate(&self) -> Result<()> {
        self.schema
            .validate()
            .map_err(|e| Error::InvariantViolation(e.to_string()))?;
        if self.params.len() != self.schema.features.len() {
            return Err(Error::InvariantViolation(format!(
                "{} parameter sets for {} schema features",
                self.params.len(),
                self.schema.features.len()
            )));
        }
        for (name, p) in self.schema.features.iter().zip(&self.params) {
            p.validate()
                .map_err(|e| Error::InvariantViolation(format!("feature `{name}`: {e}")))?;
        }
        if let Some(t) = self.threshold {
            if t.is_nan() {
                return Err(Error::InvariantViolation("threshold is NaN".into()));
            }
        }
        if self.version == 0 {
            return Err(Error::InvariantViolation("model version must be >= 1".into()));
        }
        Ok(())
    }
}

/// Match iff the score lies strictly above the cut.
pub fn decide(log_score: f64, threshold: f64) -> Label {
    if log_score > threshold {
        Label::Match
    } else {
        Label::NonMatch
    }
}

fn unscorable(p: &LabeledPair) -> Error {
    Error::Unscorable {
        id_a: p.a.id.clone(),
        id_b: p.b.id.clone(),
    }
}
