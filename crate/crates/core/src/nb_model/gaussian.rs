use crate::error::{Error, Result};
use crate::features::feature_counts;
use crate::ingest::{Label, LabeledPair, SchemaConfig};

/// Normal fit of one feature's non-match edit distances. Diagnostic only;
/// the match decision never consults it.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub feature: String,
    pub mean: f64,
    pub stddev: f64,
    pub n_obs: usize,
    /// All observations were equal, so the standard deviation is zero.
    pub degenerate: bool,
}

pub fn fit_nonmatch_gaussian(nonmatch_pairs: &[LabeledPair], schema: &SchemaConfig) -> Result<Vec<GaussianFit>> {
    if let Some(p) = nonmatch_pairs.iter().find(|p| p.label != Label::NonMatch) {
        return Err(Error::Precondition(format!(
            "pair ({}, {}) is labelled {}; expected nonmatch",
            p.a.id, p.b.id, p.label
        )));
    }
    schema
        .features
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let xs = feature_counts(nonmatch_pairs, i);
            if xs.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "feature `{name}`: {} non-match observation(s), need at least 2",
                    xs.len()
                )));
            }
            let n = xs.len() as f64;
            let mean = xs.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
            let var = xs.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(GaussianFit {
                feature: name.clone(),
                mean,
                stddev: var.sqrt(),
                n_obs: xs.len(),
                degenerate: var == 0.0,
            })
        })
        .collect()
}
