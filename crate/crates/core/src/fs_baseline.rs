//! Fellegi-Sunter baseline over binary agreement vectors.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compare, ComparisonVector};
use crate::ingest::{Label, LabeledPair, SchemaConfig};
use crate::nb_model::MODEL_FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq)]
pub struct FsModel {
    pub schema: SchemaConfig,
    /// P(agree | match) per feature.
    pub m: Vec<f64>,
    /// P(agree | non-match) per feature.
    pub u: Vec<f64>,
    pub t_upper: Option<f64>,
    pub t_lower: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsDecision {
    Match,
    Possible,
    NonMatch,
}

impl fmt::Display for FsDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FsDecision::Match => "match",
            FsDecision::Possible => "possible",
            FsDecision::NonMatch => "nonmatch",
        })
    }
}

/// Add-one smoothed agreement rate.
fn smoothed(agree: usize, total: usize) -> f64 {
    (agree as f64 + 1.0) / (total as f64 + 2.0)
}

/// Estimates m and u from labelled pairs. Unknown-labelled pairs are ignored.
pub fn fit_fs(train: &[LabeledPair], schema: &SchemaConfig) -> Result<FsModel> {
    schema.validate()?;
    let k = schema.num_features();
    // [agree, present] per feature and class
    let mut match_tally = vec![(0usize, 0usize); k];
    let mut non_tally = vec![(0usize, 0usize); k];
    let (mut n_match, mut n_non) = (0, 0);
    for p in train {
        let tally = match p.label {
            Label::Match => {
                n_match += 1;
                &mut match_tally
            }
            Label::NonMatch => {
                n_non += 1;
                &mut non_tally
            }
            Label::Unknown => continue,
        };
        let cv = compare(&p.a, &p.b);
        for (t, c) in tally.iter_mut().zip(&cv.counts) {
            if let Some(c) = c {
                t.1 += 1;
                if *c == 0 {
                    t.0 += 1;
                }
            }
        }
    }
    if n_match == 0 || n_non == 0 {
        return Err(Error::InsufficientData(format!(
            "Fellegi-Sunter fit needs both classes; got {n_match} match and {n_non} nonmatch pairs"
        )));
    }
    Ok(FsModel {
        schema: schema.clone(),
        m: match_tally.iter().map(|&(a, n)| smoothed(a, n)).collect(),
        u: non_tally.iter().map(|&(a, n)| smoothed(a, n)).collect(),
        t_upper: None,
        t_lower: None,
    })
}

impl FsModel {
    pub fn with_thresholds(mut self, t_lower: f64, t_upper: f64) -> Result<Self> {
        if t_lower.is_nan() || t_upper.is_nan() || t_lower > t_upper {
            return Err(Error::Config(format!(
                "thresholds must satisfy t_lower <= t_upper, got {t_lower} and {t_upper}"
            )));
        }
        self.t_lower = Some(t_lower);
        self.t_upper = Some(t_upper);
        Ok(self)
    }

    /// Log match/non-match likelihood ratio summed over present features.
    pub fn weight_vector(&self, cv: &ComparisonVector) -> Option<f64> {
        let mut w = 0.0;
        let mut used = 0;
        for ((agree, c), (&m, &u)) in cv
            .binary()
            .into_iter()
            .zip(&cv.counts)
            .zip(self.m.iter().zip(&self.u))
        {
            if c.is_none() {
                continue;
            }
            used += 1;
            w += if agree {
                m.ln() - u.ln()
            } else {
                (1.0 - m).ln() - (1.0 - u).ln()
            };
        }
        (used > 0).then_some(w)
    }

    pub fn weight(&self, pair: &LabeledPair) -> Result<f64> {
        self.weight_vector(&compare(&pair.a, &pair.b))
            .ok_or_else(|| Error::Unscorable {
                id_a: pair.a.id.clone(),
                id_b: pair.b.id.clone(),
            })
    }

    pub fn decide(&self, weight: f64) -> Result<FsDecision> {
        let (Some(lo), Some(hi)) = (self.t_lower, self.t_upper) else {
            return Err(Error::Config("Fellegi-Sunter thresholds are not set".into()));
        };
        Ok(if weight > hi {
            FsDecision::Match
        } else if weight < lo {
            FsDecision::NonMatch
        } else {
            FsDecision::Possible
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.schema.num_features();
        if self.m.len() != k || self.u.len() != k {
            return Err(Error::InvariantViolation(
                "m/u lists do not match the schema feature list".into(),
            ));
        }
        for (name, (&m, &u)) in self.schema.features.iter().zip(self.m.iter().zip(&self.u)) {
            if !(m > 0.0 && m < 1.0 && u > 0.0 && u < 1.0) {
                return Err(Error::InvariantViolation(format!(
                    "feature `{name}`: m = {m}, u = {u} must lie strictly inside (0, 1)"
                )));
            }
        }
        match (self.t_lower, self.t_upper) {
            (Some(lo), Some(hi)) if lo.is_nan() || hi.is_nan() || lo > hi => Err(
                Error::InvariantViolation(format!("t_lower {lo} exceeds t_upper {hi}")),
            ),
            (Some(_), None) | (None, Some(_)) => Err(Error::InvariantViolation(
                "only one of t_lower/t_upper is set".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FsFile {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_lower: Option<f64>,
    schema: SchemaConfig,
    feature: Vec<FsEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FsEntry {
    name: String,
    m: f64,
    u: f64,
}

impl FsModel {
    pub fn to_toml_string(&self) -> String {
        let file = FsFile {
            format_version: MODEL_FORMAT_VERSION,
            t_upper: self.t_upper,
            t_lower: self.t_lower,
            schema: self.schema.clone(),
            feature: self
                .schema
                .features
                .iter()
                .zip(self.m.iter().zip(&self.u))
                .map(|(name, (&m, &u))| FsEntry {
                    name: name.clone(),
                    m,
                    u,
                })
                .collect(),
        };
        toml::to_string(&file).expect("model serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: FsFile = toml::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if file.feature.len() != file.schema.features.len()
            || file
                .feature
                .iter()
                .zip(&file.schema.features)
                .any(|(f, s)| &f.name != s)
        {
            return Err(Error::InvariantViolation(
                "feature entries do not match the schema feature list".into(),
            ));
        }
        let model = FsModel {
            m: file.feature.iter().map(|f| f.m).collect(),
            u: file.feature.iter().map(|f| f.u).collect(),
            schema: file.schema,
            t_upper: file.t_upper,
            t_lower: file.t_lower,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
