//! TOML model files.
//!
//! Floats are written in shortest round-trip decimal form, so a save/load
//! cycle reproduces every `f64` bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GammaParams, NbModel};
use crate::error::{Error, Result};
use crate::ingest::SchemaConfig;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    model_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    trained_on: u64,
    #[serde(default)]
    average_per_feature: bool,
    schema: SchemaConfig,
    feature: Vec<FeatureEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureEntry {
    name: String,
    alpha: f64,
    beta: f64,
    n_obs: u64,
    sum_x: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

impl NbModel {
    pub fn to_toml_string(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model_version: self.version,
            threshold: self.threshold,
            trained_on: self.trained_on,
            average_per_feature: self.average_per_feature,
            schema: self.schema.clone(),
            feature: self
                .schema
                .features
                .iter()
                .zip(&self.params)
                .map(|(name, p)| FeatureEntry {
                    name: name.clone(),
                    alpha: p.alpha,
                    beta: p.beta,
                    n_obs: p.n_obs,
                    sum_x: p.sum_x,
                })
                .collect(),
        };
        toml::to_string(&file).expect("model serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let probe: VersionProbe =
            toml::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        match probe.format_version {
            Some(MODEL_FORMAT_VERSION) => {}
            Some(found) => {
                return Err(Error::FormatVersion {
                    found,
                    expected: MODEL_FORMAT_VERSION,
                })
            }
            None => return Err(Error::MalformedModel("missing `format_version`".into())),
        }
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
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
        let model = NbModel {
            params: file
                .feature
                .iter()
                .map(|f| GammaParams {
                    alpha: f.alpha,
                    beta: f.beta,
                    n_obs: f.n_obs,
                    sum_x: f.sum_x,
                })
                .collect(),
            schema: file.schema,
            threshold: file.threshold,
            version: file.model_version,
            trained_on: file.trained_on,
            average_per_feature: file.average_per_feature,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &NbModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_toml_string()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NbModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NbModel::from_toml_str(&text)
}
