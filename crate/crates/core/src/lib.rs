//! Supervised probabilistic record linkage.
//!
//! Per-field edit-distance counts between two records are modelled as Poisson
//! draws whose latent rate carries a gamma prior fitted on labelled matches.
//! Candidate pairs are scored with the resulting negative binomial posterior
//! predictive, summed in log space over the fields both records share, and
//! classified against a threshold picked on training scores. Confirmed matches
//! can be folded back into the priors with conjugate updates.
//!
//! A Fellegi-Sunter baseline over binary agreement vectors lives in
//! [`fs_baseline`] for head-to-head comparison.

pub mod error;
pub mod eval;
pub mod features;
pub mod fs_baseline;
pub mod ingest;
pub mod nb_model;
pub mod pipeline;
pub mod simulate;

pub use error::{Error, Result};
pub use eval::{EvalReport, ThresholdPolicy};
pub use features::{compare, edit_distance, ComparisonVector};
pub use fs_baseline::FsModel;
pub use ingest::{Label, LabeledPair, Record, SchemaConfig};
pub use nb_model::{GammaParams, NbModel, ScoreResult};
