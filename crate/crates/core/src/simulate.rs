//! Synthetic labelled datasets with known gamma-Poisson error processes.
//!
//! Match pairs get, per feature, a count drawn from `Poisson(θ)` with
//! `θ ~ Gamma(alpha, beta)` (shape/rate). Non-match pairs get counts from
//! `Poisson(alpha / beta + nonmatch_shift)`. Each count `x` is realised as a
//! pair of strings at edit distance exactly `x`: a random lowercase base and a
//! copy with `x` positions replaced by digits. Digits never occur in the base,
//! so no alignment can do better than the `x` substitutions.
//!
//! All randomness comes from a ChaCha8 stream seeded with the given `u64`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::ingest::{write_pairs, write_table, Label, LabeledPair, Record, SchemaConfig, Side};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub alpha: f64,
    pub beta: f64,
    pub n_features: usize,
    pub n_matches: usize,
    pub n_nonmatches: usize,
    pub nonmatch_shift: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(alpha: f64, beta: f64, n_features: usize, n_matches: usize, seed: u64) -> Self {
        SimConfig {
            alpha,
            beta,
            n_features,
            n_matches,
            n_nonmatches: n_matches,
            nonmatch_shift: 10.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.alpha) || !positive(self.beta) {
            return Err(Error::Config(format!(
                "alpha and beta must be positive and finite, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if self.n_features == 0 {
            return Err(Error::Config("need at least one feature".into()));
        }
        if self.n_matches == 0 {
            return Err(Error::Config("need at least one match pair".into()));
        }
        if !(self.nonmatch_shift >= 0.0 && self.nonmatch_shift.is_finite()) {
            return Err(Error::Config(format!(
                "nonmatch shift must be non-negative, got {}",
                self.nonmatch_shift
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub schema: SchemaConfig,
    pub table_a: Vec<Record>,
    pub table_b: Vec<Record>,
    pub pairs: Vec<LabeledPair>,
}

/// One draw from the gamma-mixed Poisson (negative binomial).
pub fn draw_gamma_poisson<R: Rng + ?Sized>(rng: &mut R, gamma: &Gamma<f64>) -> u32 {
    let rate = gamma.sample(rng);
    draw_poisson(rng, rate)
}

fn draw_poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let poisson = Poisson::new(rate).expect("positive finite rate");
    poisson.sample(rng) as u32
}

const BASE_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const NOISE_ALPHABET: &[u8] = b"0123456789";

/// Two strings at edit distance exactly `errors`.
fn string_pair<R: Rng + ?Sized>(rng: &mut R, errors: u32) -> (String, String) {
    let len = errors as usize + 4 + rng.random_range(0..8);
    let base: Vec<u8> = (0..len)
        .map(|_| BASE_ALPHABET[rng.random_range(0..BASE_ALPHABET.len())])
        .collect();
    let mut noisy = base.clone();
    for pos in sample(rng, len, errors as usize) {
        noisy[pos] = NOISE_ALPHABET[rng.random_range(0..NOISE_ALPHABET.len())];
    }
    (
        String::from_utf8(base).expect("ascii"),
        String::from_utf8(noisy).expect("ascii"),
    )
}

pub fn generate(cfg: &SimConfig) -> Result<SimDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gamma = Gamma::new(cfg.alpha, 1.0 / cfg.beta)
        .map_err(|e| Error::Config(format!("gamma({}, {}): {e}", cfg.alpha, cfg.beta)))?;
    let nonmatch_rate = cfg.alpha / cfg.beta + cfg.nonmatch_shift;

    let schema = SchemaConfig::new((0..cfg.n_features).map(|i| format!("f{i}")));
    let total = cfg.n_matches + cfg.n_nonmatches;
    let mut table_a = Vec::with_capacity(total);
    let mut table_b = Vec::with_capacity(total);
    let mut pairs = Vec::with_capacity(total);
    for i in 0..total {
        let label = if i < cfg.n_matches {
            Label::Match
        } else {
            Label::NonMatch
        };
        let (va, vb): (Vec<_>, Vec<_>) = (0..cfg.n_features)
            .map(|_| {
                let x = match label {
                    Label::Match => draw_gamma_poisson(&mut rng, &gamma),
                    _ => draw_poisson(&mut rng, nonmatch_rate),
                };
                let (s, t) = string_pair(&mut rng, x);
                (Some(s), Some(t))
            })
            .unzip();
        let a = Record::new(format!("a{i}"), va);
        let b = Record::new(format!("b{i}"), vb);
        pairs.push(LabeledPair::new(a.clone(), b.clone(), label));
        table_a.push(a);
        table_b.push(b);
    }
    Ok(SimDataset {
        schema,
        table_a,
        table_b,
        pairs,
    })
}

#[derive(Debug, Clone)]
pub struct SimPaths {
    pub schema: PathBuf,
    pub table_a: PathBuf,
    pub table_b: PathBuf,
    pub pairs: PathBuf,
}

impl SimDataset {
    /// Writes `schema.toml`, `table_a.csv`, `table_b.csv` and `pairs.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SimPaths> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SimPaths {
            schema: dir.join("schema.toml"),
            table_a: dir.join("table_a.csv"),
            table_b: dir.join("table_b.csv"),
            pairs: dir.join("pairs.csv"),
        };
        fs::write(&paths.schema, self.schema.to_toml_string())
            .map_err(|e| Error::io(&paths.schema, e))?;
        write_table(&paths.table_a, &self.table_a, &self.schema, Side::A)?;
        write_table(&paths.table_b, &self.table_b, &self.schema, Side::B)?;
        write_pairs(&paths.pairs, &self.pairs)?;
        Ok(paths)
    }
}
