//! End-to-end runs behind the command-line subcommands.
//!
//! Each `cmd_*` function is a pure function of its input files and flags:
//! output files carry no timestamps and are written in a fixed order, so
//! reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{save_curve_csv, select_threshold, EvalReport, Scored, ThresholdPolicy};
use crate::features::{compare, error_histogram, Histogram, HistogramBy};
use crate::fs_baseline::{fit_fs, FsModel};
use crate::ingest::{
    cross_product_pairs, dedup_pairs, load_pairs, load_table, split, Label, LabelCounts,
    LabeledPair, Record, SchemaConfig, Side, Split,
};
use crate::nb_model::{load_model, save_model, NbModel};
use crate::simulate::{generate, SimConfig, SimPaths};

/// Loaded tables and pairs. `table_b` is `None` in single-table dedup mode.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: SchemaConfig,
    pub table_a: Vec<Record>,
    pub table_b: Option<Vec<Record>>,
    pub pairs: Vec<LabeledPair>,
}

impl Dataset {
    pub fn load_tables(schema: SchemaConfig, table_a: &Path, table_b: Option<&Path>) -> Result<Self> {
        let a = load_table(table_a, &schema, Side::A)?;
        let b = table_b
            .map(|p| load_table(p, &schema, Side::B))
            .transpose()?;
        Ok(Dataset {
            schema,
            table_a: a,
            table_b: b,
            pairs: Vec::new(),
        })
    }

    pub fn load(schema: SchemaConfig, table_a: &Path, table_b: Option<&Path>, pairs: &Path) -> Result<Self> {
        let mut d = Self::load_tables(schema, table_a, table_b)?;
        d.pairs = d.load_pairs(pairs)?;
        Ok(d)
    }

    pub fn table_b(&self) -> &[Record] {
        self.table_b.as_deref().unwrap_or(&self.table_a)
    }

    pub fn load_pairs(&self, path: &Path) -> Result<Vec<LabeledPair>> {
        load_pairs(path, &self.table_a, self.table_b())
    }

    /// Every candidate pair: the cross product, or unordered pairs in dedup mode.
    pub fn all_pairs(&self, limit: Option<usize>) -> Result<Vec<LabeledPair>> {
        match &self.table_b {
            Some(b) => cross_product_pairs(&self.table_a, b, limit),
            None => dedup_pairs(&self.table_a, limit),
        }
    }
}

/// Settings shared by the labelled-data subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub schema: PathBuf,
    pub table_a: PathBuf,
    pub table_b: Option<PathBuf>,
    pub pairs: PathBuf,
    pub seed: u64,
    pub train_fraction: f64,
    pub policy: ThresholdPolicy,
    pub out_dir: PathBuf,
    pub average_per_feature: bool,
}

impl RunConfig {
    pub fn check_paths(&self) -> Result<()> {
        for p in [Some(&self.schema), Some(&self.table_a), self.table_b.as_ref(), Some(&self.pairs)]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        self.check_paths()?;
        let schema = SchemaConfig::load(&self.schema)?;
        Dataset::load(schema, &self.table_a, self.table_b.as_deref(), &self.pairs)
    }

    pub fn split(&self, pairs: &[LabeledPair]) -> Result<Split> {
        split(pairs, self.train_fraction, self.seed)
    }

    fn run_info(&self, split: &str) -> RunInfo {
        RunInfo {
            seed: self.seed,
            train_fraction: self.train_fraction,
            policy: self.policy.to_string(),
            split: split.to_string(),
            average_per_feature: self.average_per_feature,
            n_scored: 0,
            n_unscorable: 0,
            model_version: None,
        }
    }

    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub train_fraction: f64,
    pub policy: String,
    pub split: String,
    pub average_per_feature: bool,
    pub n_scored: u64,
    pub n_unscorable: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_version: Option<u64>,
}

/// An evaluation report together with the run settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: RunInfo,
    pub report: EvalReport,
}

impl RunReport {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Writes `<stem>_report.toml`, `<stem>_roc.csv` and `<stem>_pr.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{stem}_report.toml"));
        fs::write(&path, self.to_toml_string()).map_err(|e| Error::io(&path, e))?;
        save_curve_csv(dir.join(format!("{stem}_roc.csv")), "fpr", "tpr", &self.report.roc_points)?;
        save_curve_csv(dir.join(format!("{stem}_pr.csv")), "recall", "precision", &self.report.pr_points)?;
        Ok(path)
    }
}

/// Scores the labelled pairs; unscorable and unlabelled pairs are skipped.
/// Returns the scores and the number of unscorable labelled pairs.
pub fn nb_scores(model: &NbModel, pairs: &[LabeledPair]) -> (Vec<Scored>, usize) {
    labelled_scores(pairs, |p| model.score_vector(&compare(&p.a, &p.b)).map(|r| r.log_score))
}

pub fn fs_scores(model: &FsModel, pairs: &[LabeledPair]) -> (Vec<Scored>, usize) {
    labelled_scores(pairs, |p| model.weight_vector(&compare(&p.a, &p.b)))
}

fn labelled_scores(pairs: &[LabeledPair], f: impl Fn(&LabeledPair) -> Option<f64>) -> (Vec<Scored>, usize) {
    let mut out = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for p in pairs.iter().filter(|p| p.label.is_known()) {
        match f(p) {
            Some(s) => out.push((s, p.label)),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} labelled pair(s) had no feature present on both sides and were skipped");
    }
    (out, skipped)
}

/// Fits the priors on the training matches and picks the threshold on the
/// training scores of both classes.
pub fn train_nb(
    train: &[LabeledPair],
    schema: &SchemaConfig,
    policy: ThresholdPolicy,
    average_per_feature: bool,
) -> Result<(NbModel, EvalReport, usize)> {
    let matches: Vec<LabeledPair> = train
        .iter()
        .filter(|p| p.label == Label::Match)
        .cloned()
        .collect();
    let model = NbModel::train(&matches, schema)?.with_average_per_feature(average_per_feature);
    let (scores, skipped) = nb_scores(&model, train);
    let threshold = select_threshold(&scores, policy)?;
    let model = model.with_threshold(threshold);
    let report = EvalReport::build(&scores, threshold, policy.report_beta())?;
    Ok((model, report, skipped))
}

pub fn evaluate_nb(model: &NbModel, pairs: &[LabeledPair], beta: f64) -> Result<(EvalReport, usize)> {
    let threshold = model
        .threshold
        .ok_or_else(|| Error::Config("model has no threshold; run train first".into()))?;
    let (scores, skipped) = nb_scores(model, pairs);
    Ok((EvalReport::build(&scores, threshold, beta)?, skipped))
}

/// Fits m/u on the training pairs and collapses both thresholds onto the
/// single cut chosen on the training weights.
pub fn train_fs(train: &[LabeledPair], schema: &SchemaConfig, policy: ThresholdPolicy) -> Result<(FsModel, EvalReport, usize)> {
    let model = fit_fs(train, schema)?;
    let (scores, skipped) = fs_scores(&model, train);
    let cut = select_threshold(&scores, policy)?;
    let model = model.with_thresholds(cut, cut)?;
    let report = EvalReport::build(&scores, cut, policy.report_beta())?;
    Ok((model, report, skipped))
}

pub fn evaluate_fs(model: &FsModel, pairs: &[LabeledPair], beta: f64) -> Result<(EvalReport, usize)> {
    let cut = model
        .t_upper
        .ok_or_else(|| Error::Config("Fellegi-Sunter model has no thresholds".into()))?;
    let (scores, skipped) = fs_scores(model, pairs);
    Ok((EvalReport::build(&scores, cut, beta)?, skipped))
}

fn check_schema(model_schema: &SchemaConfig, data_schema: &SchemaConfig) -> Result<()> {
    if model_schema.features != data_schema.features {
        return Err(Error::SchemaMismatch(format!(
            "model features {:?} differ from data features {:?}",
            model_schema.features, data_schema.features
        )));
    }
    if model_schema.normalize != data_schema.normalize {
        return Err(Error::SchemaMismatch(
            "model and data use different normalization settings".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: NbModel,
    pub report: RunReport,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
}

/// Splits, trains on the training matches, selects the threshold and writes
/// `model.toml` plus the training report and curves.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    let data = cfg.load_dataset()?;
    let split = cfg.split(&data.pairs)?;
    let counts = LabelCounts::of(&split.train);
    info!(
        "training split: {} match, {} nonmatch (seed {}, fraction {})",
        counts.matches, counts.nonmatches, cfg.seed, cfg.train_fraction
    );
    let (model, report, skipped) = train_nb(&split.train, &data.schema, cfg.policy, cfg.average_per_feature)?;
    cfg.ensure_out_dir()?;
    let model_path = cfg.out_dir.join("model.toml");
    save_model(&model, &model_path)?;
    let mut run = cfg.run_info("train");
    run.n_scored = report.confusion().total();
    run.n_unscorable = skipped as u64;
    run.model_version = Some(model.version);
    let report = RunReport { run, report };
    let report_path = report.write(&cfg.out_dir, "train")?;
    Ok(TrainOutput {
        model,
        report,
        model_path,
        report_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSide {
    Train,
    Test,
}

impl SplitSide {
    fn name(self) -> &'static str {
        match self {
            SplitSide::Train => "train",
            SplitSide::Test => "test",
        }
    }
}

/// Re-creates the split and evaluates a saved model on one side of it.
pub fn cmd_evaluate(cfg: &RunConfig, model_path: &Path, side: SplitSide) -> Result<RunReport> {
    let model = load_model(model_path)?;
    let data = cfg.load_dataset()?;
    check_schema(&model.schema, &data.schema)?;
    if model.average_per_feature != cfg.average_per_feature {
        warn!(
            "model was trained with average_per_feature = {}; scoring with the model's setting",
            model.average_per_feature
        );
    }
    let split = cfg.split(&data.pairs)?;
    let pairs = match side {
        SplitSide::Train => &split.train,
        SplitSide::Test => &split.test,
    };
    let (report, skipped) = evaluate_nb(&model, pairs, cfg.policy.report_beta())?;
    let mut run = cfg.run_info(side.name());
    run.average_per_feature = model.average_per_feature;
    run.n_scored = report.confusion().total();
    run.n_unscorable = skipped as u64;
    run.model_version = Some(model.version);
    let out = RunReport { run, report };
    cfg.ensure_out_dir()?;
    out.write(&cfg.out_dir, &format!("eval_{}", side.name()))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    pub id_a: String,
    pub id_b: String,
    /// `None` for an unscorable pair.
    pub log_score: Option<f64>,
    pub decision: Option<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScoreSummary {
    pub scored: usize,
    pub matches: usize,
    pub unscorable: usize,
}

pub fn score_pairs(model: &NbModel, pairs: &[LabeledPair]) -> Result<(Vec<ScoredRow>, ScoreSummary)> {
    if model.threshold.is_none() {
        return Err(Error::Config("model has no threshold; run train first".into()));
    }
    let mut summary = ScoreSummary::default();
    let rows = pairs
        .iter()
        .map(|p| {
            let r = model.score_vector(&compare(&p.a, &p.b));
            match r {
                Some(r) => {
                    summary.scored += 1;
                    if r.decision == Some(Label::Match) {
                        summary.matches += 1;
                    }
                }
                None => summary.unscorable += 1,
            }
            ScoredRow {
                id_a: p.a.id.clone(),
                id_b: p.b.id.clone(),
                log_score: r.map(|r| r.log_score),
                decision: r.and_then(|r| r.decision),
            }
        })
        .collect();
    Ok((rows, summary))
}

pub fn write_scored_csv(path: &Path, rows: &[ScoredRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["id_a", "id_b", "log_score", "decision"])
        .map_err(|e| Error::csv(path, e))?;
    for r in rows {
        let score = r.log_score.map(|s| s.to_string()).unwrap_or_default();
        let decision = match (r.log_score, r.decision) {
            (None, _) => "unscorable".to_string(),
            (Some(_), Some(d)) => d.to_string(),
            (Some(_), None) => String::new(),
        };
        w.write_record([r.id_a.as_str(), r.id_b.as_str(), &score, &decision])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inputs for `score`, `update` and `histogram`, which need no split.
#[derive(Debug, Clone)]
pub struct TableConfig {
    /// Falls back to the model's schema when absent.
    pub schema: Option<PathBuf>,
    pub table_a: PathBuf,
    pub table_b: Option<PathBuf>,
}

impl TableConfig {
    fn load(&self, model_schema: Option<&SchemaConfig>) -> Result<Dataset> {
        let schema = match (&self.schema, model_schema) {
            (Some(p), Some(m)) => {
                let s = SchemaConfig::load(p)?;
                check_schema(m, &s)?;
                s
            }
            (Some(p), None) => SchemaConfig::load(p)?,
            (None, Some(m)) => m.clone(),
            (None, None) => return Err(Error::Config("a schema file is required".into())),
        };
        Dataset::load_tables(schema, &self.table_a, self.table_b.as_deref())
    }
}

/// Scores the given pairs (or every candidate pair) and writes
/// `id_a,id_b,log_score,decision` rows to `out`.
pub fn cmd_score(
    tables: &TableConfig,
    model_path: &Path,
    pairs: Option<&Path>,
    limit: Option<usize>,
    out: &Path,
) -> Result<ScoreSummary> {
    let model = load_model(model_path)?;
    let data = tables.load(Some(&model.schema))?;
    let pairs = match pairs {
        Some(p) => data.load_pairs(p)?,
        None => data.all_pairs(limit)?,
    };
    let (rows, summary) = score_pairs(&model, &pairs)?;
    write_scored_csv(out, &rows)?;
    info!(
        "scored {} pair(s): {} match, {} unscorable",
        summary.scored, summary.matches, summary.unscorable
    );
    Ok(summary)
}

/// Absorbs every confirmed match in `confirmed` and writes the new model to
/// `out`. Nothing is written unless every pair can be absorbed.
pub fn cmd_update(tables: &TableConfig, model_path: &Path, confirmed: &Path, out: &Path) -> Result<NbModel> {
    let same_file = match (fs::canonicalize(model_path), fs::canonicalize(out)) {
        (Ok(a), Ok(b)) => a == b,
        _ => model_path == out,
    };
    if same_file {
        return Err(Error::Config(
            "refusing to overwrite the input model; choose a different output path".into(),
        ));
    }
    let model = load_model(model_path)?;
    let data = tables.load(Some(&model.schema))?;
    let pairs = data.load_pairs(confirmed)?;
    let next = model.update_batch(&pairs)?;

    let tmp = out.with_extension("toml.partial");
    save_model(&next, &tmp)?;
    fs::rename(&tmp, out).map_err(|e| Error::io(out, e))?;
    info!(
        "absorbed {} confirmed match(es); model version {} -> {}",
        pairs.len(),
        model.version,
        next.version
    );
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub fs_model: FsModel,
    pub fs_train: RunReport,
    pub fs_test: RunReport,
    pub nb_test: RunReport,
}

/// Fits the Fellegi-Sunter baseline and the negative binomial model on the
/// same split and writes both test reports side by side.
pub fn cmd_baseline(cfg: &RunConfig) -> Result<BaselineOutput> {
    let data = cfg.load_dataset()?;
    let split = cfg.split(&data.pairs)?;
    let beta = cfg.policy.report_beta();

    let (fs_model, fs_train, fs_skipped) = train_fs(&split.train, &data.schema, cfg.policy)?;
    let (fs_test, fs_test_skipped) = evaluate_fs(&fs_model, &split.test, beta)?;
    let (nb_model, _, _) = train_nb(&split.train, &data.schema, cfg.policy, cfg.average_per_feature)?;
    let (nb_test, nb_skipped) = evaluate_nb(&nb_model, &split.test, beta)?;

    let wrap = |split_name: &str, report: EvalReport, skipped: usize| {
        let mut run = cfg.run_info(split_name);
        run.n_scored = report.confusion().total();
        run.n_unscorable = skipped as u64;
        RunReport { run, report }
    };
    let out = BaselineOutput {
        fs_train: wrap("train", fs_train, fs_skipped),
        fs_test: wrap("test", fs_test, fs_test_skipped),
        nb_test: wrap("test", nb_test, nb_skipped),
        fs_model,
    };
    cfg.ensure_out_dir()?;
    out.fs_model.save(cfg.out_dir.join("fs_model.toml"))?;
    out.fs_train.write(&cfg.out_dir, "fs_train")?;
    out.fs_test.write(&cfg.out_dir, "fs_test")?;
    out.nb_test.write(&cfg.out_dir, "nb_test")?;
    let summary = cfg.out_dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&summary).map_err(|e| Error::csv(&summary, e))?;
    let rows = [
        ["model", "auc", "precision", "recall", "accuracy", "f_beta"].map(String::from),
        metric_row("negative_binomial", &out.nb_test.report),
        metric_row("fellegi_sunter", &out.fs_test.report),
    ];
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(&summary, e))?;
    }
    w.flush().map_err(|e| Error::io(&summary, e))?;
    Ok(out)
}

fn metric_row(name: &str, r: &EvalReport) -> [String; 6] {
    [
        name.to_string(),
        r.auc.to_string(),
        r.precision.to_string(),
        r.recall.to_string(),
        r.accuracy.to_string(),
        r.f_beta.to_string(),
    ]
}

pub fn cmd_simulate(cfg: &SimConfig, out_dir: &Path) -> Result<SimPaths> {
    let data = generate(cfg)?;
    data.write(out_dir)
}

/// Histogram over labelled pairs, optionally restricted to one label.
pub fn cmd_histogram(
    tables: &TableConfig,
    pairs: &Path,
    by: HistogramBy,
    only: Option<Label>,
    out: &Path,
) -> Result<Histogram> {
    let data = tables.load(None)?;
    let mut pairs = data.load_pairs(pairs)?;
    if let Some(l) = only {
        pairs.retain(|p| p.label == l);
    }
    let h = error_histogram(&pairs, &data.schema, by)?;
    h.save(out)?;
    Ok(h)
}
