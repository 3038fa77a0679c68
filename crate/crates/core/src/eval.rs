//! Classification metrics, ROC/PR curves and threshold selection.
//!
//! Every function here takes `(score, label)` pairs where a higher score means
//! "more likely a match" and the decision rule is `score > threshold`. Equal
//! scores always move together along a curve.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;

pub type Scored = (f64, Label);

fn check_labels(scores: &[Scored]) -> Result<(u64, u64)> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no scores to evaluate".into()));
    }
    let mut pos = 0;
    let mut neg = 0;
    for &(s, l) in scores {
        if s.is_nan() {
            return Err(Error::Precondition("NaN score".into()));
        }
        match l {
            Label::Match => pos += 1,
            Label::NonMatch => neg += 1,
            Label::Unknown => {
                return Err(Error::Precondition(
                    "unlabelled pair passed to a metric".into(),
                ))
            }
        }
    }
    Ok((pos, neg))
}

/// Score groups in descending order: `(score, positives, negatives)`.
fn descending_groups(scores: &[Scored]) -> Vec<(f64, u64, u64)> {
    let mut sorted: Vec<Scored> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for (s, l) in sorted {
        let (p, n) = if l == Label::Match { (1, 0) } else { (0, 1) };
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                g.1 += p;
                g.2 += n;
            }
            _ => groups.push((s, p, n)),
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// 1 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio_or(self.tp, self.tp + self.fp, 1.0)
    }

    /// 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio_or(self.tp, self.tp + self.fn_, 0.0)
    }

    pub fn accuracy(&self) -> f64 {
        ratio_or(self.tp + self.tn, self.total(), 0.0)
    }

    pub fn f_beta(&self, beta: f64) -> f64 {
        f_beta(self.precision(), self.recall(), beta)
    }
}

fn ratio_or(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 || recall == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

pub fn confusion(scores: &[Scored], threshold: f64) -> Result<Confusion> {
    check_labels(scores)?;
    let mut c = Confusion::default();
    for &(s, l) in scores {
        match (s > threshold, l == Label::Match) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// ROC points from `(0, 0)` to `(1, 1)` and the area under them.
///
/// The trapezoid sum is accumulated in integers (twice the area times
/// `P * N`) and divided once, so the result equals the tie-corrected
/// Mann-Whitney statistic bit for bit.
pub fn roc_auc(scores: &[Scored]) -> Result<(Vec<(f64, f64)>, f64)> {
    let (pos, neg) = check_labels(scores)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData(
            "ROC needs at least one match and one nonmatch".into(),
        ));
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    for (_, p, n) in descending_groups(scores) {
        let tp_next = tp + p;
        twice_area += u128::from(n) * u128::from(tp + tp_next);
        tp = tp_next;
        fp += n;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = twice_area as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64;
    Ok((points, auc))
}

/// `(recall, precision)` after admitting each descending score group.
pub fn pr_curve(scores: &[Scored]) -> Result<Vec<(f64, f64)>> {
    let (pos, _) = check_labels(scores)?;
    if pos == 0 {
        return Err(Error::InsufficientData("PR curve needs at least one match".into()));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    Ok(descending_groups(scores)
        .into_iter()
        .map(|(_, p, n)| {
            tp += p;
            fp += n;
            (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    MaxFBeta(f64),
    /// Highest recall among cuts whose precision reaches the floor.
    PrecisionFloor(f64),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::MaxFBeta(0.5)
    }
}

impl ThresholdPolicy {
    /// The F-measure weight reported alongside this policy's results.
    pub fn report_beta(&self) -> f64 {
        match *self {
            ThresholdPolicy::MaxFBeta(b) => b,
            ThresholdPolicy::PrecisionFloor(_) => 0.5,
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::MaxFBeta(b) => write!(f, "max_f{b}"),
            ThresholdPolicy::PrecisionFloor(p) => write!(f, "precision_floor={p}"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix("precision_floor=") {
            let p: f64 = p.parse().map_err(|_| format!("bad precision floor `{p}`"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("precision floor must lie in [0, 1], got {p}"));
            }
            return Ok(ThresholdPolicy::PrecisionFloor(p));
        }
        if let Some(b) = s.strip_prefix("max_f") {
            let b: f64 = b.parse().map_err(|_| format!("bad F-measure weight `{b}`"))?;
            if !(b > 0.0 && b.is_finite()) {
                return Err(format!("F-measure weight must be positive, got {b}"));
            }
            return Ok(ThresholdPolicy::MaxFBeta(b));
        }
        Err(format!(
            "unknown policy `{s}` (expected max_f1, max_f0.5 or precision_floor=<p>)"
        ))
    }
}

/// A cut strictly between two adjacent scores.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo / 2.0 + hi / 2.0;
    if mid > lo && mid < hi {
        mid
    } else {
        // adjacent doubles: `score > lo` already separates them
        lo
    }
}

/// Every candidate cut in descending order with its confusion matrix:
/// `+inf`, the midpoints between consecutive distinct scores, `-inf`.
pub fn candidate_cuts(scores: &[Scored]) -> Result<Vec<(f64, Confusion)>> {
    let (pos, neg) = check_labels(scores)?;
    let groups = descending_groups(scores);
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: pos,
        tn: neg,
    };
    let mut cuts = vec![(f64::INFINITY, c)];
    for (i, &(_, p, n)) in groups.iter().enumerate() {
        c.tp += p;
        c.fn_ -= p;
        c.fp += n;
        c.tn -= n;
        let cut = match groups.get(i + 1) {
            Some(&(below, _, _)) => midpoint(below, groups[i].0),
            None => f64::NEG_INFINITY,
        };
        cuts.push((cut, c));
    }
    Ok(cuts)
}

/// Picks the cut that optimizes `policy` on the given scores. Ties go to the
/// higher cut.
pub fn select_threshold(scores: &[Scored], policy: ThresholdPolicy) -> Result<f64> {
    let (pos, neg) = check_labels(scores)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData(
            "threshold selection needs both classes".into(),
        ));
    }
    let cuts = candidate_cuts(scores)?;
    match policy {
        ThresholdPolicy::MaxFBeta(beta) => {
            let mut best = (f64::INFINITY, f64::NEG_INFINITY);
            for (cut, c) in &cuts {
                let f = c.f_beta(beta);
                if f > best.1 {
                    best = (*cut, f);
                }
            }
            Ok(best.0)
        }
        ThresholdPolicy::PrecisionFloor(floor) => {
            let mut best: Option<(f64, f64)> = None;
            let mut best_precision: f64 = 0.0;
            for (cut, c) in cuts.iter().filter(|(_, c)| c.tp > 0) {
                let p = c.precision();
                best_precision = best_precision.max(p);
                if p >= floor && best.is_none_or(|(_, r)| c.recall() > r) {
                    best = Some((*cut, c.recall()));
                }
            }
            best.map(|(cut, _)| cut).ok_or(Error::InfeasiblePrecision {
                floor,
                best: best_precision,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub beta: f64,
    pub f_beta: f64,
    pub auc: f64,
    pub roc_points: Vec<(f64, f64)>,
    pub pr_points: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn build(scores: &[Scored], threshold: f64, beta: f64) -> Result<Self> {
        let c = confusion(scores, threshold)?;
        let (roc_points, auc) = roc_auc(scores)?;
        let pr_points = pr_curve(scores)?;
        Ok(EvalReport {
            threshold,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            precision: c.precision(),
            recall: c.recall(),
            accuracy: c.accuracy(),
            beta,
            f_beta: c.f_beta(beta),
            auc,
            roc_points,
            pr_points,
        })
    }

    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

/// Writes `points` as a two-column CSV with the given axis names.
pub fn write_curve_csv<W: Write>(out: W, x_name: &str, y_name: &str, points: &[(f64, f64)]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([x_name, y_name])?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()
}

pub fn save_curve_csv(path: impl AsRef<Path>, x_name: &str, y_name: &str, points: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_curve_csv(std::io::BufWriter::new(file), x_name, y_name, points)
        .map_err(|e| Error::io(path, e))
}
