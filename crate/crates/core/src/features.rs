//! Edit-distance comparison vectors and error histograms.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{Label, LabeledPair, Record, SchemaConfig};

/// Levenshtein distance with unit costs over Unicode scalar values.
pub fn edit_distance(s: &str, t: &str) -> u32 {
    let s: Vec<char> = s.chars().collect();
    let t: Vec<char> = t.chars().collect();
    // keep the DP row over the shorter string
    let (long, short) = if s.len() >= t.len() { (&s, &t) } else { (&t, &s) };
    if short.is_empty() {
        return long.len() as u32;
    }
    let mut row: Vec<u32> = (0..=short.len() as u32).collect();
    for (i, &lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i as u32 + 1;
        for (j, &sc) in short.iter().enumerate() {
            let above = row[j + 1];
            let cost = u32::from(lc != sc);
            row[j + 1] = (diag + cost).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[short.len()]
}

/// Per-feature comparison of two records.
///
/// `counts[i]` is `None` when either record lacks feature `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonVector {
    pub counts: Vec<Option<u32>>,
}

impl ComparisonVector {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn present(&self) -> Vec<bool> {
        self.counts.iter().map(Option::is_some).collect()
    }

    pub fn num_present(&self) -> usize {
        self.counts.iter().filter(|c| c.is_some()).count()
    }

    /// Fellegi-Sunter agreement bits: set iff present and the values are equal.
    pub fn binary(&self) -> Vec<bool> {
        self.counts.iter().map(|c| *c == Some(0)).collect()
    }
}

pub fn compare(a: &Record, b: &Record) -> ComparisonVector {
    assert_eq!(
        a.values.len(),
        b.values.len(),
        "records `{}` and `{}` have different feature counts",
        a.id,
        b.id
    );
    let counts = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(edit_distance(x, y)),
            _ => None,
        })
        .collect();
    ComparisonVector { counts }
}

/// Present counts of one feature across `pairs`.
pub fn feature_counts<'a>(pairs: impl IntoIterator<Item = &'a LabeledPair>, feature: usize) -> Vec<u32> {
    pairs
        .into_iter()
        .filter_map(|p| match (p.a.value(feature), p.b.value(feature)) {
            (Some(x), Some(y)) => Some(edit_distance(x, y)),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistogramBy {
    /// One series per label; every present feature count of a pair is pooled.
    Class,
    /// One series per schema feature.
    Feature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramRow {
    pub group: String,
    pub bin: u32,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    pub rows: Vec<HistogramRow>,
}

impl Histogram {
    pub fn series(&self, group: &str) -> BTreeMap<u32, u64> {
        self.rows
            .iter()
            .filter(|r| r.group == group)
            .map(|r| (r.bin, r.count))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "bin", "count"])?;
        for r in &self.rows {
            w.write_record([r.group.clone(), r.bin.to_string(), r.count.to_string()])?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Unit-width histograms of edit distances over labelled pairs.
/// Unknown-labelled pairs are ignored.
pub fn error_histogram(pairs: &[LabeledPair], schema: &SchemaConfig, by: HistogramBy) -> Result<Histogram> {
    let labelled: Vec<&LabeledPair> = pairs.iter().filter(|p| p.label.is_known()).collect();
    if labelled.is_empty() {
        return Err(Error::EmptyInput("no labelled pairs to histogram".into()));
    }
    let mut groups: Vec<(String, BTreeMap<u32, u64>)> = match by {
        HistogramBy::Class => vec![
            (Label::Match.to_string(), BTreeMap::new()),
            (Label::NonMatch.to_string(), BTreeMap::new()),
        ],
        HistogramBy::Feature => schema
            .features
            .iter()
            .map(|f| (f.clone(), BTreeMap::new()))
            .collect(),
    };
    for p in labelled {
        let cv = compare(&p.a, &p.b);
        for (i, c) in cv.counts.iter().enumerate() {
            let Some(c) = c else { continue };
            let g = match by {
                HistogramBy::Class => usize::from(p.label == Label::NonMatch),
                HistogramBy::Feature => i,
            };
            *groups[g].1.entry(*c).or_default() += 1;
        }
    }
    let rows = groups
        .into_iter()
        .flat_map(|(group, bins)| {
            bins.into_iter().map(move |(bin, count)| HistogramRow {
                group: group.clone(),
                bin,
                count,
            })
        })
        .collect();
    Ok(Histogram { rows })
}
