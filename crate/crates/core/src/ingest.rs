//! Source tables, labelled pair files and train/test splitting.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// String normalization applied to every feature value on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Normalization {
    pub lowercase: bool,
    pub trim: bool,
    pub collapse_ws: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            lowercase: true,
            trim: true,
            collapse_ws: true,
        }
    }
}

impl Normalization {
    pub fn none() -> Self {
        Normalization {
            lowercase: false,
            trim: false,
            collapse_ws: false,
        }
    }

    pub fn apply(&self, raw: &str) -> String {
        let mut s = if self.trim {
            raw.trim().to_string()
        } else {
            raw.to_string()
        };
        if self.collapse_ws {
            let mut out = String::with_capacity(s.len());
            let mut in_ws = false;
            for c in s.chars() {
                if c.is_whitespace() {
                    if !in_ws {
                        out.push(' ');
                    }
                    in_ws = true;
                } else {
                    out.push(c);
                    in_ws = false;
                }
            }
            s = out;
        }
        if self.lowercase {
            s = s.to_lowercase();
        }
        s
    }
}

fn default_id_column() -> String {
    "id".to_string()
}

/// Which fields are compared and how both tables identify their rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub features: Vec<String>,
    #[serde(default)]
    pub normalize: Normalization,
    #[serde(default = "default_id_column")]
    pub id_column_a: String,
    #[serde(default = "default_id_column")]
    pub id_column_b: String,
}

impl SchemaConfig {
    pub fn new<S: Into<String>>(features: impl IntoIterator<Item = S>) -> Self {
        SchemaConfig {
            features: features.into_iter().map(Into::into).collect(),
            normalize: Normalization::default(),
            id_column_a: default_id_column(),
            id_column_b: default_id_column(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("feature list is empty".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if !seen.insert(f.as_str()) {
                return Err(Error::Schema(format!("feature `{f}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: SchemaConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }
}

/// Which of the two configured tables a file plays the role of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

impl Side {
    fn id_column<'s>(&self, schema: &'s SchemaConfig) -> &'s str {
        match self {
            Side::A => &schema.id_column_a,
            Side::B => &schema.id_column_b,
        }
    }
}

/// One row of a source table. `values` is aligned with the schema's feature
/// list; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub values: Vec<Option<String>>,
}

impl Record {
    pub fn new(id: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Record {
            id: id.into(),
            values,
        }
    }

    pub fn value(&self, feature: usize) -> Option<&str> {
        self.values.get(feature).and_then(|v| v.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Match,
    NonMatch,
    Unknown,
}

impl Label {
    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Match => "match",
            Label::NonMatch => "nonmatch",
            Label::Unknown => "unknown",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() {
            Ok(Label::Unknown)
        } else if t.eq_ignore_ascii_case("match") {
            Ok(Label::Match)
        } else if t.eq_ignore_ascii_case("nonmatch") {
            Ok(Label::NonMatch)
        } else {
            Err(format!("unrecognised label `{t}` (expected match or nonmatch)"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub a: Record,
    pub b: Record,
    pub label: Label,
}

impl LabeledPair {
    pub fn new(a: Record, b: Record, label: Label) -> Self {
        LabeledPair { a, b, label }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub matches: usize,
    pub nonmatches: usize,
    pub unknown: usize,
}

impl LabelCounts {
    pub fn of(pairs: &[LabeledPair]) -> Self {
        let mut c = LabelCounts::default();
        for p in pairs {
            match p.label {
                Label::Match => c.matches += 1,
                Label::NonMatch => c.nonmatches += 1,
                Label::Unknown => c.unknown += 1,
            }
        }
        c
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

/// Reads a source table, keeping only the id column and the schema features.
pub fn load_table(path: impl AsRef<Path>, schema: &SchemaConfig, side: Side) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::Schema(format!("{}: header lacks column `{name}`", path.display()))
        })
    };
    let id_col = column(side.id_column(schema))?;
    let feature_cols = schema
        .features
        .iter()
        .map(|f| column(f))
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let row_no = row + 1;
        let rec = result.map_err(|e| Error::csv(path, e))?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Integrity(format!(
                "{}: data row {row_no} has an empty id",
                path.display()
            )));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Integrity(format!(
                "{}: duplicate id `{id}` at data row {row_no}",
                path.display()
            )));
        }
        let values = feature_cols
            .iter()
            .map(|&c| {
                let v = schema.normalize.apply(rec.get(c).unwrap_or(""));
                (!v.is_empty()).then_some(v)
            })
            .collect();
        records.push(Record { id, values });
    }
    Ok(records)
}

/// Writes records back out as a table with the schema's column names.
/// Missing values become empty cells.
pub fn write_table(path: impl AsRef<Path>, records: &[Record], schema: &SchemaConfig, side: Side) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec![side.id_column(schema).to_string()];
    header.extend(schema.features.iter().cloned());
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in records {
        let mut row = vec![r.id.as_str()];
        row.extend(r.values.iter().map(|v| v.as_deref().unwrap_or("")));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an `id_a,id_b[,label]` file and resolves each id against its table.
/// Pass the same table twice for single-table deduplication.
pub fn load_pairs(path: impl AsRef<Path>, table_a: &[Record], table_b: &[Record]) -> Result<Vec<LabeledPair>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let col_a = col("id_a")
        .ok_or_else(|| Error::Schema(format!("{}: header lacks column `id_a`", path.display())))?;
    let col_b = col("id_b")
        .ok_or_else(|| Error::Schema(format!("{}: header lacks column `id_b`", path.display())))?;
    let col_label = col("label");

    let index_a: HashMap<&str, &Record> = table_a.iter().map(|r| (r.id.as_str(), r)).collect();
    let index_b: HashMap<&str, &Record> = table_b.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut pairs = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let row_no = row + 1;
        let rec = result.map_err(|e| Error::csv(path, e))?;
        let id_a = rec.get(col_a).unwrap_or("").trim();
        let id_b = rec.get(col_b).unwrap_or("").trim();
        let a = index_a.get(id_a).ok_or_else(|| {
            Error::Integrity(format!(
                "{}: data row {row_no} references unknown id_a `{id_a}`",
                path.display()
            ))
        })?;
        let b = index_b.get(id_b).ok_or_else(|| {
            Error::Integrity(format!(
                "{}: data row {row_no} references unknown id_b `{id_b}`",
                path.display()
            ))
        })?;
        let label = match col_label {
            Some(c) => rec.get(c).unwrap_or("").parse::<Label>().map_err(|e| {
                Error::Integrity(format!("{}: data row {row_no}: {e}", path.display()))
            })?,
            None => Label::Unknown,
        };
        pairs.push(LabeledPair::new((*a).clone(), (*b).clone(), label));
    }
    let counts = LabelCounts::of(&pairs);
    log::info!(
        "{}: {} match, {} nonmatch, {} unlabelled pairs",
        path.display(),
        counts.matches,
        counts.nonmatches,
        counts.unknown
    );
    Ok(pairs)
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[LabeledPair]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "id_a,id_b,label").map_err(io)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for p in pairs {
        let label = match p.label {
            Label::Unknown => String::new(),
            l => l.to_string(),
        };
        w.write_record([p.a.id.as_str(), p.b.id.as_str(), label.as_str()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(io)
}

/// Every `(a, b)` pair in row-major order, labelled `Unknown`.
pub fn cross_product_pairs(table_a: &[Record], table_b: &[Record], limit: Option<usize>) -> Result<Vec<LabeledPair>> {
    if table_a.is_empty() || table_b.is_empty() {
        return Err(Error::EmptyInput("cross product needs two non-empty tables".into()));
    }
    let total = table_a.len() * table_b.len();
    let n = limit.map_or(total, |l| l.min(total));
    Ok(table_a
        .iter()
        .flat_map(|a| table_b.iter().map(move |b| (a, b)))
        .take(n)
        .map(|(a, b)| LabeledPair::new(a.clone(), b.clone(), Label::Unknown))
        .collect())
}

/// Every unordered pair `i < j` of one table, labelled `Unknown`.
pub fn dedup_pairs(table: &[Record], limit: Option<usize>) -> Result<Vec<LabeledPair>> {
    if table.is_empty() {
        return Err(Error::EmptyInput("dedup needs a non-empty table".into()));
    }
    let total = table.len() * (table.len() - 1) / 2;
    let n = limit.map_or(total, |l| l.min(total));
    Ok(table
        .iter()
        .enumerate()
        .flat_map(|(i, a)| table[i + 1..].iter().map(move |b| (a, b)))
        .take(n)
        .map(|(a, b)| LabeledPair::new(a.clone(), b.clone(), Label::Unknown))
        .collect())
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    /// Labels whose class was too small to split and went wholly to train.
    pub degenerate: Vec<Label>,
}

/// Number of class members assigned to train.
pub fn train_count(class_size: usize, train_fraction: f64) -> usize {
    // the epsilon keeps products like 0.7 * 70 = 48.999... on the right side of floor
    let n = (train_fraction * class_size as f64 + 1e-9).floor() as usize;
    n.min(class_size)
}

/// Stratified, seed-driven train/test split.
///
/// Each label class is shuffled independently with one ChaCha8 stream seeded
/// from `seed` (classes drawn in `Match`, `NonMatch`, `Unknown` order) and the
/// first `floor(fraction * n)` members go to train. Both halves keep the
/// input's relative order.
pub fn split(pairs: &[LabeledPair], train_fraction: f64, seed: u64) -> Result<Split> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("cannot split an empty pair list".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; pairs.len()];
    let mut degenerate = Vec::new();
    for label in [Label::Match, Label::NonMatch, Label::Unknown] {
        let mut members: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label == label).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            if label.is_known() {
                warn!("degenerate split: class {label} has {} member(s); placing it in train", members.len());
            }
            degenerate.push(label);
            for &i in &members {
                in_train[i] = true;
            }
            continue;
        }
        members.shuffle(&mut rng);
        for &i in &members[..train_count(members.len(), train_fraction)] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = pairs
        .iter()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok(Split {
        train: train.into_iter().map(|(p, _)| p.clone()).collect(),
        test: test.into_iter().map(|(p, _)| p.clone()).collect(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn schema() -> SchemaConfig {
        SchemaConfig::new(["name", "addr"])
    }

    fn rec(id: &str) -> Record {
        Record::new(id, vec![Some(id.to_string()), None])
    }

    fn labelled(n_match: usize, n_non: usize) -> Vec<LabeledPair> {
        let mut v = Vec::new();
        for i in 0..n_match {
            v.push(LabeledPair::new(rec(&format!("m{i}")), rec(&format!("m{i}")), Label::Match));
        }
        for i in 0..n_non {
            v.push(LabeledPair::new(rec(&format!("n{i}")), rec(&format!("x{i}")), Label::NonMatch));
        }
        v
    }

    #[test]
    fn normalizes_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "id,name,addr\n7,Arnie Morton's,  435 S.   La Cienega \n");
        let t = load_table(&p, &schema(), Side::A).unwrap();
        assert_eq!(
            t,
            vec![Record::new(
                "7",
                vec![Some("arnie morton's".into()), Some("435 s. la cienega".into())]
            )]
        );
    }

    #[test]
    fn empty_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "id,name,addr\n1,foo,\n2,bar,   \n");
        let t = load_table(&p, &schema(), Side::A).unwrap();
        assert_eq!(t[0].values[1], None);
        assert_eq!(t[1].values[1], None);

        let mut raw = schema();
        raw.normalize = Normalization::none();
        let t = load_table(&p, &raw, Side::A).unwrap();
        assert_eq!(t[0].values[1], None);
        assert_eq!(t[1].values[1].as_deref(), Some("   "));
    }

    #[test]
    fn missing_header_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "id,addr\n1,x\n");
        match load_table(&p, &schema(), Side::A) {
            Err(Error::Schema(msg)) => assert!(msg.contains("`name`"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "id,name,addr\n1,x,y\n1,z,w\n");
        assert!(matches!(load_table(&p, &schema(), Side::A), Err(Error::Integrity(_))));
    }

    #[test]
    fn pairs_resolve_and_count() {
        let dir = tempfile::tempdir().unwrap();
        let a = vec![rec("1"), rec("2")];
        let b = vec![rec("5"), rec("6")];
        let p = write_tmp(&dir, "p.csv", "id_a,id_b,label\n1,5,MATCH\n2,6,nonmatch\n1,6,\n");
        let pairs = load_pairs(&p, &a, &b).unwrap();
        let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![Label::Match, Label::NonMatch, Label::Unknown]);
        assert_eq!(
            LabelCounts::of(&pairs),
            LabelCounts { matches: 1, nonmatches: 1, unknown: 1 }
        );

        let p = write_tmp(&dir, "nolabel.csv", "id_a,id_b\n1,5\n");
        assert_eq!(load_pairs(&p, &a, &b).unwrap()[0].label, Label::Unknown);

        let p = write_tmp(&dir, "empty.csv", "id_a,id_b,label\n");
        assert!(load_pairs(&p, &a, &b).unwrap().is_empty());
    }

    #[test]
    fn dangling_pair_reference_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let a = vec![rec("5")];
        let b = vec![rec("1")];
        let p = write_tmp(&dir, "p.csv", "id_a,id_b,label\n5,1,match\n5,999,match\n");
        match load_pairs(&p, &a, &b) {
            Err(Error::Integrity(msg)) => {
                assert!(msg.contains("row 2") && msg.contains("999"), "{msg}")
            }
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn cross_product_row_major_and_limit() {
        let a = vec![rec("a1"), rec("a2")];
        let b = vec![rec("b1"), rec("b2"), rec("b3")];
        let all = cross_product_pairs(&a, &b, None).unwrap();
        let ids: Vec<_> = all.iter().map(|p| (p.a.id.as_str(), p.b.id.as_str())).collect();
        assert_eq!(
            ids,
            vec![("a1", "b1"), ("a1", "b2"), ("a1", "b3"), ("a2", "b1"), ("a2", "b2"), ("a2", "b3")]
        );
        assert!(all.iter().all(|p| p.label == Label::Unknown));
        let four = cross_product_pairs(&a, &b, Some(4)).unwrap();
        assert_eq!(four, all[..4].to_vec());
        assert!(cross_product_pairs(&a, &[], None).is_err());
    }

    #[test]
    fn dedup_pair_count() {
        let t: Vec<_> = (0..191).map(|i| rec(&i.to_string())).collect();
        assert_eq!(dedup_pairs(&t, None).unwrap().len(), 191 * 190 / 2);
        assert_eq!(dedup_pairs(&t, None).unwrap().len(), 18145);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let pairs = labelled(113, 71);
        let s = split(&pairs, 0.7, 42).unwrap();
        let tr = LabelCounts::of(&s.train);
        let te = LabelCounts::of(&s.test);
        assert_eq!((tr.matches, tr.nonmatches), (79, 49));
        assert_eq!((te.matches, te.nonmatches), (34, 22));
        assert!(s.degenerate.is_empty());
    }

    #[test]
    fn split_is_seed_stable() {
        let pairs = labelled(113, 71);
        let s1 = split(&pairs, 0.7, 42).unwrap();
        let s2 = split(&pairs, 0.7, 42).unwrap();
        assert_eq!(s1.train, s2.train);
        assert_eq!(s1.test, s2.test);
    }

    #[test]
    fn split_seed_changes_membership() {
        let pairs = labelled(5, 5);
        let s1 = split(&pairs, 0.5, 1).unwrap();
        let s2 = split(&pairs, 0.5, 2).unwrap();
        assert_eq!(s1.train.len(), s2.train.len());
        assert_eq!(s1.test.len(), s2.test.len());
        assert_ne!(s1.train, s2.train);
    }

    #[test]
    fn tiny_class_goes_to_train() {
        let pairs = labelled(10, 1);
        let s = split(&pairs, 0.5, 3).unwrap();
        assert_eq!(s.degenerate, vec![Label::NonMatch]);
        assert_eq!(LabelCounts::of(&s.train).nonmatches, 1);
        assert_eq!(LabelCounts::of(&s.test).nonmatches, 0);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(matches!(split(&[], 0.7, 1), Err(Error::EmptyInput(_))));
        let pairs = labelled(3, 3);
        assert!(matches!(split(&pairs, 1.0, 1), Err(Error::Config(_))));
        assert!(matches!(split(&pairs, 0.0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn schema_toml() {
        let s = SchemaConfig::from_toml_str(
            "features = [\"name\", \"addr\"]\nid_column_a = \"zid\"\n[normalize]\nlowercase = false\n",
        )
        .unwrap();
        assert_eq!(s.features, vec!["name", "addr"]);
        assert_eq!(s.id_column_a, "zid");
        assert_eq!(s.id_column_b, "id");
        assert!(!s.normalize.lowercase && s.normalize.trim && s.normalize.collapse_ws);
        assert_eq!(SchemaConfig::from_toml_str(&s.to_toml_string()).unwrap(), s);
        assert!(SchemaConfig::from_toml_str("features = []").is_err());
        assert!(SchemaConfig::from_toml_str("features = [\"a\", \"a\"]").is_err());
    }
}
