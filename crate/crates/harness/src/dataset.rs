//! CSV ingestion and stratified splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use divbo_core::learners::{DatasetProblem, LabeledData};
use divbo_core::rng;
use divbo_core::treereg::FeatureMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Default train and validation fractions; the test split takes the rest.
pub const TRAIN_FRACTION: f64 = 0.6;
pub const VAL_FRACTION: f64 = 0.2;

/// Cells treated as missing.
const MISSING: [&str; 6] = ["", "?", "NA", "na", "NaN", "nan"];

/// Share of cells that must parse as numbers for a column to be numeric.
const NUMERIC_SHARE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    /// Expanded into one indicator per category, in this order.
    OneHot { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    /// Class names indexed by label.
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
    pub columns: Vec<ColumnMeta>,
    pub split: Split,
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn part(&self, rows: &[usize]) -> Result<LabeledData> {
        let mut x = FeatureMatrix::with_capacity(self.features.n_cols(), rows.len());
        for &r in rows {
            x.push_row(self.features.row(r));
        }
        Ok(LabeledData::new(x, rows.iter().map(|&r| self.labels[r]).collect())?)
    }

    /// The train, validation and test splits as an optimization problem over
    /// the built-in learner space.
    pub fn problem(&self) -> Result<DatasetProblem> {
        Ok(DatasetProblem::new(
            &self.name,
            self.n_classes(),
            self.part(&self.split.train)?,
            self.part(&self.split.val)?,
            self.part(&self.split.test)?,
        )?)
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING.contains(&cell.trim())
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Orders class names numerically when all of them are numbers.
fn order_classes(names: BTreeSet<String>) -> Vec<String> {
    let mut names: Vec<String> = names.into_iter().collect();
    if names.iter().all(|n| parse_number(n).is_some()) {
        names.sort_by(|a, b| parse_number(a).unwrap().total_cmp(&parse_number(b).unwrap()));
    }
    names
}

/// Reads a CSV with a header row. Numeric columns are kept as reals, other
/// columns are one-hot expanded, and rows with a missing or unparseable cell
/// are dropped. The rows are split 60/20/20, stratified by label.
pub fn ingest_csv(path: impl AsRef<Path>, target_column: &str, seed: u64) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(HarnessError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| HarnessError::MissingColumn(target_column.to_string()))?;
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != target).collect();
    let numeric: Vec<bool> = feature_cols
        .iter()
        .map(|&c| {
            let present: Vec<&str> = records.iter().map(|r| &r[c]).filter(|v| !is_missing(v)).collect();
            let parsed = present.iter().filter(|v| parse_number(v).is_some()).count();
            !present.is_empty() && parsed as f64 >= NUMERIC_SHARE * present.len() as f64
        })
        .collect();

    let keep: Vec<&csv::StringRecord> = records
        .iter()
        .filter(|r| {
            !is_missing(&r[target])
                && feature_cols.iter().zip(&numeric).all(|(&c, &num)| {
                    !is_missing(&r[c]) && (!num || parse_number(&r[c]).is_some())
                })
        })
        .collect();
    let dropped_rows = records.len() - keep.len();
    if dropped_rows > 0 {
        log::info!("{}: dropped {dropped_rows} rows with missing or unparseable cells", path.display());
    }
    if keep.is_empty() {
        return Err(HarnessError::EmptyData(path.display().to_string()));
    }

    let classes = order_classes(keep.iter().map(|r| r[target].trim().to_string()).collect());
    if classes.len() < 2 {
        return Err(HarnessError::SingleClass(target_column.to_string()));
    }
    let class_index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels: Vec<usize> = keep.iter().map(|r| class_index[r[target].trim()]).collect();

    let mut columns = Vec::with_capacity(feature_cols.len());
    let mut feature_names = Vec::new();
    for (&c, &num) in feature_cols.iter().zip(&numeric) {
        let kind = if num {
            feature_names.push(header[c].clone());
            ColumnKind::Numeric
        } else {
            let categories: Vec<String> = keep
                .iter()
                .map(|r| r[c].trim().to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            feature_names.extend(categories.iter().map(|v| format!("{}={v}", header[c])));
            ColumnKind::OneHot { categories }
        };
        columns.push(ColumnMeta {
            name: header[c].clone(),
            kind,
        });
    }

    let mut features = FeatureMatrix::with_capacity(feature_names.len(), keep.len());
    let mut row = Vec::with_capacity(feature_names.len());
    for r in &keep {
        row.clear();
        for (&c, meta) in feature_cols.iter().zip(&columns) {
            match &meta.kind {
                ColumnKind::Numeric => row.push(parse_number(&r[c]).expect("checked above")),
                ColumnKind::OneHot { categories } => {
                    let v = r[c].trim();
                    row.extend(categories.iter().map(|k| if k == v { 1.0 } else { 0.0 }));
                }
            }
        }
        features.push_row(&row);
    }

    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Dataset {
        name,
        split: stratified_split(&labels, classes.len(), TRAIN_FRACTION, VAL_FRACTION, seed),
        features,
        labels,
        classes,
        feature_names,
        columns,
        dropped_rows,
    })
}

/// Shuffles each class with a seeded generator and deals it into train,
/// validation and test parts by rounded fractions. Index lists are sorted.
pub fn stratified_split(labels: &[usize], n_classes: usize, train: f64, val: f64, seed: u64) -> Split {
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..n_classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng::seeded(rng::derive(seed, &[class as u64])));
        let n = rows.len();
        let n_train = ((train * n as f64).round() as usize).min(n);
        let n_val = ((val * n as f64).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&rows[..n_train]);
        split.val.extend_from_slice(&rows[n_train..n_train + n_val]);
        split.test.extend_from_slice(&rows[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}
