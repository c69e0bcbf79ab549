//! Discretization of labeled continuous-feature records into count
//! tensors: fixed-width bin grids per feature, one tensor cell
//! incremented per sample, optionally grouped by class label.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::tensor::SparseTensor;
use crate::{Error, Result};

/// Group key used by [`discretize`] when not grouping by label.
pub const POOLED_KEY: &str = "all";

/// Fixed-width bin grid for one feature: bins start at `min` and step by
/// `width`, `count` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins {
    pub name: String,
    pub min: f64,
    pub width: f64,
    pub count: usize,
}

/// Per-feature discretization grids.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    features: Vec<FeatureBins>,
}

impl BinSpec {
    pub fn new(features: Vec<FeatureBins>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyShape);
        }
        for (mode, f) in features.iter().enumerate() {
            if !(f.width > 0.0) || !f.min.is_finite() {
                return Err(Error::InvalidValue { value: f.width });
            }
            if f.count == 0 {
                return Err(Error::ZeroModeSize { mode });
            }
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &[FeatureBins] {
        &self.features
    }

    pub fn ndim(&self) -> usize {
        self.features.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.count).collect()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// Bin index for a value, or `None` when it falls outside the grid.
    ///
    /// Computed in scaled-integer space: value and grid origin are first
    /// rounded to the nearest multiple of `width / 10`, then the offset
    /// is divided with round-half-up. One-decimal measurements on a
    /// 0.1-wide grid therefore bin exactly, immune to the fact that 0.1
    /// has no finite binary representation.
    pub fn bin_index(&self, feature: usize, value: f64) -> Option<usize> {
        let bins = &self.features[feature];
        if !value.is_finite() {
            return None;
        }
        let scale = bins.width / 10.0;
        let scaled_value = (value / scale).round();
        let scaled_min = (bins.min / scale).round();
        if scaled_value.abs() >= 9.0e15 || scaled_min.abs() >= 9.0e15 {
            return None;
        }
        let offset = scaled_value as i64 - scaled_min as i64;
        let index = (offset + 5).div_euclid(10);
        if index < 0 || index as usize >= bins.count {
            return None;
        }
        Some(index as usize)
    }
}

/// The Iris grid: 0.1 cm bins over the observed feature ranges
/// 4.3–7.9, 2.0–4.4, 1.0–6.9 and 0.1–2.5 cm, giving a 37×25×60×25
/// tensor.
pub fn iris_binspec() -> BinSpec {
    let spec = [
        ("sepal_length", 4.3, 37),
        ("sepal_width", 2.0, 25),
        ("petal_length", 1.0, 60),
        ("petal_width", 0.1, 25),
    ];
    BinSpec::new(
        spec.iter()
            .map(|&(name, min, count)| FeatureBins {
                name: name.to_string(),
                min,
                width: 0.1,
                count,
            })
            .collect(),
    )
    .expect("static grid is valid")
}

/// One record: a feature vector and an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRow {
    pub features: Vec<f64>,
    pub label: Option<String>,
}

/// Continuous-feature records with named features.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    feature_names: Vec<String>,
    rows: Vec<DataRow>,
}

impl LabeledDataset {
    /// Validates arity and finiteness of every row.
    pub fn new(feature_names: Vec<String>, rows: Vec<DataRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (row_idx, row) in rows.iter().enumerate() {
            if row.features.len() != feature_names.len() {
                return Err(Error::ArityMismatch {
                    row: row_idx,
                    expected: feature_names.len(),
                    got: row.features.len(),
                });
            }
            for (f, &v) in row.features.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteFeature {
                        row: row_idx,
                        feature: feature_names[f].clone(),
                    });
                }
            }
        }
        Ok(Self {
            feature_names,
            rows,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[DataRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads a comma-separated file with a header row. When `label_column`
/// is given, that column becomes the row label; all other columns must
/// parse as reals. No quoting support: values must not contain commas.
pub fn read_labeled_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::EmptyDataset),
    };
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::UnknownColumn {
                    name: name.to_string(),
                })?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, c)| c.clone())
        .collect();

    let mut rows = Vec::new();
    for (line_idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                path: display,
                line: line_idx + 1,
                message: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let mut features = Vec::with_capacity(feature_names.len());
        let mut label = None;
        for (i, field) in fields.iter().enumerate() {
            if Some(i) == label_idx {
                label = Some(field.to_string());
            } else {
                let value: f64 = field.parse().map_err(|_| Error::Parse {
                    path: display.clone(),
                    line: line_idx + 1,
                    message: format!("cannot parse {field:?} as a real number"),
                })?;
                features.push(value);
            }
        }
        rows.push(DataRow { features, label });
    }
    LabeledDataset::new(feature_names, rows)
}

/// Bins every row of the dataset into a count tensor of shape
/// `spec.shape()`, grouped by class label when requested (every tensor
/// then holds one class; otherwise a single tensor under
/// [`POOLED_KEY`]). Counting is order-independent.
pub fn discretize(
    data: &LabeledDataset,
    spec: &BinSpec,
    group_by_label: bool,
) -> Result<BTreeMap<String, SparseTensor>> {
    if data.feature_names().len() != spec.ndim() {
        return Err(Error::ArityMismatch {
            row: 0,
            expected: spec.ndim(),
            got: data.feature_names().len(),
        });
    }
    let mut counts: BTreeMap<String, BTreeMap<Vec<usize>, u64>> = BTreeMap::new();
    for (row_idx, row) in data.rows().iter().enumerate() {
        let key = if group_by_label {
            row.label
                .clone()
                .ok_or(Error::MissingLabel { row: row_idx })?
        } else {
            POOLED_KEY.to_string()
        };
        let mut index = Vec::with_capacity(spec.ndim());
        for (f, &value) in row.features.iter().enumerate() {
            let bin = spec
                .bin_index(f, value)
                .ok_or_else(|| Error::FeatureOutOfRange {
                    row: row_idx,
                    feature: spec.features()[f].name.clone(),
                    value,
                })?;
            index.push(bin);
        }
        *counts.entry(key).or_default().entry(index).or_insert(0) += 1;
    }
    let shape = spec.shape();
    counts
        .into_iter()
        .map(|(key, cells)| {
            let entries = cells
                .into_iter()
                .map(|(index, count)| (index, count as f64))
                .collect();
            Ok((key, SparseTensor::new(shape.clone(), entries)?))
        })
        .collect()
}
