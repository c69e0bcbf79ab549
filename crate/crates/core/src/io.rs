//! Text file formats: COO tensors, model files, and bin-spec sidecars.
//!
//! All real values are written with 17 significant digits, which round
//! trips `f64` bitwise. Lines starting with `#` are comments; parse
//! errors carry the offending line number.
//!
//! COO format:
//! ```text
//! # optional comments
//! 2            ← number of modes
//! 3 4          ← mode sizes
//! 0 1 2.5e0    ← 0-based indices, then the value
//! ```
//!
//! Model format (version 1): a header line `klcp-model 1`, then `shape`,
//! `rank`, `weights`, one `factor <mode> <component>` line per factor
//! column, and optional `labels` and `bin <name> <min> <width> <count>`
//! lines for classifier models.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::ingest::{BinSpec, FeatureBins};
use crate::model::CpdModel;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

/// Formats a real with 17 significant digits (bitwise round trip).
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// A serialized model: the CPD part plus optional classifier metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: CpdModel,
    pub labels: Option<Vec<String>>,
    pub binspec: Option<BinSpec>,
}

impl ModelFile {
    pub fn bare(model: CpdModel) -> Self {
        Self {
            model,
            labels: None,
            binspec: None,
        }
    }
}

struct LineParser<R> {
    lines: std::iter::Enumerate<std::io::Lines<R>>,
    path: String,
}

impl<R: BufRead> LineParser<R> {
    fn new(reader: R, path: &str) -> Self {
        Self {
            lines: reader.lines().enumerate(),
            path: path.to_string(),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Next non-blank, non-comment line with its 1-based number.
    fn next_significant(&mut self) -> Result<Option<(usize, String)>> {
        for (idx, line) in self.lines.by_ref() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(Some((idx + 1, trimmed.to_string())));
        }
        Ok(None)
    }
}

fn parse_usize(parser: &LineParser<impl BufRead>, line: usize, token: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| parser.err(line, format!("cannot parse {token:?} as an integer")))
}

fn parse_f64(parser: &LineParser<impl BufRead>, line: usize, token: &str) -> Result<f64> {
    token
        .parse()
        .map_err(|_| parser.err(line, format!("cannot parse {token:?} as a real number")))
}

/// Reads a COO tensor file.
pub fn read_coo(path: impl AsRef<Path>) -> Result<SparseTensor> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    read_coo_from(reader, &path.display().to_string())
}

pub fn read_coo_from(reader: impl BufRead, origin: &str) -> Result<SparseTensor> {
    let mut parser = LineParser::new(reader, origin);
    let (line, text) = parser
        .next_significant()?
        .ok_or_else(|| parser.err(0, "missing mode-count line"))?;
    let ndim = parse_usize(&parser, line, text.trim())?;
    if ndim == 0 {
        return Err(parser.err(line, "tensor must have at least one mode"));
    }

    let (line, text) = parser
        .next_significant()?
        .ok_or_else(|| parser.err(line, "missing shape line"))?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != ndim {
        return Err(parser.err(line, format!("expected {ndim} mode sizes, got {}", tokens.len())));
    }
    let mut shape = Vec::with_capacity(ndim);
    for token in tokens {
        let size = parse_usize(&parser, line, token)?;
        if size == 0 {
            return Err(parser.err(line, "mode sizes must be positive"));
        }
        shape.push(size);
    }

    let mut entries = Vec::new();
    while let Some((line, text)) = parser.next_significant()? {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != ndim + 1 {
            return Err(parser.err(
                line,
                format!("expected {} indices and a value, got {} fields", ndim, tokens.len()),
            ));
        }
        let mut index = Vec::with_capacity(ndim);
        for (mode, token) in tokens[..ndim].iter().enumerate() {
            let i = parse_usize(&parser, line, token)?;
            if i >= shape[mode] {
                return Err(parser.err(
                    line,
                    format!("index {i} out of range for mode {mode} (size {})", shape[mode]),
                ));
            }
            index.push(i);
        }
        let value = parse_f64(&parser, line, tokens[ndim])?;
        if !value.is_finite() || value < 0.0 {
            return Err(parser.err(line, format!("value {value} must be a finite nonnegative real")));
        }
        entries.push((index, value));
    }
    SparseTensor::new(shape, entries)
}

/// Writes a COO tensor file with 17-significant-digit values.
pub fn write_coo(path: impl AsRef<Path>, tensor: &SparseTensor) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_coo_to(&mut writer, tensor)?;
    writer.flush()?;
    Ok(())
}

pub fn write_coo_to(writer: &mut impl Write, tensor: &SparseTensor) -> Result<()> {
    writeln!(writer, "{}", tensor.ndim())?;
    let shape: Vec<String> = tensor.shape().iter().map(|s| s.to_string()).collect();
    writeln!(writer, "{}", shape.join(" "))?;
    for (index, value) in tensor.entries() {
        let index: Vec<String> = index.iter().map(|i| i.to_string()).collect();
        writeln!(writer, "{} {}", index.join(" "), fmt_f64(value))?;
    }
    Ok(())
}

fn check_token(value: &str) -> Result<()> {
    if value.is_empty() || value.chars().any(|c| c.is_whitespace()) {
        return Err(Error::UnserializableLabel {
            label: value.to_string(),
        });
    }
    Ok(())
}

/// Writes a model file; classifier metadata is emitted when present.
pub fn write_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_model_to(&mut writer, file)?;
    writer.flush()?;
    Ok(())
}

pub fn write_model_to(writer: &mut impl Write, file: &ModelFile) -> Result<()> {
    let model = &file.model;
    writeln!(writer, "klcp-model 1")?;
    let shape: Vec<String> = model.shape().iter().map(|s| s.to_string()).collect();
    writeln!(writer, "shape {}", shape.join(" "))?;
    writeln!(writer, "rank {}", model.rank())?;
    let weights: Vec<String> = model.weights().iter().map(|&w| fmt_f64(w)).collect();
    writeln!(writer, "weights {}", weights.join(" "))?;
    for (mode, factor) in model.factors().iter().enumerate() {
        for k in 0..model.rank() {
            let column: Vec<String> = factor.column(k).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(writer, "factor {mode} {k} {}", column.join(" "))?;
        }
    }
    if let Some(labels) = &file.labels {
        for label in labels {
            check_token(label)?;
        }
        writeln!(writer, "labels {}", labels.join(" "))?;
    }
    if let Some(spec) = &file.binspec {
        for bins in spec.features() {
            check_token(&bins.name)?;
            writeln!(
                writer,
                "bin {} {} {} {}",
                bins.name,
                fmt_f64(bins.min),
                fmt_f64(bins.width),
                bins.count
            )?;
        }
    }
    Ok(())
}

/// Reads a model file written by [`write_model`].
pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    read_model_from(reader, &path.display().to_string())
}

pub fn read_model_from(reader: impl BufRead, origin: &str) -> Result<ModelFile> {
    let mut parser = LineParser::new(reader, origin);

    let (line, text) = parser
        .next_significant()?
        .ok_or_else(|| parser.err(0, "empty model file"))?;
    if text.split_whitespace().collect::<Vec<_>>() != ["klcp-model", "1"] {
        return Err(parser.err(line, "expected header \"klcp-model 1\""));
    }

    let mut shape: Option<Vec<usize>> = None;
    let mut rank: Option<usize> = None;
    let mut weights: Option<Vec<f64>> = None;
    let mut columns: Vec<(usize, usize, Vec<f64>, usize)> = Vec::new();
    let mut labels: Option<Vec<String>> = None;
    let mut bins: Vec<FeatureBins> = Vec::new();

    while let Some((line, text)) = parser.next_significant()? {
        let mut tokens = text.split_whitespace();
        let keyword = tokens.next().expect("significant lines are non-empty");
        let rest: Vec<&str> = tokens.collect();
        match keyword {
            "shape" => {
                let mut parsed = Vec::with_capacity(rest.len());
                for token in &rest {
                    parsed.push(parse_usize(&parser, line, token)?);
                }
                shape = Some(parsed);
            }
            "rank" => {
                if rest.len() != 1 {
                    return Err(parser.err(line, "rank takes one value"));
                }
                rank = Some(parse_usize(&parser, line, rest[0])?);
            }
            "weights" => {
                let mut parsed = Vec::with_capacity(rest.len());
                for token in &rest {
                    parsed.push(parse_f64(&parser, line, token)?);
                }
                weights = Some(parsed);
            }
            "factor" => {
                if rest.len() < 2 {
                    return Err(parser.err(line, "factor lines need mode, component, values"));
                }
                let mode = parse_usize(&parser, line, rest[0])?;
                let component = parse_usize(&parser, line, rest[1])?;
                let mut values = Vec::with_capacity(rest.len() - 2);
                for token in &rest[2..] {
                    values.push(parse_f64(&parser, line, token)?);
                }
                columns.push((mode, component, values, line));
            }
            "labels" => {
                labels = Some(rest.iter().map(|s| s.to_string()).collect());
            }
            "bin" => {
                if rest.len() != 4 {
                    return Err(parser.err(line, "bin lines are: name min width count"));
                }
                bins.push(FeatureBins {
                    name: rest[0].to_string(),
                    min: parse_f64(&parser, line, rest[1])?,
                    width: parse_f64(&parser, line, rest[2])?,
                    count: parse_usize(&parser, line, rest[3])?,
                });
            }
            other => {
                return Err(parser.err(line, format!("unknown keyword {other:?}")));
            }
        }
    }

    let shape = shape.ok_or_else(|| parser.err(0, "missing shape line"))?;
    let rank = rank.ok_or_else(|| parser.err(0, "missing rank line"))?;
    let weights = weights.ok_or_else(|| parser.err(0, "missing weights line"))?;
    if weights.len() != rank {
        return Err(parser.err(0, format!("expected {rank} weights, got {}", weights.len())));
    }

    let mut factors: Vec<Array2<f64>> = shape
        .iter()
        .map(|&len| Array2::from_elem((len, rank), f64::NAN))
        .collect();
    for (mode, component, values, line) in columns {
        if mode >= shape.len() || component >= rank {
            return Err(parser.err(line, "factor mode or component out of range"));
        }
        if values.len() != shape[mode] {
            return Err(parser.err(
                line,
                format!("expected {} values for mode {mode}, got {}", shape[mode], values.len()),
            ));
        }
        factors[mode]
            .column_mut(component)
            .assign(&Array1::from(values));
    }
    for (mode, factor) in factors.iter().enumerate() {
        if factor.iter().any(|v| v.is_nan()) {
            return Err(parser.err(0, format!("missing factor column(s) for mode {mode}")));
        }
    }

    let model = CpdModel::new(shape, Array1::from(weights), factors)?;
    if let Some(labels) = &labels {
        if labels.len() != model.rank() {
            return Err(parser.err(
                0,
                format!("expected {} labels, got {}", model.rank(), labels.len()),
            ));
        }
    }
    let binspec = if bins.is_empty() {
        None
    } else {
        Some(BinSpec::new(bins)?)
    };
    Ok(ModelFile {
        model,
        labels,
        binspec,
    })
}

/// Writes a bin-spec sidecar: one `name min width count` line per
/// feature.
pub fn write_binspec(path: impl AsRef<Path>, spec: &BinSpec) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for bins in spec.features() {
        check_token(&bins.name)?;
        writeln!(
            writer,
            "{} {} {} {}",
            bins.name,
            fmt_f64(bins.min),
            fmt_f64(bins.width),
            bins.count
        )?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a bin-spec sidecar written by [`write_binspec`].
pub fn read_binspec(path: impl AsRef<Path>) -> Result<BinSpec> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut parser = LineParser::new(reader, &path.display().to_string());
    let mut features = Vec::new();
    while let Some((line, text)) = parser.next_significant()? {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 4 {
            return Err(parser.err(line, "expected: name min width count"));
        }
        features.push(FeatureBins {
            name: tokens[0].to_string(),
            min: parse_f64(&parser, line, tokens[1])?,
            width: parse_f64(&parser, line, tokens[2])?,
            count: parse_usize(&parser, line, tokens[3])?,
        });
    }
    BinSpec::new(features)
}
