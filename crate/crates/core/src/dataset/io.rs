//! Dataset directory format.
//!
//! ```text
//! features.bin    "ZSLF" | u32 version=1 | u32 n | u32 d | n*d f32, row-major, little-endian
//! labels.csv      instance,class
//! attributes.csv  class,<attr_1>,...,<attr_a>
//! split.json      {"unseen": [...], "diag_fraction": 0.2, "seed": 0}   (optional)
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const SPLIT_FILE: &str = "split.json";

pub const FEATURES_MAGIC: &[u8; 4] = b"ZSLF";
pub const FEATURES_VERSION: u32 = 1;
const FEATURES_HEADER: usize = 16;

pub fn encode_features(features: &Matrix<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURES_HEADER + 4 * features.as_slice().len());
    out.extend_from_slice(FEATURES_MAGIC);
    out.extend_from_slice(&FEATURES_VERSION.to_le_bytes());
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for v in features.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a `features.bin` payload. Non-finite entries are rejected with
/// their one-based row.
pub fn decode_features(bytes: &[u8]) -> Result<Matrix<f32>> {
    let err = |msg: String| Error::format(FEATURES_FILE, None, msg);
    if bytes.len() < FEATURES_HEADER {
        return Err(err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != FEATURES_MAGIC {
        return Err(err("bad magic, expected ZSLF".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURES_VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    let body = &bytes[FEATURES_HEADER..];
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| err(format!("header dimensions {n}x{d} overflow")))?;
    if body.len() != expected {
        return Err(err(format!(
            "header declares {n}x{d} ({expected} bytes) but payload has {} bytes",
            body.len()
        )));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            file: FEATURES_FILE.into(),
            row: pos / d + 1,
        });
    }
    Matrix::from_vec(n, d, data)
}

/// Parses `labels.csv` against a known class list. Every instance index in
/// `0..n` must appear exactly once.
pub fn parse_labels<R: Read>(reader: R, n: usize, class_names: &[String]) -> Result<Vec<usize>> {
    let lookup: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::format(LABELS_FILE, None, "empty file"))?
        .map_err(|e| Error::format(LABELS_FILE, None, e.to_string()))?;
    if header.len() != 2 || header[0].trim() != "instance" || header[1].trim() != "class" {
        return Err(Error::format(
            LABELS_FILE,
            None,
            "header must be `instance,class`",
        ));
    }
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut rows = 0;
    for (r, rec) in records.enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::format(LABELS_FILE, Some(row), e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::format(
                LABELS_FILE,
                Some(row),
                format!("expected 2 fields, got {}", rec.len()),
            ));
        }
        let idx: usize = rec[0].trim().parse().map_err(|_| {
            Error::format(LABELS_FILE, Some(row), format!("bad instance index `{}`", &rec[0]))
        })?;
        if idx >= n {
            return Err(Error::DimensionMismatch(format!(
                "{LABELS_FILE} row {row}: instance {idx} out of range for {n} feature rows"
            )));
        }
        let class = *lookup
            .get(rec[1].trim())
            .ok_or_else(|| Error::UnknownClass(format!("{} ({LABELS_FILE} row {row})", &rec[1])))?;
        if labels[idx].replace(class).is_some() {
            return Err(Error::format(
                LABELS_FILE,
                Some(row),
                format!("instance {idx} labelled twice"),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::DimensionMismatch(format!(
            "{LABELS_FILE} has {rows} rows for {n} feature rows"
        )));
    }
    Ok(labels.into_iter().map(|l| l.unwrap()).collect())
}

/// Contents of `attributes.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    pub class_names: Vec<String>,
    pub attribute_names: Vec<String>,
    pub values: Matrix<f64>,
}

pub fn parse_attributes<R: Read>(reader: R) -> Result<AttributeTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::format(ATTRIBUTES_FILE, None, "empty file"))?
        .map_err(|e| Error::format(ATTRIBUTES_FILE, None, e.to_string()))?;
    if header.len() < 2 || header[0].trim() != "class" {
        return Err(Error::format(
            ATTRIBUTES_FILE,
            None,
            "header must be `class,<attr_1>,...`",
        ));
    }
    let attribute_names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let a = attribute_names.len();
    let mut class_names = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in records.enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::format(ATTRIBUTES_FILE, Some(row), e.to_string()))?;
        if rec.len() != a + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{ATTRIBUTES_FILE} row {row}: {} values for {a} attributes",
                rec.len().saturating_sub(1)
            )));
        }
        class_names.push(rec[0].trim().to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(ATTRIBUTES_FILE, Some(row), format!("bad number `{field}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    file: ATTRIBUTES_FILE.into(),
                    row,
                });
            }
            values.push(v);
        }
    }
    let values = Matrix::from_vec(class_names.len(), a, values)?;
    Ok(AttributeTable {
        class_names,
        attribute_names,
        values,
    })
}

/// Optional `split.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub unseen: Vec<String>,
    pub diag_fraction: f64,
    pub seed: u64,
}

pub fn parse_split(bytes: &[u8]) -> Result<SplitFile> {
    let s: SplitFile = serde_json::from_slice(bytes)
        .map_err(|e| Error::format(SPLIT_FILE, None, e.to_string()))?;
    if !(s.diag_fraction > 0.0 && s.diag_fraction < 1.0) {
        return Err(Error::format(
            SPLIT_FILE,
            None,
            format!("diag_fraction {} outside (0, 1)", s.diag_fraction),
        ));
    }
    Ok(s)
}

pub fn write_labels(dataset: &Dataset) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance", "class"]).unwrap();
    for (i, &y) in dataset.labels().iter().enumerate() {
        w.write_record([i.to_string().as_str(), dataset.class_names()[y].as_str()])
            .unwrap();
    }
    w.into_inner().expect("in-memory writer")
}

pub fn write_attributes(dataset: &Dataset) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["class".to_string()];
    header.extend(dataset.attribute_names().iter().cloned());
    w.write_record(&header).unwrap();
    for (c, name) in dataset.class_names().iter().enumerate() {
        let mut rec = vec![name.clone()];
        // `{}` on f64 prints the shortest string that parses back to the same value
        rec.extend(dataset.raw_attributes().row(c).iter().map(|v| format!("{v}")));
        w.write_record(&rec).unwrap();
    }
    w.into_inner().expect("in-memory writer")
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let features = decode_features(&read_file(&dir.join(FEATURES_FILE))?)?;
    let table = parse_attributes(read_file(&dir.join(ATTRIBUTES_FILE))?.as_slice())?;
    let labels = parse_labels(
        read_file(&dir.join(LABELS_FILE))?.as_slice(),
        features.rows(),
        &table.class_names,
    )?;
    Dataset::new(
        features,
        labels,
        table.class_names,
        table.values,
        table.attribute_names,
    )
}

pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join(FEATURES_FILE), &encode_features(dataset.features()))?;
    write_file(&dir.join(LABELS_FILE), &write_labels(dataset))?;
    write_file(&dir.join(ATTRIBUTES_FILE), &write_attributes(dataset))?;
    Ok(())
}

/// Reads `split.json` from a dataset directory, if present.
pub fn load_split_file(dir: impl AsRef<Path>) -> Result<Option<SplitFile>> {
    let path = dir.as_ref().join(SPLIT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    parse_split(&read_file(&path)?).map(Some)
}

pub fn save_split_file(split: &SplitFile, dir: impl AsRef<Path>) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(split).expect("split serializes");
    write_file(&dir.as_ref().join(SPLIT_FILE), &bytes)
}
