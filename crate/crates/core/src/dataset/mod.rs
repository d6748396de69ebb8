//! Attribute-annotated classification datasets: validation, signature
//! standardization, seen/unseen splitting and synthetic generation.

mod io;
mod synthetic;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use io::{
    decode_features, encode_features, load_dataset, load_split_file, parse_attributes, parse_labels, parse_split,
    save_dataset, save_split_file, write_attributes, write_labels, AttributeTable, SplitFile, ATTRIBUTES_FILE,
    FEATURES_FILE, FEATURES_MAGIC, FEATURES_VERSION, LABELS_FILE, SPLIT_FILE,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticDataset};

/// Instance features plus class-level attribute annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix<f32>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    raw_attributes: Matrix<f64>,
    attribute_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix<f32>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        raw_attributes: Matrix<f64>,
        attribute_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::invalid("dataset has no instances"));
        }
        if features.cols() == 0 {
            return Err(Error::invalid("feature dimension is zero"));
        }
        if attribute_names.is_empty() {
            return Err(Error::invalid("dataset has no attributes"));
        }
        if class_names.len() < 2 {
            return Err(Error::invalid("dataset needs at least two classes"));
        }
        if labels.len() != n {
            return Err(Error::dims(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if raw_attributes.rows() != class_names.len() || raw_attributes.cols() != attribute_names.len()
        {
            return Err(Error::dims(format!(
                "attribute table is {}x{}, expected {}x{}",
                raw_attributes.rows(),
                raw_attributes.cols(),
                class_names.len(),
                attribute_names.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y >= class_names.len()) {
            return Err(Error::invalid(format!(
                "instance {i} has label {} but there are {} classes",
                labels[i],
                class_names.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| features.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                file: FEATURES_FILE.into(),
                row: i + 1,
            });
        }
        if let Some(i) = (0..raw_attributes.rows())
            .find(|&i| raw_attributes.row(i).iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite {
                file: ATTRIBUTES_FILE.into(),
                row: i + 1,
            });
        }
        check_unique("class", &class_names)?;
        check_unique("attribute", &attribute_names)?;
        Ok(Self {
            features,
            labels,
            class_names,
            raw_attributes,
            attribute_names,
        })
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn raw_attributes(&self) -> &Matrix<f64> {
        &self.raw_attributes
    }

    pub fn num_instances(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    /// Instances labelled `class`, in ascending index order.
    pub fn instances_of(&self, class: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == class)
            .collect()
    }
}

fn check_unique(what: &str, names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::invalid(format!("duplicate {what} name `{n}`")));
        }
    }
    Ok(())
}

/// Column-standardized class signatures, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMatrix {
    signatures: Matrix<f64>,
    means: Vec<f64>,
    stddevs: Vec<f64>,
    constant_columns: Vec<usize>,
}

impl SignatureMatrix {
    /// Wraps a matrix that is already in signature space (no further
    /// standardization; means 0, stddevs 1).
    pub fn from_matrix(signatures: Matrix<f64>) -> Self {
        let a = signatures.cols();
        Self {
            signatures,
            means: vec![0.0; a],
            stddevs: vec![1.0; a],
            constant_columns: Vec::new(),
        }
    }

    pub fn matrix(&self) -> &Matrix<f64> {
        &self.signatures
    }

    pub fn signature(&self, class: usize) -> &[f64] {
        self.signatures.row(class)
    }

    pub fn num_classes(&self) -> usize {
        self.signatures.rows()
    }

    pub fn num_attributes(&self) -> usize {
        self.signatures.cols()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stddevs(&self) -> &[f64] {
        &self.stddevs
    }

    /// Columns that had zero variance and were mapped to all-zero.
    pub fn constant_columns(&self) -> &[usize] {
        &self.constant_columns
    }

    /// Signatures with every column `k` multiplied by `weights[k]`.
    pub fn scaled(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.num_attributes() {
            return Err(Error::dims(format!(
                "{} weights for {} attributes",
                weights.len(),
                self.num_attributes()
            )));
        }
        let mut out = self.clone();
        for c in 0..out.signatures.rows() {
            for (z, w) in out.signatures.row_mut(c).iter_mut().zip(weights) {
                *z *= w;
            }
        }
        Ok(out)
    }
}

/// Population z-scoring of each attribute column. Zero-variance columns
/// become all-zero and are reported in `constant_columns`.
pub fn standardize_signatures(raw: &Matrix<f64>) -> Result<SignatureMatrix> {
    let (c, a) = (raw.rows(), raw.cols());
    if c < 2 {
        return Err(Error::invalid("standardization needs at least two classes"));
    }
    let mut out = Matrix::zeros(c, a);
    let mut means = Vec::with_capacity(a);
    let mut stddevs = Vec::with_capacity(a);
    let mut constant_columns = Vec::new();
    for k in 0..a {
        let mean = (0..c).map(|i| raw.get(i, k)).sum::<f64>() / c as f64;
        let var = (0..c).map(|i| (raw.get(i, k) - mean).powi(2)).sum::<f64>() / c as f64;
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            constant_columns.push(k);
        } else {
            for i in 0..c {
                out.set(i, k, (raw.get(i, k) - mean) / std);
            }
        }
        means.push(mean);
        stddevs.push(std);
    }
    if !constant_columns.is_empty() {
        log::warn!("constant attribute columns mapped to zero: {constant_columns:?}");
    }
    Ok(SignatureMatrix {
        signatures: out,
        means,
        stddevs,
        constant_columns,
    })
}

/// Seen/unseen class partition with a stratified diagnostics holdout
/// drawn from the seen classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seen_classes: Vec<usize>,
    pub unseen_classes: Vec<usize>,
    pub train_instances: Vec<usize>,
    pub diag_instances: Vec<usize>,
}

impl Split {
    pub fn is_seen(&self, class: usize) -> bool {
        self.seen_classes.binary_search(&class).is_ok()
    }

    /// Number of diagnostics instances per class, indexed by class id.
    pub fn diag_counts(&self, dataset: &Dataset) -> Vec<usize> {
        let mut counts = vec![0; dataset.num_classes()];
        for &i in &self.diag_instances {
            counts[dataset.labels()[i]] += 1;
        }
        counts
    }

    /// Instances whose label is an unseen class. These never enter
    /// training or diagnostics.
    pub fn unseen_instances(&self, dataset: &Dataset) -> Vec<usize> {
        (0..dataset.num_instances())
            .filter(|&i| self.unseen_classes.binary_search(&dataset.labels()[i]).is_ok())
            .collect()
    }
}

pub fn make_split(
    dataset: &Dataset,
    unseen_class_names: &[String],
    diag_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(diag_fraction > 0.0 && diag_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "diag_fraction must lie in (0, 1), got {diag_fraction}"
        )));
    }
    let mut unseen = unseen_class_names
        .iter()
        .map(|n| dataset.class_index(n))
        .collect::<Result<Vec<_>>>()?;
    unseen.sort_unstable();
    unseen.dedup();
    let seen: Vec<usize> = (0..dataset.num_classes())
        .filter(|c| unseen.binary_search(c).is_err())
        .collect();
    if seen.len() < 2 {
        return Err(Error::invalid(format!(
            "split leaves {} seen classes, need at least 2",
            seen.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut diag = Vec::new();
    for &class in &seen {
        let mut members = dataset.instances_of(class);
        let n = members.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "seen class `{}` has {n} instances, need at least 2",
                dataset.class_names()[class]
            )));
        }
        members.shuffle(&mut rng);
        // ceil with a guard against products like 0.2*100 landing a hair above
        // an integer; always leave one training instance
        let holdout = ((diag_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
        diag.extend_from_slice(&members[..holdout]);
        train.extend_from_slice(&members[holdout..]);
    }
    train.sort_unstable();
    diag.sort_unstable();
    Ok(Split {
        seen_classes: seen,
        unseen_classes: unseen,
        train_instances: train,
        diag_instances: diag,
    })
}
