//! Synthetic attribute datasets with an optional planted unreliable attribute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Dataset, SplitFile};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seen_classes: usize,
    pub unseen_classes: usize,
    pub attributes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub noise_sigma: f64,
    /// Attribute whose feature contribution is replaced by noise.
    pub corrupt_attribute: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// The d×a lift mapping raw signatures to features.
    pub lift: Matrix<f64>,
    pub unseen_names: Vec<String>,
}

impl SyntheticDataset {
    pub fn split_file(&self, diag_fraction: f64, seed: u64) -> SplitFile {
        SplitFile {
            unseen: self.unseen_names.clone(),
            diag_fraction,
            seed,
        }
    }
}

/// Draws class signatures `z ~ N(0, I)`, a Gaussian lift `A` (d×a, entries
/// `N(0, 1/a)`), and instances `x = A z_y + ε`, `ε ~ N(0, σ²I)`.
///
/// With `corrupt_attribute = k`, the term `A[:, k] z_{y,k}` is replaced by
/// `A[:, k] ξ` with a fresh `ξ ~ N(0, 1)` per instance, so features carry no
/// information about attribute `k`. Seen classes come first (`seen_00`, ...),
/// then unseen (`unseen_00`, ...).
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let &SyntheticConfig {
        seen_classes,
        unseen_classes,
        attributes: a,
        dim: d,
        per_class,
        noise_sigma,
        corrupt_attribute,
        seed,
    } = config;
    if a == 0 || d < a {
        return Err(Error::invalid(format!(
            "need 1 <= attributes <= dim, got attributes={a} dim={d}"
        )));
    }
    if seen_classes < 2 {
        return Err(Error::invalid("need at least two seen classes"));
    }
    if per_class < 2 {
        return Err(Error::invalid("per_class must be at least 2"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise_sigma {noise_sigma} invalid")));
    }
    if let Some(k) = corrupt_attribute {
        if k >= a {
            return Err(Error::invalid(format!(
                "corrupt attribute {k} out of range for {a} attributes"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = seen_classes + unseen_classes;
    let signatures: Vec<f64> = (0..classes * a).map(|_| rng.sample(StandardNormal)).collect();
    let signatures = Matrix::from_vec(classes, a, signatures)?;

    let lift_scale = 1.0 / (a as f64).sqrt();
    let lift: Vec<f64> = (0..d * a)
        .map(|_| lift_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lift = Matrix::from_vec(d, a, lift)?;

    let noise = Normal::new(0.0, noise_sigma).expect("validated sigma");
    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut z = vec![0.0; a];
    for class in 0..classes {
        for _ in 0..per_class {
            z.copy_from_slice(signatures.row(class));
            if let Some(k) = corrupt_attribute {
                z[k] = rng.sample(StandardNormal);
            }
            for j in 0..d {
                let clean: f64 = lift.row(j).iter().zip(&z).map(|(l, v)| l * v).sum();
                let eps = if noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                features.push((clean + eps) as f32);
            }
            labels.push(class);
        }
    }

    let class_names: Vec<String> = (0..seen_classes)
        .map(|i| format!("seen_{i:02}"))
        .chain((0..unseen_classes).map(|i| format!("unseen_{i:02}")))
        .collect();
    let unseen_names = class_names[seen_classes..].to_vec();
    let attribute_names = (0..a).map(|k| format!("attr_{k:02}")).collect();
    let dataset = Dataset::new(
        Matrix::from_vec(n, d, features)?,
        labels,
        class_names,
        signatures,
        attribute_names,
    )?;
    Ok(SyntheticDataset {
        dataset,
        lift,
        unseen_names,
    })
}
