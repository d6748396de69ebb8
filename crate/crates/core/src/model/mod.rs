//! The attribute-embedding classifier.
//!
//! A two-layer network `f(x) = W2 · relu(W1 · x + b1) + b2` maps input
//! features into attribute space. Classes are scored by the (optionally
//! diagonally weighted) dot product between `f(x)` and their signature, and
//! training minimizes the max-margin hinge
//!
//! ```text
//! mean_i max_{y ∈ S, y ≠ y_i} ⌊ s_w(f(x_i), z_y) − s_w(f(x_i), z_{y_i}) + η ⌋₊
//! ```
//!
//! plus an L2 penalty on all parameters.

mod checkpoint;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SignatureMatrix, Split};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Parameters of the two-layer mapping into attribute space. Also used as the
/// container for parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingModel {
    pub w1: Matrix<f64>,
    pub b1: Vec<f64>,
    pub w2: Matrix<f64>,
    pub b2: Vec<f64>,
}

impl MappingModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, attr_dim: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden_dim, input_dim),
            b1: vec![0.0; hidden_dim],
            w2: Matrix::zeros(attr_dim, hidden_dim),
            b2: vec![0.0; attr_dim],
        }
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, attr_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut m = Self::zeros(input_dim, hidden_dim, attr_dim);
        let fill = |w: &mut Matrix<f64>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for v in w.as_mut_slice() {
                *v = dist.sample(rng);
            }
        };
        fill(&mut m.w1, input_dim, hidden_dim, rng);
        fill(&mut m.w2, hidden_dim, attr_dim, rng);
        m
    }

    /// Builds a model from explicit parameters, checking shapes.
    pub fn from_parts(w1: Matrix<f64>, b1: Vec<f64>, w2: Matrix<f64>, b2: Vec<f64>) -> Result<Self> {
        if b1.len() != w1.rows() || w2.cols() != w1.rows() || b2.len() != w2.rows() {
            return Err(Error::dims(format!(
                "inconsistent layer shapes: W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                w1.rows(),
                w1.cols(),
                b1.len(),
                w2.rows(),
                w2.cols(),
                b2.len()
            )));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn attr_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// W1, b1, W2, b2 as flat slices, in checkpoint order.
    pub fn params(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.params().iter().flat_map(|p| p.iter()).map(|v| v * v).sum()
    }

    fn forward_with(&self, x: &[f64], pre: &mut [f64], hidden: &mut [f64], out: &mut [f64]) {
        self.w1.matvec_into(x, pre);
        for ((p, h), b) in pre.iter_mut().zip(hidden.iter_mut()).zip(&self.b1) {
            *p += b;
            *h = p.max(0.0);
        }
        self.w2.matvec_into(hidden, out);
        for (o, b) in out.iter_mut().zip(&self.b2) {
            *o += b;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let h = self.hidden_dim();
        let (mut pre, mut hidden) = (vec![0.0; h], vec![0.0; h]);
        let mut out = vec![0.0; self.attr_dim()];
        self.forward_with(x, &mut pre, &mut hidden, &mut out);
        Ok(out)
    }
}

/// Dot-product compatibility between two attribute-space points.
pub fn compatibility(z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::dims(format!("{} vs {} attributes", z1.len(), z2.len())));
    }
    Ok(dot(z1, z2))
}

/// `Σ_k w_k z1_k z2_k`, evaluated as `Σ_k z1_k (w_k z2_k)` so that it is
/// bitwise equal to `compatibility(z1, diag(w) z2)`.
pub fn weighted_compatibility(z1: &[f64], z2: &[f64], w: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() || w.len() != z1.len() {
        return Err(Error::dims(format!(
            "{} vs {} attributes with {} weights",
            z1.len(),
            z2.len(),
            w.len()
        )));
    }
    validate_weights(w)?;
    Ok(z1.iter().zip(z2).zip(w).map(|((a, b), w)| a * (w * b)).sum())
}

pub(crate) fn validate_weights(w: &[f64]) -> Result<()> {
    match w.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(k) => Err(Error::invalid(format!("weight {k} = {} outside [0, 1]", w[k]))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub margin_eta: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin_eta: 0.1,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            epochs: 50,
            weight_decay: 1e-5,
            hidden_dim: 512,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("train config: {what}")));
        if !(self.margin_eta >= 0.0 && self.margin_eta.is_finite()) {
            return bad("margin_eta must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and >= 0");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Hinge loss over a batch and its gradient, with class scores computed
/// under attribute weights `w`.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    model: &MappingModel,
    inputs: &[&[f64]],
    labels: &[usize],
    signatures: &SignatureMatrix,
    seen: &[usize],
    w: &[f64],
    eta: f64,
    weight_decay: f64,
) -> Result<(f64, MappingModel)> {
    validate_weights(w)?;
    let scaled = signatures.scaled(w)?;
    loss_and_grad_prescaled(model, inputs, labels, &scaled, seen, eta, weight_decay)
}

/// As [`loss_and_grad`], with the attribute weights already folded into
/// `signatures`.
pub(crate) fn loss_and_grad_prescaled(
    model: &MappingModel,
    inputs: &[&[f64]],
    labels: &[usize],
    signatures: &SignatureMatrix,
    seen: &[usize],
    eta: f64,
    weight_decay: f64,
) -> Result<(f64, MappingModel)> {
    if inputs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::dims(format!(
            "{} inputs with {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if seen.len() < 2 {
        return Err(Error::invalid("need at least one competing seen class"));
    }
    if seen.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::invalid("seen classes must be strictly ascending"));
    }
    if signatures.num_attributes() != model.attr_dim() {
        return Err(Error::dims(format!(
            "signatures have {} attributes, model outputs {}",
            signatures.num_attributes(),
            model.attr_dim()
        )));
    }
    let (h, a) = (model.hidden_dim(), model.attr_dim());
    let mut grad = MappingModel::zeros(model.input_dim(), h, a);
    let mut pre = vec![0.0; h];
    let mut hidden = vec![0.0; h];
    let mut out = vec![0.0; a];
    let mut d_out = vec![0.0; a];
    let mut d_pre = vec![0.0; h];
    let scale = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;

    for (&x, &label) in inputs.iter().zip(labels) {
        if x.len() != model.input_dim() {
            return Err(Error::dims(format!(
                "input has {} features, model expects {}",
                x.len(),
                model.input_dim()
            )));
        }
        if seen.binary_search(&label).is_err() {
            return Err(Error::invalid(format!("label {label} is not a seen class")));
        }
        model.forward_with(x, &mut pre, &mut hidden, &mut out);
        let true_score = dot(&out, signatures.signature(label));
        let (violator, best) = seen
            .iter()
            .filter(|&&y| y != label)
            .map(|&y| (y, dot(&out, signatures.signature(y))))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, cur| {
                if cur.1 > acc.1 {
                    cur
                } else {
                    acc
                }
            });
        if violator == usize::MAX || !true_score.is_finite() {
            // non-finite scores: the caller treats NaN loss as divergence
            return Ok((f64::NAN, grad));
        }
        let hinge = best - true_score + eta;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge;

        let (zv, zt) = (signatures.signature(violator), signatures.signature(label));
        for k in 0..a {
            d_out[k] = scale * (zv[k] - zt[k]);
        }
        for (k, &g) in d_out.iter().enumerate() {
            grad.b2[k] += g;
            for (gw, hj) in grad.w2.row_mut(k).iter_mut().zip(&hidden) {
                *gw += g * hj;
            }
        }
        for j in 0..h {
            d_pre[j] = if pre[j] > 0.0 {
                (0..a).map(|k| model.w2.get(k, j) * d_out[k]).sum()
            } else {
                0.0
            };
        }
        for (j, &g) in d_pre.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b1[j] += g;
            for (gw, xi) in grad.w1.row_mut(j).iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
    }
    loss *= scale;

    if weight_decay > 0.0 {
        loss += 0.5 * weight_decay * model.squared_norm();
        for (g, p) in grad.params_mut().into_iter().zip(model.params()) {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += weight_decay * pi;
            }
        }
    }
    Ok((loss, grad))
}

pub(crate) fn to_f64(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&v| f64::from(v)).collect()
}

/// Mini-batch SGD with momentum on the split's training instances, cold
/// started from `config.seed`. Attribute weights are folded into the
/// signatures once up front.
pub fn train(
    dataset: &Dataset,
    split: &Split,
    signatures: &SignatureMatrix,
    w: &[f64],
    config: &TrainConfig,
) -> Result<(MappingModel, TrainReport)> {
    config.validate()?;
    validate_weights(w)?;
    if split.train_instances.is_empty() {
        return Err(Error::invalid("split has no training instances"));
    }
    if signatures.num_classes() != dataset.num_classes() {
        return Err(Error::dims(format!(
            "{} signatures for {} classes",
            signatures.num_classes(),
            dataset.num_classes()
        )));
    }
    let scaled = signatures.scaled(w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MappingModel::init(
        dataset.feature_dim(),
        config.hidden_dim,
        signatures.num_attributes(),
        &mut rng,
    );
    let mut velocity = MappingModel::zeros(model.input_dim(), model.hidden_dim(), model.attr_dim());

    let inputs: Vec<Vec<f64>> = (0..dataset.num_instances())
        .map(|i| to_f64(dataset.feature_row(i)))
        .collect();
    let mut order = split.train_instances.clone();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut batch_x: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    let mut batch_y = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(&inputs[i]);
                batch_y.push(dataset.labels()[i]);
            }
            let (loss, grad) = loss_and_grad_prescaled(
                &model,
                &batch_x,
                &batch_y,
                &scaled,
                &split.seen_classes,
                config.margin_eta,
                config.weight_decay,
            )?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch: epoch + 1,
                    loss,
                });
            }
            total += loss * chunk.len() as f64;
            for ((p, v), g) in model
                .params_mut()
                .into_iter()
                .zip(velocity.params_mut())
                .zip(grad.params())
            {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = config.momentum * *vi - config.learning_rate * gi;
                    *pi += *vi;
                }
            }
        }
        let mean = total / order.len() as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch: epoch + 1,
                loss: mean,
            });
        }
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        loss_history.push(mean);
    }
    let final_loss = *loss_history.last().expect("epochs >= 1");
    Ok((
        model,
        TrainReport {
            final_loss,
            epochs_run: loss_history.len(),
            loss_history,
        },
    ))
}

/// Highest-scoring candidate for an already mapped point; ties go to the
/// lowest class index. `signatures` must already carry any attribute weights.
pub(crate) fn argmax_class(mapped: &[f64], candidates: &[usize], signatures: &SignatureMatrix) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for &y in candidates {
        let s = dot(mapped, signatures.signature(y));
        if s > best.1 || (s == best.1 && y < best.0) {
            best = (y, s);
        }
    }
    best.0
}

pub fn predict(
    model: &MappingModel,
    x: &[f64],
    candidate_classes: &[usize],
    signatures: &SignatureMatrix,
    w: &[f64],
) -> Result<usize> {
    if candidate_classes.is_empty() {
        return Err(Error::invalid("empty candidate set"));
    }
    if let Some(&y) = candidate_classes.iter().find(|&&y| y >= signatures.num_classes()) {
        return Err(Error::invalid(format!("candidate class {y} out of range")));
    }
    validate_weights(w)?;
    let mapped = model.forward(x)?;
    let scaled = signatures.scaled(w)?;
    Ok(argmax_class(&mapped, candidate_classes, &scaled))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassAccuracy>,
    pub mean_per_class: f64,
    pub overall: f64,
    pub correct: usize,
    pub total: usize,
}

impl Metrics {
    /// Tallies (true, predicted) pairs. Only classes with at least one
    /// instance appear in `per_class`.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut tally = std::collections::BTreeMap::<usize, (usize, usize)>::new();
        for (truth, pred) in pairs {
            let e = tally.entry(truth).or_default();
            e.1 += 1;
            if truth == pred {
                e.0 += 1;
            }
        }
        if tally.is_empty() {
            return Err(Error::invalid("no instances to evaluate"));
        }
        let per_class: Vec<ClassAccuracy> = tally
            .into_iter()
            .map(|(class, (correct, total))| ClassAccuracy {
                class,
                correct,
                total,
                accuracy: correct as f64 / total as f64,
            })
            .collect();
        let correct = per_class.iter().map(|c| c.correct).sum();
        let total = per_class.iter().map(|c| c.total).sum();
        let mean_per_class =
            per_class.iter().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64;
        Ok(Self {
            per_class,
            mean_per_class,
            overall: correct as f64 / total as f64,
            correct,
            total,
        })
    }

    pub fn class(&self, class: usize) -> Option<&ClassAccuracy> {
        self.per_class.iter().find(|c| c.class == class)
    }
}

/// Predictions for `instances` over `candidate_classes` under weights `w`.
pub fn predict_instances(
    model: &MappingModel,
    instances: &[usize],
    candidate_classes: &[usize],
    dataset: &Dataset,
    signatures: &SignatureMatrix,
    w: &[f64],
) -> Result<Vec<usize>> {
    if candidate_classes.is_empty() {
        return Err(Error::invalid("empty candidate set"));
    }
    validate_weights(w)?;
    let scaled = signatures.scaled(w)?;
    instances
        .iter()
        .map(|&i| {
            let mapped = model.forward(&to_f64(dataset.feature_row(i)))?;
            Ok(argmax_class(&mapped, candidate_classes, &scaled))
        })
        .collect()
}

pub fn evaluate(
    model: &MappingModel,
    instances: &[usize],
    candidate_classes: &[usize],
    dataset: &Dataset,
    signatures: &SignatureMatrix,
    w: &[f64],
) -> Result<Metrics> {
    if let Some(&i) = instances
        .iter()
        .find(|&&i| !candidate_classes.contains(&dataset.labels()[i]))
    {
        return Err(Error::invalid(format!(
            "instance {i} is labelled `{}`, which is not a candidate class",
            dataset.class_names()[dataset.labels()[i]]
        )));
    }
    let preds = predict_instances(model, instances, candidate_classes, dataset, signatures, w)?;
    Metrics::from_pairs(instances.iter().map(|&i| dataset.labels()[i]).zip(preds))
}
