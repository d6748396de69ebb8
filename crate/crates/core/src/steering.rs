//! Attribute weights and weighted retraining.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SignatureMatrix, Split};
use crate::diagnostics::{self, DiagnosticsSummary};
use crate::error::{Error, Result};
use crate::model::{self, MappingModel, Metrics, TrainConfig, TrainReport};

/// Size of one interactive down-weighting step.
pub const WEIGHT_STEP: f64 = 0.1;

/// Weights below this tend to hurt accuracy; surfaced as a warning only.
pub const WEIGHT_GUIDANCE_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightChange {
    pub attribute: usize,
    pub old: f64,
    pub new: f64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringState {
    weights: Vec<f64>,
    revision: u64,
    history: Vec<WeightChange>,
}

impl SteeringState {
    pub fn new(num_attributes: usize) -> Self {
        Self {
            weights: vec![1.0; num_attributes],
            revision: 0,
            history: Vec::new(),
        }
    }

    /// Starts from an explicit weight vector, recorded as one history entry
    /// per attribute that differs from 1.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        model::validate_weights(weights)?;
        let mut state = Self::new(weights.len());
        for (k, &w) in weights.iter().enumerate() {
            if w != 1.0 {
                state.set(k, w)?;
            }
        }
        Ok(state)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn history(&self) -> &[WeightChange] {
        &self.history
    }

    /// `clamp(old + delta, 0, 1)`; always bumps the revision.
    pub fn adjust_weight(&self, attribute: usize, delta: f64) -> Result<Self> {
        let mut next = self.clone();
        next.apply(attribute, delta)?;
        Ok(next)
    }

    pub fn apply(&mut self, attribute: usize, delta: f64) -> Result<f64> {
        let old = *self.weights.get(attribute).ok_or_else(|| {
            Error::invalid(format!(
                "attribute {attribute} out of range for {} attributes",
                self.weights.len()
            ))
        })?;
        if !delta.is_finite() {
            return Err(Error::invalid(format!("weight delta {delta} is not finite")));
        }
        self.set(attribute, (old + delta).clamp(0.0, 1.0))
    }

    fn set(&mut self, attribute: usize, new: f64) -> Result<f64> {
        let old = self.weights[attribute];
        self.weights[attribute] = new;
        self.revision += 1;
        self.history.push(WeightChange {
            attribute,
            old,
            new,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
        });
        Ok(new)
    }

    /// Weights obtained by replaying the history from all-ones.
    pub fn replay(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.weights.len()];
        for change in &self.history {
            w[change.attribute] = change.new;
        }
        w
    }

    /// Attributes weighted below the guidance floor.
    pub fn below_guidance(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&k| self.weights[k] < WEIGHT_GUIDANCE_FLOOR)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainOutcome {
    pub model: MappingModel,
    pub report: TrainReport,
    /// Over all seen categories, under the new model and weights.
    pub diagnostics: DiagnosticsSummary,
}

/// Cold-start retrain under the state's weights with the given config (pass
/// the base model's config to keep the seed), then recompute diagnostics.
pub fn retrain(
    dataset: &Dataset,
    split: &Split,
    signatures: &SignatureMatrix,
    state: &SteeringState,
    config: &TrainConfig,
) -> Result<RetrainOutcome> {
    let (model, report) = model::train(dataset, split, signatures, state.weights(), config)?;
    let diagnostics = diagnostics::diagnose(
        &model,
        dataset,
        split,
        signatures,
        state.weights(),
        &split.seen_classes,
    )?;
    Ok(RetrainOutcome {
        model,
        report,
        diagnostics,
    })
}

/// Accuracy on the diagnostics holdout over seen classes.
pub fn seen_metrics(
    model: &MappingModel,
    dataset: &Dataset,
    split: &Split,
    signatures: &SignatureMatrix,
    weights: &[f64],
) -> Result<Metrics> {
    model::evaluate(
        model,
        &split.diag_instances,
        &split.seen_classes,
        dataset,
        signatures,
        weights,
    )
}

/// Zero-shot accuracy on unseen-class instances over unseen candidates.
pub fn unseen_metrics(
    model: &MappingModel,
    dataset: &Dataset,
    split: &Split,
    signatures: &SignatureMatrix,
    weights: &[f64],
) -> Result<Metrics> {
    model::evaluate(
        model,
        &split.unseen_instances(dataset),
        &split.unseen_classes,
        dataset,
        signatures,
        weights,
    )
}

/// `{"weights": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub weights: Vec<f64>,
}

pub fn parse_weights(bytes: &[u8], num_attributes: Option<usize>) -> Result<Vec<f64>> {
    let file: WeightsFile = serde_json::from_slice(bytes)
        .map_err(|e| Error::format("weights", None, e.to_string()))?;
    if let Some(a) = num_attributes {
        if file.weights.len() != a {
            return Err(Error::dims(format!(
                "weights file has {} entries for {a} attributes",
                file.weights.len()
            )));
        }
    }
    model::validate_weights(&file.weights)?;
    Ok(file.weights)
}
