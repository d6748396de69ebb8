//! The single analysis session served by the API.

use std::sync::{Arc, Mutex, PoisonError};

use zsl_core::dataset::{Dataset, SignatureMatrix, Split};
use zsl_core::diagnostics::{self, DiagnosticsSummary, MispredictionRecord};
use zsl_core::model::{MappingModel, Metrics, TrainConfig};
use zsl_core::projection::{project_categories, ProjectionResult, TsneConfig};
use zsl_core::steering::{self, SteeringState};
use zsl_core::{Error, Result};

/// Everything needed to start a session.
#[derive(Debug, Clone)]
pub struct SessionInputs {
    pub dataset: Dataset,
    pub split: Split,
    pub signatures: SignatureMatrix,
    pub model: MappingModel,
    pub config: TrainConfig,
    /// Initial steering weights, usually those the model was trained under.
    pub weights: Vec<f64>,
    pub tsne: TsneConfig,
    pub eval_unseen: bool,
}

#[derive(Debug)]
pub struct Session {
    dataset: Arc<Dataset>,
    split: Arc<Split>,
    signatures: Arc<SignatureMatrix>,
    model: Arc<MappingModel>,
    config: TrainConfig,
    steering: SteeringState,
    revision: u64,
    projection: ProjectionResult,
    eval_unseen: bool,
    records: Mutex<Option<Arc<Vec<MispredictionRecord>>>>,
}

impl Session {
    pub fn new(inputs: SessionInputs) -> Result<Self> {
        let SessionInputs {
            dataset,
            split,
            signatures,
            model,
            config,
            weights,
            tsne,
            eval_unseen,
        } = inputs;
        if model.input_dim() != dataset.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, dataset has {}",
                model.input_dim(),
                dataset.feature_dim()
            )));
        }
        if model.attr_dim() != signatures.num_attributes() {
            return Err(Error::DimensionMismatch(format!(
                "model outputs {} attributes, dataset has {}",
                model.attr_dim(),
                signatures.num_attributes()
            )));
        }
        if weights.len() != signatures.num_attributes() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} attributes",
                weights.len(),
                signatures.num_attributes()
            )));
        }
        let steering = SteeringState::from_weights(&weights)?;
        let projection = project_categories(&signatures, &split, &tsne)?;
        Ok(Self {
            dataset: Arc::new(dataset),
            split: Arc::new(split),
            signatures: Arc::new(signatures),
            model: Arc::new(model),
            config,
            steering,
            revision: 0,
            projection,
            eval_unseen,
            records: Mutex::new(None),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn signatures(&self) -> &SignatureMatrix {
        &self.signatures
    }

    pub fn model(&self) -> &MappingModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steering(&self) -> &SteeringState {
        &self.steering
    }

    pub fn weights(&self) -> &[f64] {
        self.steering.weights()
    }

    /// Bumped by every weight change and model swap.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn projection(&self) -> &ProjectionResult {
        &self.projection
    }

    pub fn eval_unseen(&self) -> bool {
        self.eval_unseen
    }

    pub fn adjust_weight(&mut self, attribute: usize, delta: f64) -> Result<()> {
        self.steering.apply(attribute, delta)?;
        self.bump();
        Ok(())
    }

    pub(crate) fn swap_model(&mut self, model: MappingModel) {
        self.model = Arc::new(model);
        self.bump();
    }

    fn bump(&mut self) {
        self.revision += 1;
        *self.records.lock().unwrap_or_else(PoisonError::into_inner) = None;
    }

    /// Diagnostics-holdout mispredictions under the current model and
    /// weights, computed once per revision.
    fn records(&self) -> Result<Arc<Vec<MispredictionRecord>>> {
        let mut slot = self.records.lock().unwrap_or_else(PoisonError::into_inner);
        if let Some(r) = slot.as_ref() {
            return Ok(Arc::clone(r));
        }
        let records = Arc::new(diagnostics::collect_mispredictions(
            &self.model,
            &self.split.diag_instances,
            &self.split.seen_classes,
            &self.dataset,
            &self.signatures,
            self.steering.weights(),
        )?);
        *slot = Some(Arc::clone(&records));
        Ok(records)
    }

    /// Same result as `diagnostics::diagnose` for this session's state.
    pub fn diagnostics(&self, selected: &[usize]) -> Result<DiagnosticsSummary> {
        if let Some(&c) = selected.iter().find(|&&c| !self.split.is_seen(c)) {
            return Err(Error::InvalidArgument(format!(
                "`{}` is not a seen category",
                self.dataset.class_names()[c]
            )));
        }
        let records = self.records()?;
        diagnostics::aggregate_scores(
            &records,
            self.signatures.num_attributes(),
            selected,
            &self.split.diag_counts(&self.dataset),
        )
    }

    pub fn seen_metrics(&self) -> Result<Metrics> {
        steering::seen_metrics(
            &self.model,
            &self.dataset,
            &self.split,
            &self.signatures,
            self.steering.weights(),
        )
    }

    /// `None` unless unseen evaluation was enabled.
    pub fn unseen_metrics(&self) -> Result<Option<Metrics>> {
        if !self.eval_unseen || self.split.unseen_classes.is_empty() {
            return Ok(None);
        }
        steering::unseen_metrics(
            &self.model,
            &self.dataset,
            &self.split,
            &self.signatures,
            self.steering.weights(),
        )
        .map(Some)
    }

    pub(crate) fn retrain_inputs(&self) -> RetrainInputs {
        RetrainInputs {
            dataset: Arc::clone(&self.dataset),
            split: Arc::clone(&self.split),
            signatures: Arc::clone(&self.signatures),
            model: Arc::clone(&self.model),
            steering: self.steering.clone(),
            config: self.config.clone(),
            revision: self.revision,
            eval_unseen: self.eval_unseen,
        }
    }
}

/// Snapshot handed to a background retrain.
#[derive(Debug, Clone)]
pub(crate) struct RetrainInputs {
    pub dataset: Arc<Dataset>,
    pub split: Arc<Split>,
    pub signatures: Arc<SignatureMatrix>,
    pub model: Arc<MappingModel>,
    pub steering: SteeringState,
    pub config: TrainConfig,
    pub revision: u64,
    pub eval_unseen: bool,
}
