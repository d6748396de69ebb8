//! HTTP service over one diagnosis and steering session.
//!
//! The router answers 503 until a [`Session`] is installed, so a server can
//! start listening while the dataset and projection are still loading.

mod api;
mod error;
mod jobs;
mod session;

use std::path::Path;
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

use zsl_core::steering;

pub use api::{
    CategoryView, Contribution, DecompositionPayload, DiagnosticsPayload, MetricsPayload,
    OverviewPayload, WeightUpdate, WeightsPayload,
};
pub use error::{ApiError, ErrorBody};
pub use jobs::{JobMetrics, JobStatus, RetrainJob};
pub use session::{Session, SessionInputs};

use error::ApiResult;
use jobs::JobTable;
use session::RetrainInputs;

#[derive(Debug, Default)]
struct Shared {
    session: RwLock<Option<Session>>,
    jobs: Mutex<JobTable>,
}

#[derive(Debug, Clone, Default)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// A state with no session; every API call answers 503.
    pub fn loading() -> Self {
        Self::default()
    }

    pub fn ready(session: Session) -> Self {
        let state = Self::default();
        state.install(session);
        state
    }

    pub fn install(&self, session: Session) {
        *self.shared.session.write().unwrap_or_else(PoisonError::into_inner) = Some(session);
    }

    pub fn is_ready(&self) -> bool {
        self.shared
            .session
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .is_some()
    }

    pub fn read<T>(&self, f: impl FnOnce(&Session) -> ApiResult<T>) -> ApiResult<T> {
        let guard = self.shared.session.read().unwrap_or_else(PoisonError::into_inner);
        f(guard.as_ref().ok_or_else(ApiError::not_ready)?)
    }

    pub fn write<T>(&self, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
        let mut guard = self.shared.session.write().unwrap_or_else(PoisonError::into_inner);
        f(guard.as_mut().ok_or_else(ApiError::not_ready)?)
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, JobTable> {
        self.shared.jobs.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn job(&self, id: u64) -> Option<RetrainJob> {
        self.jobs().get(id).cloned()
    }

    /// Queues a cold-start retrain under the current weights on a blocking
    /// thread. Fails with 409 while another job is unfinished.
    pub fn start_retrain(&self) -> ApiResult<RetrainJob> {
        let inputs = self.read(|s| Ok(s.retrain_inputs()))?;
        let job = {
            let mut jobs = self.jobs();
            if jobs.busy() {
                return Err(ApiError::busy());
            }
            jobs.create(inputs.revision, inputs.steering.weights().to_vec())
        };
        let app = self.clone();
        let id = job.id;
        tokio::task::spawn_blocking(move || app.run_retrain(id, inputs));
        Ok(job)
    }

    fn run_retrain(&self, id: u64, inputs: RetrainInputs) {
        self.jobs().update(id, JobStatus::Running, |_| {});
        log::info!("retrain job {id} started at revision {}", inputs.revision);
        match retrain_job(&inputs) {
            Ok((model, before, after, loss)) => {
                let _ = self.write(|s| {
                    s.swap_model(model);
                    Ok(())
                });
                log::info!("retrain job {id} done, final loss {loss:.6}");
                self.jobs().update(id, JobStatus::Done, |j| {
                    j.metrics_before = Some(before);
                    j.metrics_after = Some(after);
                    j.final_loss = Some(loss);
                });
            }
            Err(e) => {
                log::warn!("retrain job {id} failed: {e}");
                self.jobs()
                    .update(id, JobStatus::Failed, |j| j.error = Some(e.to_string()));
            }
        }
    }
}

type RetrainResult = (zsl_core::model::MappingModel, JobMetrics, JobMetrics, f64);

fn retrain_job(inputs: &RetrainInputs) -> zsl_core::Result<RetrainResult> {
    let RetrainInputs {
        dataset,
        split,
        signatures,
        model,
        steering: state,
        config,
        eval_unseen,
        ..
    } = inputs;
    let w = state.weights();
    let measure = |m: &zsl_core::model::MappingModel| -> zsl_core::Result<JobMetrics> {
        let unseen = if *eval_unseen && !split.unseen_classes.is_empty() {
            Some(steering::unseen_metrics(m, dataset, split, signatures, w)?)
        } else {
            None
        };
        Ok(JobMetrics {
            seen: steering::seen_metrics(m, dataset, split, signatures, w)?,
            unseen,
        })
    };
    let before = measure(model)?;
    let outcome = steering::retrain(dataset, split, signatures, state, config)?;
    let after = measure(&outcome.model)?;
    Ok((outcome.model, before, after, outcome.report.final_loss))
}

/// All API routes, plus the UI bundle at `/` when `static_dir` is given.
pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/overview", get(api::overview))
        .route("/api/diagnostics", get(api::diagnostics))
        .route("/api/decomposition", get(api::decomposition))
        .route("/api/weights", get(api::get_weights).post(api::post_weights))
        .route("/api/retrain", post(api::post_retrain))
        .route("/api/retrain/{id}", get(api::get_retrain))
        .route("/api/metrics", get(api::metrics))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `app` until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
