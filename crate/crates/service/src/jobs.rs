use serde::{Deserialize, Serialize};
use zsl_core::model::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Pending, JobStatus::Running)
                | (JobStatus::Running, JobStatus::Done)
                | (JobStatus::Running, JobStatus::Failed)
        )
    }

    pub fn is_finished(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobMetrics {
    /// On the diagnostics holdout over seen classes.
    pub seen: Metrics,
    /// Zero-shot metrics; present only when unseen evaluation is enabled.
    pub unseen: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainJob {
    pub id: u64,
    pub status: JobStatus,
    pub base_revision: u64,
    pub weights: Vec<f64>,
    pub metrics_before: Option<JobMetrics>,
    pub metrics_after: Option<JobMetrics>,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub(crate) struct JobTable {
    jobs: Vec<RetrainJob>,
}

impl JobTable {
    pub fn busy(&self) -> bool {
        self.jobs.iter().any(|j| !j.status.is_finished())
    }

    pub fn create(&mut self, base_revision: u64, weights: Vec<f64>) -> RetrainJob {
        let job = RetrainJob {
            id: self.jobs.len() as u64 + 1,
            status: JobStatus::Pending,
            base_revision,
            weights,
            metrics_before: None,
            metrics_after: None,
            final_loss: None,
            error: None,
        };
        self.jobs.push(job.clone());
        job
    }

    pub fn get(&self, id: u64) -> Option<&RetrainJob> {
        id.checked_sub(1).and_then(|i| self.jobs.get(i as usize))
    }

    /// Moves a job forward; out-of-order transitions are ignored.
    pub fn update(&mut self, id: u64, status: JobStatus, edit: impl FnOnce(&mut RetrainJob)) {
        let Some(job) = id.checked_sub(1).and_then(|i| self.jobs.get_mut(i as usize)) else {
            return;
        };
        if job.status.can_become(status) {
            job.status = status;
            edit(job);
        }
    }
}
