use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub project_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

/// In-memory job table. Jobs do not survive a restart; projects do.
#[derive(Default)]
pub struct Jobs {
    inner: Mutex<(u64, BTreeMap<String, Job>)>,
}

impl Jobs {
    pub fn start(&self) -> Job {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        g.0 += 1;
        let job = Job {
            id: format!("job-{}", g.0),
            status: JobStatus::Pending,
            project_id: None,
            error: None,
        };
        g.1.insert(job.id.clone(), job.clone());
        job
    }

    pub fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(job) = g.1.get_mut(id) {
            f(job);
        }
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).1.get(id).cloned()
    }
}
