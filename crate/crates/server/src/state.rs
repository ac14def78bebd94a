use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use serde_json::Value;

use curate_core::dataset::{parse_csv, LabeledDataset};
use curate_core::model::TrainControl;
use curate_core::session::{Proposal, Session, SessionConfig};

use crate::error::ApiError;

#[derive(Debug)]
pub struct DatasetEntry {
    pub id: String,
    pub name: String,
    pub label_column: String,
    pub dataset: LabeledDataset,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetInfo {
    pub id: String,
    pub name: String,
    pub label_column: String,
    pub hash: String,
    pub rows: usize,
    pub features: Vec<String>,
    pub classes: Vec<String>,
    pub class_counts: Vec<usize>,
}

impl DatasetEntry {
    pub fn info(&self) -> DatasetInfo {
        DatasetInfo {
            id: self.id.clone(),
            name: self.name.clone(),
            label_column: self.label_column.clone(),
            hash: self.dataset.content_hash(),
            rows: self.dataset.len(),
            features: self.dataset.feature_names().to_vec(),
            classes: self.dataset.class_names().to_vec(),
            class_counts: self.dataset.class_counts(),
        }
    }
}

/// One session. Readers take the latest snapshot; writers queue on
/// `writer`, work on a copy and swap it in when done.
#[derive(Debug)]
pub struct SessionSlot {
    pub id: String,
    pub dataset_id: String,
    current: RwLock<Arc<Session>>,
    pub writer: tokio::sync::Mutex<()>,
    proposals: Mutex<BTreeMap<String, Proposal>>,
}

impl SessionSlot {
    pub fn snapshot(&self) -> Arc<Session> {
        self.current.read().expect("session lock poisoned").clone()
    }

    /// Must be called while holding `writer`.
    pub fn replace(&self, session: Session) {
        *self.current.write().expect("session lock poisoned") = Arc::new(session);
    }

    pub fn store_proposal(&self, id: String, proposal: Proposal) {
        self.proposals.lock().expect("proposal lock poisoned").insert(id, proposal);
    }

    pub fn proposal(&self, id: &str) -> Option<Proposal> {
        self.proposals.lock().expect("proposal lock poisoned").get(id).cloned()
    }

    pub fn clear_proposals(&self) {
        self.proposals.lock().expect("proposal lock poisoned").clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug)]
struct JobOutcome {
    status: JobStatus,
    result: Option<Value>,
    error: Option<ApiError>,
}

#[derive(Debug)]
pub struct Job {
    pub id: String,
    pub kind: String,
    pub session_id: String,
    pub control: Arc<TrainControl>,
    outcome: Mutex<JobOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub id: String,
    pub kind: String,
    pub session_id: String,
    pub status: JobStatus,
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

impl Job {
    pub fn finish(&self, outcome: Result<Value, ApiError>) {
        let mut o = self.outcome.lock().expect("job lock poisoned");
        match outcome {
            Ok(v) => {
                o.status = JobStatus::Succeeded;
                o.result = Some(v);
            }
            Err(e) => {
                o.status = JobStatus::Failed;
                o.error = Some(e);
            }
        }
    }

    pub fn view(&self) -> JobView {
        let o = self.outcome.lock().expect("job lock poisoned");
        JobView {
            id: self.id.clone(),
            kind: self.kind.clone(),
            session_id: self.session_id.clone(),
            status: o.status,
            progress: if o.status == JobStatus::Succeeded {
                1.0
            } else {
                self.control.progress()
            },
            result: o.result.clone(),
            error: o.error.clone(),
        }
    }
}

#[derive(Debug, Default)]
pub struct AppState {
    datasets: RwLock<BTreeMap<String, Arc<DatasetEntry>>>,
    sessions: RwLock<BTreeMap<String, Arc<SessionSlot>>>,
    jobs: RwLock<BTreeMap<String, Arc<Job>>>,
    next_id: AtomicU64,
    /// Configuration used when a session request does not carry one.
    pub defaults: SessionConfig,
}

/// The CSV header's last column, the default label column.
pub fn last_column(csv_text: &str) -> Result<String, ApiError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ApiError::bad_request("invalid_dataset", e))?;
    headers
        .iter()
        .last()
        .map(|h| h.trim().to_string())
        .ok_or_else(|| ApiError::bad_request("invalid_dataset", "csv header is empty"))
}

impl AppState {
    pub fn new(defaults: SessionConfig) -> Self {
        Self {
            defaults,
            ..Self::default()
        }
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.next_id.fetch_add(1, Ordering::SeqCst) + 1)
    }

    pub fn add_dataset(
        &self,
        name: &str,
        csv_text: &str,
        label_column: Option<&str>,
    ) -> Result<Arc<DatasetEntry>, ApiError> {
        let label_column = match label_column {
            Some(l) => l.to_string(),
            None => last_column(csv_text)?,
        };
        let dataset = parse_csv(csv_text.as_bytes(), &label_column)?;
        let entry = Arc::new(DatasetEntry {
            id: self.fresh_id("d"),
            name: name.to_string(),
            label_column,
            dataset,
        });
        self.datasets
            .write()
            .expect("dataset lock poisoned")
            .insert(entry.id.clone(), entry.clone());
        Ok(entry)
    }

    /// Registers every `*.csv` file of `dir`, labelled by its last column.
    pub fn load_dir(&self, dir: &Path) -> anyhow::Result<Vec<Arc<DatasetEntry>>> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p)?;
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
            match self.add_dataset(name, &text, None) {
                Ok(e) => out.push(e),
                Err(e) => log::warn!("skipping {}: {}", p.display(), e.message),
            }
        }
        Ok(out)
    }

    pub fn datasets(&self) -> Vec<Arc<DatasetEntry>> {
        self.datasets.read().expect("dataset lock poisoned").values().cloned().collect()
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<DatasetEntry>, ApiError> {
        self.datasets
            .read()
            .expect("dataset lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("dataset", id))
    }

    pub fn add_session(&self, dataset_id: &str, session: Session) -> Arc<SessionSlot> {
        let slot = Arc::new(SessionSlot {
            id: self.fresh_id("s"),
            dataset_id: dataset_id.to_string(),
            current: RwLock::new(Arc::new(session)),
            writer: tokio::sync::Mutex::new(()),
            proposals: Mutex::new(BTreeMap::new()),
        });
        self.sessions
            .write()
            .expect("session lock poisoned")
            .insert(slot.id.clone(), slot.clone());
        slot
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .expect("session lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn proposal_id(&self) -> String {
        self.fresh_id("p")
    }

    pub fn add_job(&self, kind: &str, session_id: &str) -> Arc<Job> {
        let job = Arc::new(Job {
            id: self.fresh_id("j"),
            kind: kind.to_string(),
            session_id: session_id.to_string(),
            control: Arc::new(TrainControl::new()),
            outcome: Mutex::new(JobOutcome {
                status: JobStatus::Running,
                result: None,
                error: None,
            }),
        });
        self.jobs
            .write()
            .expect("job lock poisoned")
            .insert(job.id.clone(), job.clone());
        job
    }

    pub fn job(&self, id: &str) -> Result<Arc<Job>, ApiError> {
        self.jobs
            .read()
            .expect("job lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("job", id))
    }
}
