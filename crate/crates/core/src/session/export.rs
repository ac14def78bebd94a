//! Versioned session JSON. A replay script uses the same schema with the
//! computed fields left out.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ConfirmedAddition, SankeyFlow, Session, SessionConfig, SessionError, SessionStep, StepAction,
    StepMetrics, STEP_KINDS,
};
use crate::dataset::LabeledDataset;
use crate::sampling::{Acceptance, Removal};
use crate::typing::TypeAssignment;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    pub label_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// One step as stored in a file. Everything except the action and the
/// acceptance is computed and optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(flatten)]
    pub action: StepAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<Acceptance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removals: Option<Vec<Removal>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additions: Option<Vec<ConfirmedAddition>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_before: Option<StepMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_after: Option<StepMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sankey: Option<Vec<SankeyFlow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl StepRecord {
    /// A script step: just the action and, for sampling, the acceptance.
    pub fn script(action: StepAction, acceptance: Option<Acceptance>) -> Self {
        Self {
            index: None,
            action,
            acceptance,
            removals: None,
            additions: None,
            metrics_before: None,
            metrics_after: None,
            train_size: None,
            class_counts: None,
            k: None,
            sankey: None,
            timestamp: None,
        }
    }
}

impl From<&SessionStep> for StepRecord {
    fn from(s: &SessionStep) -> Self {
        Self {
            index: Some(s.index),
            action: s.action.clone(),
            acceptance: s.acceptance.clone(),
            removals: Some(s.removals.clone()),
            additions: Some(s.additions.clone()),
            metrics_before: s.metrics_before,
            metrics_after: Some(s.metrics_after),
            train_size: Some(s.train_size),
            class_counts: Some(s.class_counts.clone()),
            k: Some(s.k),
            sankey: Some(s.sankey.clone()),
            timestamp: s.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub schema_version: u32,
    pub dataset: DatasetRef,
    #[serde(default)]
    pub config: SessionConfig,
    #[serde(default)]
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<Vec<TypeAssignment>>,
}

fn schema(path: impl Into<String>, message: impl ToString) -> SessionError {
    SessionError::Schema {
        path: path.into(),
        message: message.to_string(),
    }
}

impl SessionFile {
    /// A replay script for `label_column` with the given steps.
    pub fn script(label_column: impl Into<String>, config: SessionConfig, steps: Vec<StepRecord>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetRef {
                hash: None,
                label_column: label_column.into(),
                path: None,
            },
            config,
            steps,
            types: None,
        }
    }

    /// Parses and validates a session file or script. Errors name the
    /// offending field.
    pub fn parse(json: &str) -> Result<Self, SessionError> {
        let value: Value = serde_json::from_str(json).map_err(|e| schema("$", e))?;
        let obj = value.as_object().ok_or_else(|| schema("$", "expected an object"))?;
        let version = obj
            .get("schema_version")
            .ok_or_else(|| schema("schema_version", "missing"))?
            .as_u64()
            .ok_or_else(|| schema("schema_version", "expected an unsigned integer"))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(SessionError::SchemaVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: SCHEMA_VERSION,
            });
        }
        let dataset: DatasetRef = serde_json::from_value(
            obj.get("dataset").cloned().ok_or_else(|| schema("dataset", "missing"))?,
        )
        .map_err(|e| schema("dataset", e))?;
        let config: SessionConfig = match obj.get("config") {
            Some(c) => serde_json::from_value(c.clone()).map_err(|e| schema("config", e))?,
            None => SessionConfig::default(),
        };
        let mut steps = Vec::new();
        if let Some(raw) = obj.get("steps") {
            let raw = raw.as_array().ok_or_else(|| schema("steps", "expected an array"))?;
            for (i, step) in raw.iter().enumerate() {
                let kind = step
                    .get("kind")
                    .ok_or_else(|| schema(format!("steps[{i}].kind"), "missing"))?;
                match kind.as_str() {
                    Some(k) if STEP_KINDS.contains(&k) => {}
                    _ => {
                        return Err(schema(
                            format!("steps[{i}].kind"),
                            format!("unknown step kind {kind}, expected one of {}", STEP_KINDS.join(", ")),
                        ))
                    }
                }
                steps.push(serde_json::from_value(step.clone()).map_err(|e| schema(format!("steps[{i}]"), e))?);
            }
        }
        let types = match obj.get("types") {
            Some(t) => Some(serde_json::from_value(t.clone()).map_err(|e| schema("types", e))?),
            None => None,
        };
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            dataset,
            config,
            steps,
            types,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session files always serialize")
    }

    /// Replays the steps on `dataset`. Recorded metrics, sizes and confirmed
    /// items must be reproduced unless `seed_override` is set.
    pub fn replay(&self, dataset: LabeledDataset, seed_override: Option<u64>) -> Result<Session, SessionError> {
        let hash = dataset.content_hash();
        if let Some(expected) = &self.dataset.hash {
            if *expected != hash {
                return Err(SessionError::DatasetMismatch {
                    expected: expected.clone(),
                    found: hash,
                });
            }
        }
        let config = match seed_override {
            Some(s) => self.config.clone().with_seed(s),
            None => self.config.clone(),
        };
        let verify = seed_override.is_none();
        let mut session = Session::start(dataset, &self.dataset.label_column, config)?;
        let mut records = self.steps.iter().enumerate().peekable();
        if let Some((_, first)) = records.peek() {
            if first.action == StepAction::Train {
                let (_, first) = records.next().expect("peeked");
                check(first, &session.steps[0], 0, verify)?;
                session.steps[0].timestamp = first.timestamp;
            }
        }
        for (i, record) in records {
            let before = session.steps.len();
            session
                .apply(&record.action, record.acceptance.as_ref())
                .map_err(|e| SessionError::Step {
                    index: i,
                    source: Box::new(e),
                })?;
            if session.steps.len() == before {
                // a no-op (reselecting the active projection)
                continue;
            }
            let last = session.steps.len() - 1;
            check(record, &session.steps[last], i, verify)?;
            session.steps[last].timestamp = record.timestamp;
        }
        Ok(session)
    }
}

fn check(record: &StepRecord, step: &SessionStep, index: usize, verify: bool) -> Result<(), SessionError> {
    if !verify {
        return Ok(());
    }
    let same = record.metrics_after.is_none_or(|m| m == step.metrics_after)
        && record.train_size.is_none_or(|n| n == step.train_size)
        && record.removals.as_ref().is_none_or(|r| *r == step.removals)
        && record.additions.as_ref().is_none_or(|a| *a == step.additions);
    if same {
        Ok(())
    } else {
        Err(SessionError::ReplayMismatch { step: index })
    }
}

impl Session {
    pub fn to_file(&self, path: Option<String>) -> SessionFile {
        SessionFile {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetRef {
                hash: Some(self.dataset_hash.clone()),
                label_column: self.label_column.clone(),
                path,
            },
            config: self.config.clone(),
            steps: self.steps.iter().map(StepRecord::from).collect(),
            types: Some(self.view.assignments.clone()),
        }
    }

    pub fn export_json(&self) -> String {
        self.to_file(None).to_json()
    }

    pub fn import_json(json: &str, dataset: LabeledDataset) -> Result<Session, SessionError> {
        SessionFile::parse(json)?.replay(dataset, None)
    }
}
