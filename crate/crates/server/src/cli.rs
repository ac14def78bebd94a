//! Headless replay of a session script.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use curate_core::dataset::{load_csv, DatasetError};
use curate_core::session::{sankey, SankeyFlow, Session, SessionError, SessionFile};

use crate::error::session_code;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("the script names no dataset path; pass --data")]
    MissingDataset,
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl RunError {
    pub fn code(&self) -> &'static str {
        match self {
            RunError::Io { .. } => "io",
            RunError::Dataset(_) => "invalid_dataset",
            RunError::Session(e) => session_code(e).1,
            RunError::MissingDataset => "missing_dataset",
            RunError::Output { .. } => "output",
        }
    }

    /// Index of the script step that failed, if any.
    pub fn step(&self) -> Option<usize> {
        match self {
            RunError::Session(SessionError::Step { index, .. }) => Some(*index),
            RunError::Session(SessionError::ReplayMismatch { step }) => Some(*step),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub script: PathBuf,
    pub out: PathBuf,
    pub seed_override: Option<u64>,
    /// Dataset CSV; defaults to the script's `dataset.path`, resolved
    /// against the script's directory.
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    pub kind: String,
    pub train_size: usize,
    pub balanced_accuracy_train: f64,
    pub f1_macro_train: f64,
    pub balanced_accuracy_test: f64,
    pub f1_macro_test: f64,
    pub delta_balanced_accuracy: f64,
    pub delta_f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SankeyReport {
    pub original_train_count: usize,
    pub train_size: usize,
    pub us_total: usize,
    pub os_total: usize,
    pub flows: Vec<SankeyFlow>,
}

pub fn metrics_rows(session: &Session) -> Vec<MetricsRow> {
    session
        .steps()
        .iter()
        .map(|s| {
            let (dba, df1) = s.metrics_before.map_or((0.0, 0.0), |b| {
                (
                    s.metrics_after.test.balanced_accuracy - b.test.balanced_accuracy,
                    s.metrics_after.test.f1_macro - b.test.f1_macro,
                )
            });
            MetricsRow {
                step: s.index,
                kind: s.action.kind().to_string(),
                train_size: s.train_size,
                balanced_accuracy_train: s.metrics_after.train.balanced_accuracy,
                f1_macro_train: s.metrics_after.train.f1_macro,
                balanced_accuracy_test: s.metrics_after.test.balanced_accuracy,
                f1_macro_test: s.metrics_after.test.f1_macro,
                delta_balanced_accuracy: dba,
                delta_f1: df1,
            }
        })
        .collect()
}

pub fn sankey_report(session: &Session) -> SankeyReport {
    let flows: Vec<SankeyFlow> = session.steps().iter().flat_map(|s| s.sankey.iter().copied()).collect();
    let (us_total, os_total) = sankey::bin_totals(&flows);
    SankeyReport {
        original_train_count: session.original_train_count(),
        train_size: session.view().len(),
        us_total,
        os_total,
        flows,
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), RunError> {
    let err = |e: csv::Error| RunError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(io(path))
}

/// Replays the script and writes `session.json`, `metrics.csv` and
/// `sankey.json` into `out`.
pub fn run(opts: &RunOptions) -> Result<Session, RunError> {
    let text = fs::read_to_string(&opts.script).map_err(io(&opts.script))?;
    let file = SessionFile::parse(&text)?;
    let data = match (&opts.data, &file.dataset.path) {
        (Some(d), _) => d.clone(),
        (None, Some(p)) => {
            let base = opts.script.parent().unwrap_or(Path::new("."));
            base.join(p)
        }
        (None, None) => return Err(RunError::MissingDataset),
    };
    let dataset = load_csv(&data, &file.dataset.label_column)?;
    let session = file.replay(dataset, opts.seed_override)?;

    fs::create_dir_all(&opts.out).map_err(io(&opts.out))?;
    let session_path = opts.out.join("session.json");
    fs::write(&session_path, session.to_file(file.dataset.path.clone()).to_json()).map_err(io(&session_path))?;
    write_metrics_csv(&opts.out.join("metrics.csv"), &metrics_rows(&session))?;
    let sankey_path = opts.out.join("sankey.json");
    let sankey = serde_json::to_string_pretty(&sankey_report(&session)).expect("sankey report serializes");
    fs::write(&sankey_path, sankey).map_err(io(&sankey_path))?;
    Ok(session)
}
