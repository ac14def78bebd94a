//! JSON-over-HTTP access to curation sessions and a headless replay runner.
//!
//! Training runs as a job: `POST /sessions/{id}/confirm` answers with a job
//! id that is polled at `GET /jobs/{id}`. Reads are served from the last
//! completed session state and never wait for a running job.

pub mod cli;
pub mod error;
pub mod routes;
pub mod state;

pub use error::ApiError;
pub use routes::router;
pub use state::AppState;
