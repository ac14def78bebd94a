//! Interactive curation engine for imbalanced tabular classification.
//!
//! Training instances are typed by local hardness (safe, borderline, rare,
//! outlier) from the class agreement of their nearest neighbours. Under- and
//! oversampling algorithms are then run against a chosen subset of types and
//! classes, and every confirmed step is tracked together with its effect on a
//! boosted-tree classifier.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: CSV ingestion, stratified split, min-max statistics and
//!   immutable dataset versions.
//! - [`neighbors`]: exact euclidean k-nearest-neighbour index.
//! - [`typing`]: hardness labels and their per-class distribution.
//! - [`projection`]: 2-D neighbour embeddings scored by Shepard correlation.
//! - [`sampling`]: OSS, NCR, SMOTE and ADASYN restricted to a scope.
//! - [`model`]: gradient-boosted trees, random search, metrics.
//! - [`session`]: the proposal/confirmation loop and its history.

pub mod dataset;
pub mod model;
pub mod neighbors;
pub mod projection;
pub mod sampling;
pub mod session;
pub mod typing;

pub use dataset::{InstanceId, LabeledDataset, NormalizationStats, SplitAssignment};
pub use neighbors::NeighborIndex;
pub use session::{Session, SessionConfig};
pub use typing::{BandRule, InstanceType, TypeAssignment};
