//! Certified unlearning for graph neural networks via influence functions.
//!
//! The crate covers the attributed-graph container and deletion, unlearning
//! requests with their affected node sets, SGC and two-layer GCN models, the
//! influence-function update, distance bounds and Gaussian noise calibration,
//! a re-training oracle, and evaluation metrics.

pub mod certify;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod influence;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod request;

pub use error::{Error, Result};
pub use graph::{delete, AttributedGraph, Edge, GraphBuilder, NodeSet};
pub use influence::{unlearn, InfluenceResult, Solver, UnlearnOutcome};
pub use model::{train, ModelKind, ModelSpec, TrainedModel, TrainerConfig};
pub use request::{compute_affected_sets, AffectedSets, UnlearnRequest};
