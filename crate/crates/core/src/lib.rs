//! Predicting which nodes of a heterogeneous information network will be
//! added to a per-category exclusion list.
//!
//! The pipeline runs left to right through the modules:
//!
//! * [`store`]: ingest typed edge lists, resolve duplicate entities, drop rare
//!   or blacklisted relation types and collapse repeated temporal edges.
//! * [`core_graph`]: the undirected simple graph over the prediction universe.
//! * [`labels`]: per-category lists built from dated news events and the
//!   temporal source/target/candidate splits.
//! * [`features`]: binary edge features (core relations, meta-paths, or
//!   relation types per path segment).
//! * [`propagation`]: label propagation whose edge weights come from a small
//!   MLP, trained by gradient descent through the unrolled Jacobi solver.
//! * [`metrics`]: exact AUC-ROC and AUC-PR with tie blocks.
//! * [`event_study`]: windowed log returns and the two-sample KS test.
//! * [`interpret`]: binary NMF of the feature matrix and per-basis partial
//!   dependence.
//! * [`synthetic`]: planted diffusion networks and the end-to-end benchmark.

pub mod core_graph;
pub mod error;
pub mod event_study;
pub mod features;
pub mod interpret;
pub mod labels;
pub mod metrics;
pub mod propagation;
pub mod stats;
pub mod store;
pub mod synthetic;
pub mod tsv;

pub use crate::core_graph::CoreGraph;
pub use crate::error::{Error, Result};
pub use crate::features::{FeatureMatrix, FeatureScheme};
pub use crate::labels::{CategoryList, NewsEvent, SplitSpec};
pub use crate::propagation::{EdgeWeightModel, TrainConfig};
pub use crate::store::HinStore;
