//! Detection of small, spectrally diverse targets in active-sonar echo
//! trains.
//!
//! Matched-filter detections from a block of pings form a point cloud in
//! range and ping time. The cloud is encoded as an affinity graph whose
//! edges combine spectral similarity (normalized information distance),
//! range and time proximity, and a maximum-speed gate. Spectral clustering
//! splits the graph into blobs, and each blob is labelled target or clutter
//! from its connectivity and the median spectral entropy of its members.
//!
//! The [`simulate`] and [`evaluate`] modules provide seeded synthetic
//! scenarios and the detection/classification metrics used to study the
//! detector.

pub mod classify;
pub mod cluster;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod graphbuild;
pub mod infodist;
pub mod io;
pub mod pipeline;
pub mod signalproc;
pub mod simulate;

pub use classify::{ClusterReport, Label, Thresholds};
pub use cluster::{Clustering, EigenEmbedding};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use graphbuild::{AffinityGraph, AffinityParams};
pub use pipeline::{detect_block, BlockResult, DetectorConfig};
pub use signalproc::{ChirpSpec, EchoPoint, PingRecord};
pub use simulate::{ClutterBank, Scenario, ScenarioConfig};
