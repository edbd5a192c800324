//! Live person re-identification over raw video chunks.
//!
//! Detections are grouped into short tracklets, each tracklet contributes
//! one representative crop to a per-chunk gallery, and queries are ranked
//! against every gallery to raise alerts. The evaluator scores alerts with
//! finding rate and true validation rate across a threshold sweep.

pub mod domain;
pub mod error;
pub mod evaluator;
pub mod ingest;
pub mod pipeline;
pub mod reid;
pub mod selector;
pub mod synthworld;
pub mod tracker;

pub use domain::{BoundingBox, Chunk, Detection, Embedding, GalleryImage, Query, Tracklet};
pub use error::{Error, Result};
pub use evaluator::{BetaGrid, EvalCurve, RunSummary};
pub use pipeline::{run, Dataset, PipelineConfig, RunResult};
pub use tracker::GalleryMode;
