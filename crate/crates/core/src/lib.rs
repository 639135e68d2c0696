//! Engagement detection from first-person video motion.
//!
//! Optical flow on a coarse grid is smoothed in time, summarised per frame
//! and over temporal pyramids, scored by two random forests and turned into
//! engagement intervals. Metrics, ground-truth consensus and a synthetic
//! data generator live alongside.

pub mod descriptor;
pub mod exec;
pub mod flowgrid;
pub mod forest;
pub mod groundtruth;
pub mod interval;
pub mod metrics;
pub mod pipeline;
pub mod proposer;
pub mod stats;
pub mod synth;

pub use exec::Execution;
pub use flowgrid::{FlowField, FlowSequence};
pub use forest::{ForestModel, ForestParams};
pub use groundtruth::ConsensusTrack;
pub use interval::{Interval, IntervalSet};
pub use pipeline::{DetectionResult, EngagementModel, PipelineConfig};
