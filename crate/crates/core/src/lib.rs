//! Training-free, mask-guided wildfire image synthesis with paired ground truth.
//!
//! The crate builds augmented fire masks ([`maskgen`], textured with
//! [`noisefield`]), fuses them into style images ([`composer`]), sends the
//! composites to an image-to-image [`backend`], writes the results with YOLO
//! labels ([`annotate`]) and scores them ([`metrics`]). [`pipeline`] ties the
//! steps together behind a TOML experiment configuration.

pub mod annotate;
pub mod backend;
pub mod composer;
pub mod maskgen;
pub mod metrics;
pub mod noisefield;
pub mod pipeline;

pub use pipeline::{ExperimentConfig, PipelineError};
