//! Batch pipeline behind the `grader` binary: synthesize a corpus,
//! preprocess images into spectral features, train or search for a
//! classifier, grade new items and report metrics.

pub mod commands;
pub mod config;

pub use config::PipelineConfig;
