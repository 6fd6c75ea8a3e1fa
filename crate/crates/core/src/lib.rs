//! Image-based produce grading.
//!
//! The crate turns produce images into normalized RGB spectral patterns,
//! trains feed-forward classifiers on them (six-stage tomato maturity and
//! binary egg accept/reject), and searches network structures with an
//! artificial-chemistry reactor.
//!
//! Pipeline overview:
//!
//! 1. [`imaging`] decodes an image, runs Canny edge detection and separates
//!    the single produce item from its background.
//! 2. [`features`] tallies the foreground into a 768-value
//!    [`SpectralPattern`](features::SpectralPattern).
//! 3. [`neuralnet`] trains and runs the classifier.
//! 4. [`achem`] searches over hidden-layer structure, jump connections,
//!    activation, learning rate and momentum.
//! 5. [`evaluation`] computes the metric battery.

pub mod achem;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fsutil;
pub mod imaging;
pub mod label;
pub mod neuralnet;
pub mod seed;

pub use error::{Error, Result};
pub use label::{EggGrade, Label, Task, TomatoStage};
