//! Model-agnostic image explanations and classifier evaluation.
//!
//! An image is partitioned into superpixels, random subsets of superpixels
//! are hidden, a black-box classifier scores every perturbed copy, and a
//! sparse proximity-weighted linear surrogate attributes the target-class
//! probability to individual superpixels. The same classifier handles feed a
//! metrics suite (accuracy, macro precision/recall/F1, MCC, one-vs-rest
//! ROC-AUC) and the stratified dataset tooling used to build test splits.

pub mod bridge;
pub mod dataset;
pub mod error;
pub mod image;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod surrogate;

pub use crate::error::{BridgeError, Error, Result};
pub use crate::image::{load_image, resize, Image};
pub use crate::segmentation::{segment_adjacency, slic_segment, Segmentation, SlicParams};
