//! Patch-based classification pipeline for H&E-stained breast histology
//! images: Reinhard stain normalization, overlapping patch tiling, rigid
//! augmentation, a small residual CNN trained with Nesterov SGD,
//! majority-vote image labels and one-vs-rest ROC evaluation.

pub mod aggregation;
pub mod augmentation;
pub mod color_norm;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod model;
pub mod pipeline;
pub mod tiling;

pub use error::{Error, Result};
