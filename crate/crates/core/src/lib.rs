//! Facial age estimation: landmark-based face normalization, LBP and BSIF
//! block-histogram features, kernel ridge and support vector regression, and
//! MAE / cumulative-score evaluation.

pub mod descriptors;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod image;
pub mod matrix;
pub mod regress;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use features::{DescriptorSet, FeatureExtractor, FeatureLayout};
pub use geometry::{FaceNormalizer, LandmarkScheme, LandmarkSet, RoiMode};
pub use image::GrayImage;
pub use matrix::Matrix;
pub use regress::{Algorithm, HyperGrid, Model};
