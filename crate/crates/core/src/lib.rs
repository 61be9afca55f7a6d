//! Latent-code calibration for generated SAR images: simulate targets,
//! measure image properties against a reference, fit code-to-property
//! models and invert them to find codes that produce a desired property.

pub mod error;
pub mod estimate;
pub mod fit;
pub mod fixtures;
pub mod image;
pub mod ncc;
pub mod par;
pub mod pipeline;
pub mod sar;
pub mod solve;
pub mod transform;

pub use error::{Error, Result};
pub use estimate::{Nuisance, PropertyEstimator, PropertyKind, PropertyMeasurement, SearchGrid};
pub use fit::{CalibrationSample, Family, FitOptions, PropertyModel, TwoPropertyModel};
pub use image::Image;
pub use par::Execution;
