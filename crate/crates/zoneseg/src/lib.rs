//! Volumetric U-net segmentation engine and experiment harness: a minimal
//! reverse-mode autodiff core, two 7-level U-net variants (anisotropic and
//! isotropic), a bit-exact volume container with synthetic phantoms,
//! joint image/label augmentation, a cross-validation training harness and
//! feature-map introspection.

pub mod augment;
pub mod engine;
pub mod error;
pub mod inspect;
pub mod manifest;
pub mod model;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
