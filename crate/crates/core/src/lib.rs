//! Lossy compression toolkit for scientific floating-point fields.
//!
//! The crate bundles two codecs (an error-bounded predictive coder and a
//! fixed-rate block-transform coder), preprocessing for 1-D streams and
//! pointwise-relative bounds, quality metrics used in cosmology work
//! (matter power spectra, friends-of-friends halos), synthetic data
//! generation, a staged benchmark harness, and a sweep workflow that picks
//! the best passing configuration per field.

pub mod analysis;
pub mod bench;
pub mod codec;
pub mod datamodel;
pub mod error;
pub mod preprocess;
pub mod report;
pub mod synth;
pub mod workflow;

pub(crate) mod crc32;
pub(crate) mod fft;

pub use error::{Error, Result};
