//! Tomographic SAR inversion of forest vertical reflectivity profiles.
//!
//! The crate covers the whole chain on synthetic data: two-Gaussian profile
//! simulation with speckle, classical beamforming and Capon estimators, a
//! wavelet-domain compressed-sensing inversion solved with monotone FISTA,
//! and a small encoder-decoder network trained from scratch to turn
//! beamforming profiles into sharper reflectivity profiles.

pub mod cli;
pub mod config;
pub mod csinvert;
pub mod error;
pub mod evalharness;
pub mod geometry;
pub mod kvtext;
pub mod linalg;
pub mod neuralnet;
pub mod simulator;
pub mod spectral;
pub mod wavelet;

pub use error::{Result, TomoError};
