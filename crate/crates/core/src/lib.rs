//! Super-resolution of sparse, wide-dynamic-range emission rasters.
//!
//! The deployment pipeline is `T⁻¹(N(T(lr)))`: an invertible transform `T`
//! maps physical emissions into `[0, 1]`, a convolutional network `N`
//! enlarges the map by an integer factor, and `T⁻¹` maps back to physical
//! units. Transforms and network architectures are strategies looked up by
//! name (see [`transforms::preprocessors`] and [`neuralnet::architectures`]).

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod neuralnet;
pub mod registry;
pub mod resample;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
