//! Urban expansion and farmland loss simulation with a cellular automaton
//! whose transition rules are mined by a random forest.
//!
//! The pipeline runs: regionalization of administrative units, stratified
//! sampling of land conversions, forest training, CA simulation under a
//! Markov-chain demand, and validation by figure of merit. Numeric code is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! common instantiations.

pub mod ca;
pub mod config;
pub mod error;
pub mod forest;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod region;
pub mod render;
pub mod rng;
pub mod sample;
pub mod scalar;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
pub use raster::{ConversionType, GridGeometry, LandClass, Raster};
pub use scalar::Scalar;

pub type Raster64 = raster::Raster<f64>;
pub type Raster32 = raster::Raster<f32>;
pub type ClassRaster = raster::Raster<LandClass>;
pub type Forest64 = forest::Forest<f64>;
pub type Forest32 = forest::Forest<f32>;
pub type TrainingSet64 = sample::TrainingSet<f64>;
pub type TrainingSet32 = sample::TrainingSet<f32>;
pub type SimulationConfig64 = ca::SimulationConfig<f64>;
pub type NormalizationStats64 = raster::NormalizationStats<f64>;
pub type MarkovDemand64 = ca::MarkovDemand<f64>;
pub type IndexTable64 = region::IndexTable<f64>;
