//! Feynman–Kac steering for discrete-time reverse diffusion samplers.
//!
//! The engine is generic over the scalar type (`f32` or `f64`) and over the
//! [`backend::Backend`] that supplies noise, reverse kernels and denoised
//! proxies. Three toy backends with exactly known laws are included, along
//! with closed-form oracles for the tilted terminal law.

pub mod backend;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod potentials;
pub mod reporting;
pub mod resampling;
pub mod rewards;
pub mod rng;
pub mod scalar;
pub mod sweep;

pub use error::{Error, Result, WorkerFailure};
pub use scalar::Real;

pub type DiscreteBackend = backend::DiscreteChainBackend<f64>;
pub type GaussianBackend = backend::GaussianChainBackend<f64>;
pub type ChainBackend = backend::ChainMolBackend<f64>;
pub type Potential = potentials::PotentialSpec<f64>;
pub type Params = engine::SteeringParams<f64>;
pub type Log = engine::TrajectoryLog<f64>;
pub type Weights = resampling::WeightVector<f64>;
pub type Pipeline<P> = rewards::RewardPipeline<f64, P>;

pub type DiscreteBackend32 = backend::DiscreteChainBackend<f32>;
pub type GaussianBackend32 = backend::GaussianChainBackend<f32>;
pub type ChainBackend32 = backend::ChainMolBackend<f32>;
