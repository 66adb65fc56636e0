//! Transmit covariance design for multiuser MIMO broadcast channels with
//! simultaneous wireless information and power transfer.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix double precision, which is what the experiments use.

pub mod baselines;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod solver;
pub mod surrogate;

pub use scalar::Real;

pub type Scenario64 = model::Scenario<f64>;
pub type Scenario32 = model::Scenario<f32>;
pub type Covariances64 = model::CovarianceTuple<f64>;
pub type Covariances32 = model::CovarianceTuple<f32>;
pub type ChannelSet64 = model::ChannelSet<f64>;
pub type CMatrix64 = linalg::CMatrix<f64>;
