//! Euclidean k-center, ruling sets and dominating sets on a simulated
//! massively parallel runtime that meters rounds and local memory.
//!
//! Every algorithm is generic over the scalar type; the `*64` and `*32`
//! aliases below fix it.

pub mod constants;
pub mod error;
pub mod geohash;
pub mod geometry;
pub mod highdim_rs;
pub mod kcenter;
pub mod lowdim_mds;
pub mod lowdim_rs;
pub mod luby_graphs;
pub mod mpc;
pub mod oracles;
pub mod scalar;
mod setcover;
mod spatial;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point64 = geometry::Point<f64>;
pub type Point32 = geometry::Point<f32>;
pub type Dataset64 = geometry::Dataset<f64>;
pub type Dataset32 = geometry::Dataset<f32>;
pub type KCenterSolution64 = kcenter::KCenterSolution<f64>;
pub type KCenterSolution32 = kcenter::KCenterSolution<f32>;
pub type RulingSetResult64 = lowdim_rs::RulingSetResult<f64>;
pub type DominatingSetResult64 = lowdim_mds::DominatingSetResult<f64>;
