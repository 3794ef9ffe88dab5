//! Most probable paths and flows for Kunita-type stochastic flows.
//!
//! Given a drift `u` and noise fields `σ_j` on a domain in `R^d`, the crate
//! builds the Riemannian geometry induced by the noise, evaluates the
//! Onsager-Machlup functional, integrates and shoots the most probable path
//! equation, simulates the flow SDE, and computes expected-energy optimal
//! drifts on a periodic 1D grid.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

pub mod epdiff1d;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod mpp;
pub mod om;
pub mod oracles;
pub mod scalar;
pub mod sde;
pub mod taylor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Path64 = om::Path<f64>;
pub type VectorField64 = fields::VectorFieldSpec<f64>;
pub type NoiseModel64 = fields::NoiseModel<f64>;
pub type Jet64 = fields::Jet<f64>;
pub type GeometryJet64 = geometry::GeometryJet<f64>;
pub type GridState64 = epdiff1d::GridState<f64>;
pub type SdeConfig64 = sde::SdeConfig<f64>;
pub type ShootingProblem64 = mpp::ShootingProblem<f64>;
