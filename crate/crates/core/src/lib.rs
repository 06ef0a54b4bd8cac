//! Simulation and post-processing stack for three-state time-bin QKD with
//! one decoy intensity.
//!
//! The closed-form parts are generic over [`Real`] (`f32`, `f64`); the
//! aliases below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod cascade;
pub mod error;
pub mod experiment;
pub mod physics;
pub mod pipeline;
pub mod presets;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod security;
pub mod sifting;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Params = protocol::ProtocolParams<f64>;
pub type Models = physics::PhysicsModels<f64>;
pub type Params32 = protocol::ProtocolParams<f32>;
pub type Models32 = physics::PhysicsModels<f32>;
pub type Bounds = security::DecoyBounds<f64>;
pub type CountBounds = security::FiniteCountBounds<f64>;
