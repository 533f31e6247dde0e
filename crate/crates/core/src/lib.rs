//! Hybrid programs and differential dynamic logic formulas, executed
//! numerically and used as runtime shields for learning agents.
//!
//! Most types are generic over a [`Scalar`] (`f32` or `f64`) and default to
//! `f64`; the aliases below name the common instantiations.

pub mod agent;
pub mod config;
pub mod envs;
pub mod exec;
pub mod lang;
pub mod perception;
pub mod shield;
mod scalar;

pub use scalar::Scalar;

pub type StateF64 = exec::State<f64>;
pub type StateF32 = exec::State<f32>;
