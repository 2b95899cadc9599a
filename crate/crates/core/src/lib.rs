//! Separable physics-informed neural solvers for 3D linear elastostatics.

pub mod autodiff;
pub mod domain;
pub mod error;
pub mod loss;
pub mod mechanics;
pub mod nn;
pub mod problems;
pub mod run;
pub mod train;

pub use error::{Error, Result};
