//! Markovian lifts of controlled Volterra SDEs, backward solvers for the
//! lifted control problem, and feedback synthesis.

pub mod error;
pub mod bsde_solver;
pub mod control_core;
pub mod forward_sim;
pub mod hjb_value;
pub mod kernel_lift;
pub mod persist;
pub mod stats;

pub use error::{Error, Result};
