//! Backward equation of the lifted FBSDE by regression on a forward ensemble.

mod basis;
mod identification;
mod lsmc;
mod value;

pub use basis::{fit, Basis, EnsembleView, LinearFit, Observation};
pub use identification::{identification_check, IdentificationReport, IdentificationSample};
pub use lsmc::{solve_lsmc, BsdeSolution, StepDiagnostics, EXPLOSION_BOUND};
pub use value::{
    directional_derivative, nu_derivative_literal, nu_direction, nu_gradient, nu_gradient_obs,
    nu_gradient_with, observe, second_derivative, value_at, ValueModel,
    GRADIENT_STEP,
};

pub(crate) use lsmc::{check_ensemble, design};
