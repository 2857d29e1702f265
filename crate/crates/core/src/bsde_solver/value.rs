//! Shared interface of fitted value functions and their derivatives along `ν`.

use super::basis::{Basis, Observation};
use crate::control_core::ControlProblem;
use crate::error::Result;
use crate::kernel_lift::DiscreteLift;

/// Relative step of the directional finite differences.
pub const GRADIENT_STEP: f64 = 1e-4;

/// A value function `v(t_k, ·)` on a time grid, represented through basis
/// observations.
pub trait ValueModel: Sync {
    fn problem(&self) -> &ControlProblem;
    fn lift(&self) -> &DiscreteLift;
    fn basis(&self) -> &Basis;
    fn n_steps(&self) -> usize;
    fn t0(&self) -> f64;

    /// `v(t_k, Z)`; at `k = N` this is exactly `G(⟨g,Z⟩)`.
    fn value_obs(&self, k: usize, obs: &Observation) -> f64;

    fn dt(&self) -> f64 {
        self.lift().dt()
    }

    fn time(&self, k: usize) -> f64 {
        self.t0() + k as f64 * self.dt()
    }
}

pub fn observe<M: ValueModel + ?Sized>(model: &M, k: usize, z: &[f64]) -> Result<Observation> {
    Observation::of_state(model.lift(), model.basis(), k, model.n_steps(), z)
}

pub fn value_at<M: ValueModel + ?Sized>(model: &M, k: usize, z: &[f64]) -> Result<f64> {
    Ok(model.value_obs(k, &observe(model, k, z)?))
}

fn fd_step(obs: &Observation) -> f64 {
    GRADIENT_STEP * (1.0 + obs.norm)
}

/// Central difference of `v(t_k, ·)` along the direction with functionals `dir`.
pub fn directional_derivative<M: ValueModel + ?Sized>(model: &M, k: usize, obs: &Observation, dir: &Observation) -> f64 {
    let h = fd_step(obs);
    (model.value_obs(k, &obs.shifted(dir, h)) - model.value_obs(k, &obs.shifted(dir, -h))) / (2.0 * h)
}

/// Second central difference along `dir`.
pub fn second_derivative<M: ValueModel + ?Sized>(model: &M, k: usize, obs: &Observation, dir: &Observation) -> f64 {
    let h = fd_step(obs);
    (model.value_obs(k, &obs.shifted(dir, h)) - 2.0 * model.value_obs(k, obs) + model.value_obs(k, &obs.shifted(dir, -h)))
        / (h * h)
}

/// Functionals of `E ν` at step `k + 1`.
pub fn nu_direction<M: ValueModel + ?Sized>(model: &M, k: usize) -> Observation {
    model.basis().direction(model.lift(), k + 1, model.n_steps(), &stepped_nu(model.lift()))
}

/// `∇_z v(t_k, Z) ν`, evaluated as `∇_z v(t_{k+1}, E Z) E ν`.
///
/// The two agree to `O(Δt)`. The transported form is used because `E ν` is
/// the direction the noise of step `k` moves the state along, so the fit at
/// `k + 1` always resolves it, while the cloud at step `k` may not span `ν`.
/// `dir` is [`nu_direction`] at `k`.
pub fn nu_gradient_with<M: ValueModel + ?Sized>(model: &M, k: usize, obs: &Observation, dir: &Observation) -> f64 {
    directional_derivative(model, k + 1, &obs.advanced(), dir)
}

pub fn nu_gradient_obs<M: ValueModel + ?Sized>(model: &M, k: usize, obs: &Observation) -> f64 {
    nu_gradient_with(model, k, obs, &nu_direction(model, k))
}

pub fn nu_gradient<M: ValueModel + ?Sized>(model: &M, k: usize, z: &[f64]) -> Result<f64> {
    Ok(nu_gradient_obs(model, k, &observe(model, k, z)?))
}

/// Central difference of `v(t_k, ·)` along `ν` itself.
pub fn nu_derivative_literal<M: ValueModel + ?Sized>(model: &M, k: usize, obs: &Observation) -> f64 {
    let dir = model.basis().direction(model.lift(), k, model.n_steps(), model.lift().nu());
    directional_derivative(model, k, obs, &dir)
}

/// `E ν`.
pub(crate) fn stepped_nu(lift: &DiscreteLift) -> Vec<f64> {
    let mut v = lift.nu().to_vec();
    lift.step_in_place(&mut v);
    v
}
