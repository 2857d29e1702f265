//! Feedback law `u = Γ₀(t, Z, ∇v(t, Z)νσ)` and the closed loop.

use crate::bsde_solver::{nu_gradient_obs, observe, ValueModel};
use crate::control_core::{hamiltonian_at, Policy, ProblemController};
use crate::error::Result;
use crate::forward_sim::{simulate_lifted, BrownianGrid, PathEnsemble, RecordOptions};

/// Control selected by the feedback law at step `k` and lifted state `z`.
pub fn feedback_control<M: ValueModel + ?Sized>(model: &M, k: usize, z: &[f64]) -> Result<f64> {
    let problem = model.problem();
    let obs = observe(model, k, z)?;
    let t = model.time(k);
    let coupling = nu_gradient_obs(model, k, &obs) * (problem.coeffs.sigma)(t, obs.x);
    Ok(hamiltonian_at(problem, t, obs.x, coupling)?.selected)
}

/// The feedback law as a [`Policy`]; needs the lifted state.
pub struct FeedbackPolicy<'a, M: ValueModel + ?Sized> {
    pub model: &'a M,
}

impl<'a, M: ValueModel + ?Sized> FeedbackPolicy<'a, M> {
    pub fn new(model: &'a M) -> Self {
        Self { model }
    }
}

impl<M: ValueModel + ?Sized> Policy for FeedbackPolicy<'_, M> {
    fn decide(&self, step: usize, _t: f64, _x: f64, z: Option<&[f64]>) -> f64 {
        // NaN makes the simulator flag the path instead of silently continuing.
        z.and_then(|z| feedback_control(self.model, step, z).ok()).unwrap_or(f64::NAN)
    }

    fn needs_state(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        "feedback".into()
    }
}

/// Simulates the lifted equation with `u_k = Γ₀(t_k, Z_k, ∇v νσ)`.
pub fn closed_loop_simulate<M: ValueModel + ?Sized>(
    model: &M,
    grid: &BrownianGrid,
    zeta0: &[f64],
    record: &RecordOptions,
) -> Result<PathEnsemble> {
    let policy = FeedbackPolicy::new(model);
    let ctl = ProblemController::new(model.problem(), &policy);
    simulate_lifted(&model.problem().coeffs, model.lift(), &ctl, grid, zeta0, record)
}
