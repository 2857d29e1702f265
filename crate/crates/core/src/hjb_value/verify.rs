//! Verification inequality `J(u) ≥ v(0, ζ0)` and the HJB generator residual.

use super::feedback::FeedbackPolicy;
use crate::bsde_solver::{directional_derivative, nu_direction, nu_gradient_with, observe, second_derivative, ValueModel};
use crate::control_core::{evaluate_cost, hamiltonian_at, Policy, ProblemController};
use crate::error::{Error, Result};
use crate::forward_sim::{simulate_lifted, BrownianGrid, RecordOptions};
use crate::stats::{quantile, MeanEstimate};

#[derive(Debug, Clone)]
pub struct PolicyCheck {
    pub label: String,
    pub cost: MeanEstimate,
    /// `Ĵ − v̂`.
    pub gap: f64,
    pub combined_se: f64,
    /// `Ĵ ≥ v̂ − 3 SE`, or for the feedback law `|Ĵ − v̂| ≤ 3 SE`.
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub value: MeanEstimate,
    pub policies: Vec<PolicyCheck>,
    pub feedback: PolicyCheck,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.feedback.passed && self.policies.iter().all(|p| p.passed)
    }
}

/// Evaluates each policy and the model's feedback law on the common noise
/// `grid` and compares with `value` (normally `v̂(0, ζ0)`).
pub fn verify_value_inequality<M: ValueModel + ?Sized>(
    model: &M,
    value: MeanEstimate,
    policies: &[&dyn Policy],
    grid: &BrownianGrid,
    zeta0: &[f64],
) -> Result<VerificationReport> {
    let problem = model.problem();
    let run = |policy: &dyn Policy| -> Result<MeanEstimate> {
        let ctl = ProblemController::new(problem, policy);
        let ens = simulate_lifted(&problem.coeffs, model.lift(), &ctl, grid, zeta0, &RecordOptions::default())?;
        Ok(evaluate_cost(problem, &ens))
    };
    let check = |label: String, cost: MeanEstimate, two_sided: bool| {
        let gap = cost.mean - value.mean;
        let combined_se = cost.combined_se(&value);
        let passed = if two_sided { gap.abs() <= 3.0 * combined_se } else { gap >= -3.0 * combined_se };
        PolicyCheck { label, cost, gap, combined_se, passed }
    };
    let mut rows = Vec::with_capacity(policies.len());
    for p in policies {
        rows.push(check(p.label(), run(*p)?, false));
    }
    let fb = FeedbackPolicy::new(model);
    let feedback = check(fb.label(), run(&fb)?, true);
    Ok(VerificationReport { value, policies: rows, feedback })
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub median_abs: f64,
    pub p90_abs: f64,
    pub max_abs: f64,
}

/// `[w_{k+1}(EZ) − w_k(Z)]/Δt + β ∂_{Eν} w_{k+1}(EZ) + ½σ² ∂²_{Eν} w_{k+1}(EZ)
/// + H(t_k, Z, ∂_{Eν} w_{k+1}(EZ) σ)` at probe states `(k, Z)` with `k < N`.
///
/// The noise enters only along `νσ`, so the trace term is one second
/// directional derivative.
pub fn generator_residual<M: ValueModel + ?Sized>(model: &M, probes: &[(usize, Vec<f64>)]) -> Result<ResidualReport> {
    let problem = model.problem();
    let n = model.n_steps();
    let dt = model.dt();
    let mut residuals = Vec::with_capacity(probes.len());
    for (k, z) in probes {
        let k = *k;
        if k >= n {
            return Err(Error::Invalid(format!("probe step {k} must be below {n}")));
        }
        let dir = nu_direction(model, k);
        let t = model.time(k);
        let obs = observe(model, k, z)?;
        let obs_next = obs.advanced();
        let x = obs.x;
        let beta = (problem.coeffs.beta)(t, x);
        let sigma = (problem.coeffs.sigma)(t, x);
        let coupling = nu_gradient_with(model, k, &obs, &dir) * sigma;
        let h = hamiltonian_at(problem, t, x, coupling)?.value;
        let r = (model.value_obs(k + 1, &obs_next) - model.value_obs(k, &obs)) / dt
            + beta * directional_derivative(model, k + 1, &obs_next, &dir)
            + 0.5 * sigma * sigma * second_derivative(model, k + 1, &obs_next, &dir)
            + h;
        residuals.push(r);
    }
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    Ok(ResidualReport {
        median_abs: quantile(&mut abs, 0.5),
        p90_abs: quantile(&mut abs, 0.9),
        max_abs: abs.last().copied().unwrap_or(f64::NAN),
        residuals,
    })
}
