use super::basis::EnsembleView;
use super::lsmc::BsdeSolution;
use super::value::{nu_derivative_literal, ValueModel};
use crate::error::Result;
use crate::forward_sim::PathEnsemble;
use crate::stats::quantile;

#[derive(Debug, Clone)]
pub struct IdentificationSample {
    pub step: usize,
    pub path: usize,
    /// Regressed `q̃_k(Z_k)`.
    pub q_regressed: f64,
    /// `∇_z v̂(t_k, Z_k) ν σ(t_k, X_k)`.
    pub q_gradient: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct IdentificationReport {
    pub median_rel_error: f64,
    pub p90_rel_error: f64,
    pub samples: Vec<IdentificationSample>,
}

/// Compares the regressed costate with the finite-difference gradient of
/// the value along `νσ` on interior steps `k ∈ [0.1N, 0.9N]`, using at most
/// `max_paths` paths per step.
pub fn identification_check(sol: &BsdeSolution, ens: &PathEnsemble, max_paths: usize) -> Result<IdentificationReport> {
    let view = EnsembleView::new(ens, &sol.lift, &sol.basis)?;
    let n = sol.n_steps;
    let lo = (0.1 * n as f64).ceil() as usize;
    let hi = ((0.9 * n as f64).floor() as usize).min(n - 1);
    let paths: Vec<usize> = ens.valid_paths().into_iter().take(max_paths).collect();
    let mut samples = Vec::new();
    for k in lo..=hi {
        let t = sol.time(k);
        for &p in &paths {
            let obs = view.observe(p, k);
            let q_regressed = sol.q_obs(k, &obs);
            let q_gradient = nu_derivative_literal(sol, k, &obs) * (sol.problem.coeffs.sigma)(t, obs.x);
            let diff = (q_regressed - q_gradient).abs();
            let rel_error = if diff == 0.0 { 0.0 } else { diff / q_gradient.abs().max(1e-12) };
            samples.push(IdentificationSample { step: k, path: p, q_regressed, q_gradient, rel_error });
        }
    }
    let mut errs: Vec<f64> = samples.iter().map(|s| s.rel_error).collect();
    Ok(IdentificationReport {
        median_rel_error: quantile(&mut errs, 0.5),
        p90_rel_error: quantile(&mut errs, 0.9),
        samples,
    })
}
