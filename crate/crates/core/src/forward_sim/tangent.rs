//! Derivatives of the lifted flow along a frozen noise path.

use super::coefficients::{central_diff, Controller, VolterraCoefficients};
use super::simulate::{inject, simulate_path};
use crate::error::{Error, Result};
use crate::kernel_lift::DiscreteLift;

/// Noise bump used by [`malliavin_bump_check`].
pub const MALLIAVIN_BUMP: f64 = 1e-5;

/// Linearization of the lifted scheme around `states` (as returned by
/// [`simulate_path`] starting at step `start`), with controls frozen:
///
/// `H_{k+1} = E(H_k + ν[∂ₓβ + ∂ₓ(σR)]⟨g,H_k⟩Δt + ν ∂ₓσ ⟨g,H_k⟩ ΔW_k)`.
///
/// Returns `H_start..=H_end` with `H_start = h`.
#[allow(clippy::too_many_arguments)]
pub fn tangent_along(
    coeffs: &VolterraCoefficients,
    lift: &DiscreteLift,
    controller: &dyn Controller,
    t0: f64,
    increments: &[f64],
    states: &[Vec<f64>],
    controls: &[f64],
    start: usize,
    h: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if h.len() != lift.dim() {
        return Err(Error::Dimension { expected: lift.dim(), got: h.len() });
    }
    let dt = lift.dt();
    let mut out = Vec::with_capacity(states.len());
    let mut hk = h.to_vec();
    for (offset, (z, &u)) in states.iter().zip(controls).enumerate() {
        let k = start + offset;
        let t = t0 + k as f64 * dt;
        let x = lift.pair_unchecked(z);
        let hx = lift.pair_unchecked(&hk);
        let d_beta = coeffs.d_beta(t, x);
        let d_sigma = coeffs.d_sigma(t, x);
        let d_sigma_r = central_diff(|y| (coeffs.sigma)(t, y) * controller.drift(t, y, u), x);
        let amount = (d_beta + d_sigma_r) * hx * dt + d_sigma * hx * increments[k];
        if !amount.is_finite() {
            return Err(Error::NonFinite(format!("tangent derivative probe at step {k}")));
        }
        out.push(hk.clone());
        inject(lift, &mut hk, amount);
        lift.step_in_place(&mut hk);
    }
    out.push(hk);
    Ok(out)
}

/// Tangent process `∇_z Z h` from step 0 along one noise path.
pub fn tangent_process(
    coeffs: &VolterraCoefficients,
    lift: &DiscreteLift,
    controller: &dyn Controller,
    t0: f64,
    increments: &[f64],
    zeta0: &[f64],
    h: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = increments.len();
    let (states, controls) = simulate_path(coeffs, lift, controller, t0, increments, zeta0, 0, n)?;
    tangent_along(coeffs, lift, controller, t0, increments, &states[..n], &controls, 0, h)
}

#[derive(Debug, Clone)]
pub struct MalliavinReport {
    pub bump_derivative: Vec<f64>,
    pub tangent_prediction: Vec<f64>,
    pub rel_error: f64,
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Compares `∂Z_τ/∂(ΔW_s)` obtained by bumping one increment with the
/// tangent flow started right after the bump with `E ν σ(t_s, X_s)`.
///
/// Bumping `ΔW_s` by `ε` moves `Z_{s+1}` by exactly `ε E ν σ_s`, so this is
/// the discrete form of `D_s Z_τ = ∇_z Z(τ, s, Z_s) ν σ_s`.
#[allow(clippy::too_many_arguments)]
pub fn malliavin_bump_check(
    coeffs: &VolterraCoefficients,
    lift: &DiscreteLift,
    controller: &dyn Controller,
    t0: f64,
    increments: &[f64],
    zeta0: &[f64],
    s: usize,
    tau: usize,
) -> Result<MalliavinReport> {
    let n = increments.len();
    if s >= tau || tau > n {
        return Err(Error::Invalid(format!("need s < τ ≤ {n}, got s = {s}, τ = {tau}")));
    }
    let (states, controls) = simulate_path(coeffs, lift, controller, t0, increments, zeta0, 0, tau)?;
    let mut bumped = increments.to_vec();
    bumped[s] += MALLIAVIN_BUMP;
    let (bumped_states, _) = simulate_path(coeffs, lift, controller, t0, &bumped, &states[s], s, tau)?;
    let base = &states[tau];
    let bump_derivative: Vec<f64> = bumped_states[tau - s]
        .iter()
        .zip(base)
        .map(|(b, a)| (b - a) / MALLIAVIN_BUMP)
        .collect();

    let t_s = t0 + s as f64 * lift.dt();
    let sigma_s = (coeffs.sigma)(t_s, lift.pair_unchecked(&states[s]));
    let mut h: Vec<f64> = lift.nu().iter().map(|v| v * sigma_s).collect();
    lift.step_in_place(&mut h);
    let path = tangent_along(
        coeffs,
        lift,
        controller,
        t0,
        increments,
        &states[s + 1..tau],
        &controls[s + 1..tau],
        s + 1,
        &h,
    )?;
    let tangent_prediction = path.last().cloned().unwrap_or(h);
    let diff: Vec<f64> = bump_derivative.iter().zip(&tangent_prediction).map(|(a, b)| a - b).collect();
    let rel_error = norm2(&diff) / norm2(&tangent_prediction).max(1e-12);
    Ok(MalliavinReport { bump_derivative, tangent_prediction, rel_error })
}
