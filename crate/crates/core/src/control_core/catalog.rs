//! Built-in problems.
//!
//! `consumption_sqrt`: `dX = √(t-s)`-convolution of `σ0(−c ds + dW)`,
//! minimize `E[∫ −a1 c² dt + a2 X_T]` over `c ∈ [0, c̄]` from `x0 ≡ x̄`.
//! The controlled drift is `R(c) = −c`. `consumption_laplace` is the same
//! problem with `K(t) = 1/(t + ε)`. `lq_smooth` has an interior optimum.

use std::sync::Arc;

use super::problem::{ControlProblem, QuadAffine, DEFAULT_K_R};
use crate::error::{Error, Result};
use crate::forward_sim::VolterraCoefficients;
use crate::kernel_lift::{build_laplace_lift, build_shift_lift, default_laplace_quadrature, DiscreteLift, Kernel};

pub const CATALOG: [&str; 3] = ["consumption_sqrt", "consumption_laplace", "lq_smooth"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub a1: f64,
    pub a2: f64,
    pub c_bar: f64,
    pub sigma0: f64,
    pub x_bar: f64,
    pub horizon: f64,
    pub k_r: f64,
    /// Use `σ(x) = σ0(1 + 0.3 sin x)` instead of constant `σ0`.
    pub state_sigma: bool,
    pub laplace_eps: f64,
    pub laplace_nodes: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            a1: 1.0,
            a2: 1.0,
            c_bar: 1.0,
            sigma0: 0.2,
            x_bar: 1.0,
            horizon: 1.0,
            k_r: DEFAULT_K_R,
            state_sigma: false,
            laplace_eps: 0.5,
            laplace_nodes: 64,
        }
    }
}

/// A problem with its kernel, lift and embedded initial state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub problem: ControlProblem,
    pub kernel: Kernel,
    pub lift: DiscreteLift,
    pub zeta0: Vec<f64>,
}

impl Scenario {
    pub fn n_steps(&self) -> usize {
        (self.problem.horizon / self.lift.dt()).round() as usize
    }
}

fn sigma_fn(p: &ScenarioParams) -> (crate::forward_sim::CoefFn, crate::forward_sim::CoefFn) {
    let s0 = p.sigma0;
    if p.state_sigma {
        (
            Arc::new(move |_, x: f64| s0 * (1.0 + 0.3 * x.sin())),
            Arc::new(move |_, x: f64| s0 * 0.3 * x.cos()),
        )
    } else {
        (Arc::new(move |_, _| s0), Arc::new(|_, _| 0.0))
    }
}

pub fn consumption_problem(p: &ScenarioParams) -> Result<ControlProblem> {
    if !(p.c_bar > 0.0) {
        return Err(Error::Invalid(format!("c_bar must be positive, got {}", p.c_bar)));
    }
    let (sigma, dsigma) = sigma_fn(p);
    let x_bar = p.x_bar;
    let coeffs = VolterraCoefficients::new(Arc::new(|_, _| 0.0), sigma, Arc::new(move |_| x_bar))
        .with_derivatives(Arc::new(|_, _| 0.0), dsigma);
    let (a1, a2) = (p.a1, p.a2);
    Ok(ControlProblem::new(
        "consumption",
        coeffs,
        Arc::new(|_, _, c| -c),
        Arc::new(move |_, _, c| -a1 * c * c),
        Arc::new(move |x| a2 * x),
        (0.0, p.c_bar),
        p.k_r,
        p.horizon,
    )?
    .with_structure(QuadAffine { f2: -a1, f1: 0.0, r1: -1.0, r0: 0.0 }))
}

pub fn lq_smooth_problem(p: &ScenarioParams) -> Result<ControlProblem> {
    let (sigma, dsigma) = sigma_fn(&ScenarioParams { state_sigma: true, ..p.clone() });
    let coeffs = VolterraCoefficients::new(Arc::new(|_, x: f64| -0.5 * x.sin()), sigma, Arc::new(|_| 0.5))
        .with_derivatives(Arc::new(|_, x: f64| -0.5 * x.cos()), dsigma);
    Ok(ControlProblem::new(
        "lq_smooth",
        coeffs,
        Arc::new(|_, _, u| u),
        Arc::new(|_, _, u| u * u),
        Arc::new(|x| x + 0.5 * x * x),
        (-1.0, 1.0),
        p.k_r,
        p.horizon,
    )?
    .with_structure(QuadAffine { f2: 1.0, f1: 0.0, r1: 1.0, r0: 0.0 }))
}

/// Builds a named scenario on a grid of `n_steps` steps over the horizon.
pub fn scenario(name: &str, params: &ScenarioParams, n_steps: usize) -> Result<Scenario> {
    if n_steps == 0 {
        return Err(Error::Invalid("n_steps must be positive".into()));
    }
    let horizon = params.horizon;
    let dt = horizon / n_steps as f64;
    let (mut problem, kernel, lift) = match name {
        "consumption_sqrt" => {
            let k = Kernel::sqrt(horizon);
            let lift = build_shift_lift(&k, dt, horizon)?;
            (consumption_problem(params)?, k, lift)
        }
        "consumption_laplace" => {
            let k = Kernel::laplace(params.laplace_eps, horizon)?;
            let (x, w) = default_laplace_quadrature(params.laplace_eps, params.laplace_nodes)?;
            let lift = build_laplace_lift(&k, &x, &w, dt, None)?;
            (consumption_problem(params)?, k, lift)
        }
        "lq_smooth" => {
            let k = Kernel::sqrt(horizon);
            let lift = build_shift_lift(&k, dt, horizon)?;
            (lq_smooth_problem(params)?, k, lift)
        }
        other => return Err(Error::Invalid(format!("unknown problem `{other}` (known: {})", CATALOG.join(", ")))),
    };
    problem.name = name.to_string();
    let x0 = problem.coeffs.initial_curve(problem.t0, dt, n_steps);
    let (zeta0, _) = lift.embed_initial_curve(&x0)?;
    Ok(Scenario { problem, kernel, lift, zeta0 })
}

/// Optimal value of the consumption problem, `c ≡ c̄`:
/// `J* = −a1 c̄² T + a2 x̄ − a2 σ0 c̄ ∫₀ᵀ K(s) ds`.
pub fn consumption_optimal_value(p: &ScenarioParams, kernel: &Kernel) -> Result<f64> {
    let integral = kernel
        .integral(p.horizon)
        .ok_or_else(|| Error::Invalid("kernel has no closed-form antiderivative".into()))?;
    Ok(-p.a1 * p.c_bar * p.c_bar * p.horizon + p.a2 * p.x_bar - p.a2 * p.sigma0 * p.c_bar * integral)
}
