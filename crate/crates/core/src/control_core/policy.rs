use rand::Rng;

use super::problem::ControlProblem;
use crate::forward_sim::{path_rng, Controller, PathEnsemble, Phase};
use crate::stats::MeanEstimate;

/// A (possibly state-dependent) control law.
pub trait Policy: Sync {
    fn decide(&self, step: usize, t: f64, x: f64, z: Option<&[f64]>) -> f64;

    fn needs_state(&self) -> bool {
        false
    }

    fn label(&self) -> String;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub f64);

impl Policy for ConstantPolicy {
    fn decide(&self, _: usize, _: f64, _: f64, _: Option<&[f64]>) -> f64 {
        self.0
    }

    fn label(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// `u = a + b (x - x_ref)`, projected onto `U` by the controller.
#[derive(Debug, Clone, Copy)]
pub struct AffinePolicy {
    pub a: f64,
    pub b: f64,
    pub x_ref: f64,
}

impl Policy for AffinePolicy {
    fn decide(&self, _: usize, _: f64, x: f64, _: Option<&[f64]>) -> f64 {
        self.a + self.b * (x - self.x_ref)
    }

    fn label(&self) -> String {
        format!("affine(a={},b={},x_ref={})", self.a, self.b, self.x_ref)
    }
}

/// Runs a policy inside a problem: projects onto `U` and clamps `R`.
pub struct ProblemController<'a> {
    pub problem: &'a ControlProblem,
    pub policy: &'a dyn Policy,
}

impl<'a> ProblemController<'a> {
    pub fn new(problem: &'a ControlProblem, policy: &'a dyn Policy) -> Self {
        Self { problem, policy }
    }
}

impl Controller for ProblemController<'_> {
    fn control(&self, step: usize, t: f64, x: f64, z: Option<&[f64]>) -> f64 {
        self.problem.project(self.policy.decide(step, t, x, z))
    }

    fn drift(&self, t: f64, x: f64, u: f64) -> f64 {
        self.problem.r_clamped(t, x, u)
    }

    fn needs_state(&self) -> bool {
        self.policy.needs_state()
    }
}

/// Pathwise cost `Σ_k F(t_k, X_k, u_k)Δt + G(X_N)` for one path.
pub fn path_cost(problem: &ControlProblem, ens: &PathEnsemble, path: usize) -> f64 {
    let n = ens.n_steps();
    let dt = ens.grid.dt;
    let running: f64 = (0..n)
        .map(|k| problem.running_cost(ens.grid.time(k), ens.x(path, k), ens.control(path, k)) * dt)
        .sum();
    running + problem.terminal_cost(ens.x(path, n))
}

/// Monte Carlo estimate of `J` from an ensemble simulated under the policy.
pub fn evaluate_cost(problem: &ControlProblem, ens: &PathEnsemble) -> MeanEstimate {
    let costs: Vec<f64> = ens.valid_paths().into_iter().map(|p| path_cost(problem, ens, p)).collect();
    MeanEstimate::from_samples(&costs)
}

/// `n_constant` constant policies uniform on `U` and `n_affine` affine
/// feedbacks around `x_ref`, drawn from the `Policies` substream.
pub fn random_policies(problem: &ControlProblem, n_constant: usize, n_affine: usize, seed: u64, x_ref: f64) -> Vec<Box<dyn Policy>> {
    let (lo, hi) = (problem.u_lo, problem.u_hi);
    let width = hi - lo;
    let mut out: Vec<Box<dyn Policy>> = Vec::with_capacity(n_constant + n_affine);
    for i in 0..n_constant {
        let mut rng = path_rng(seed, Phase::Policies, i as u64);
        out.push(Box::new(ConstantPolicy(lo + width * rng.random::<f64>())));
    }
    for i in 0..n_affine {
        let mut rng = path_rng(seed, Phase::Policies, (n_constant + i) as u64);
        let a = lo + width * rng.random::<f64>();
        let b = width * (2.0 * rng.random::<f64>() - 1.0);
        out.push(Box::new(AffinePolicy { a, b, x_ref }));
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::forward_sim::{simulate_direct, BrownianGrid, VolterraCoefficients};

    #[test]
    fn deterministic_cost_is_terminal_value() {
        let p = ControlProblem::new(
            "flat",
            VolterraCoefficients::constant(0.0, 0.0, 1.0),
            Arc::new(|_, _, u| u),
            Arc::new(|_, _, _| 0.0),
            Arc::new(|x| x),
            (0.0, 1.0),
            10.0,
            1.0,
        )
        .unwrap();
        let grid = BrownianGrid::generate(0.0, 1.0, 8, 10, 1, Phase::Evaluation).unwrap();
        let pol = ConstantPolicy(0.5);
        let ctl = ProblemController::new(&p, &pol);
        let ens = simulate_direct(&p.coeffs, &[0.0; 9], &ctl, &grid).unwrap();
        let j = evaluate_cost(&p, &ens);
        assert_eq!(j.mean, 1.0);
        assert_eq!(j.se, 0.0);
    }

    #[test]
    fn random_policies_are_reproducible_and_admissible() {
        let p = ControlProblem::new(
            "u",
            VolterraCoefficients::constant(0.0, 0.0, 1.0),
            Arc::new(|_, _, u| u),
            Arc::new(|_, _, _| 0.0),
            Arc::new(|x| x),
            (0.0, 2.0),
            10.0,
            1.0,
        )
        .unwrap();
        let a = random_policies(&p, 3, 3, 42, 1.0);
        let b = random_policies(&p, 3, 3, 42, 1.0);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label(), y.label());
            let ctl = ProblemController::new(&p, x.as_ref());
            for xv in [-5.0, 0.0, 1.0, 7.0] {
                let u = ctl.control(0, 0.0, xv, None);
                assert!((0.0..=2.0).contains(&u));
            }
        }
    }
}
