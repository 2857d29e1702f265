//! Mild-solution fixed point
//! `w(t_k, Z_k) = E[G(X_N) + Σ_{j≥k} H(t_j, Z_j, ∇w(t_j, Z_j)νσ)Δt | Z_k]`
//! iterated on a fixed uncontrolled ensemble.

use rayon::prelude::*;

use crate::bsde_solver::{
    check_ensemble, design, fit, nu_direction, nu_gradient_with, value_at, Basis, EnsembleView, LinearFit,
    Observation, ValueModel,
};
use crate::control_core::{hamiltonian_at, ControlProblem};
use crate::error::{Error, Result};
use crate::forward_sim::PathEnsemble;
use crate::kernel_lift::DiscreteLift;
use crate::stats::MeanEstimate;

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub max_rounds: usize,
    /// Stop when `sup |w^{(m)} − w^{(m−1)}| ≤ tol · (1 + sup |w^{(m)}|)`.
    pub tol: f64,
    /// Paths on which the sup-norm deltas are measured.
    pub probe_paths: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { max_rounds: 8, tol: 1e-4, probe_paths: 256 }
    }
}

#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub problem: ControlProblem,
    pub lift: DiscreteLift,
    pub basis: Basis,
    pub t0: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// `w(t_k, ·)` for `k < N`; the terminal slice is `G` itself.
    pub fits: Vec<LinearFit>,
    /// `ŵ(0, ζ0)` with the standard error of the pathwise targets.
    pub value: MeanEstimate,
    /// Sup-norm change per round, starting with round 1.
    pub deltas: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

impl ValueModel for ValueFunction {
    fn problem(&self) -> &ControlProblem {
        &self.problem
    }
    fn lift(&self) -> &DiscreteLift {
        &self.lift
    }
    fn basis(&self) -> &Basis {
        &self.basis
    }
    fn n_steps(&self) -> usize {
        self.n_steps
    }
    fn t0(&self) -> f64 {
        self.t0
    }

    fn value_obs(&self, k: usize, obs: &Observation) -> f64 {
        if k >= self.n_steps {
            return self.problem.terminal_cost(obs.x);
        }
        self.fits[k].eval(&self.basis.features(obs))
    }
}

fn regress_targets(rows: &[Vec<f64>], pl: usize, targets: &[Vec<f64>], ridge: f64) -> Result<Vec<LinearFit>> {
    rows.par_iter()
        .zip(targets.par_iter())
        .enumerate()
        .map(|(k, (r, y))| fit(r, pl, y, ridge, k))
        .collect()
}

/// Picard iteration of the mild HJB equation.
pub fn picard_mild_solve(
    ens: &PathEnsemble,
    problem: &ControlProblem,
    lift: &DiscreteLift,
    basis: &Basis,
    config: &PicardConfig,
) -> Result<ValueFunction> {
    let view = EnsembleView::new(ens, lift, basis)?;
    let paths = check_ensemble(ens, lift, basis)?;
    let n = ens.n_steps();
    let dt = ens.grid.dt;
    let pl = basis.len();
    let n_paths = paths.len();
    let probes = config.probe_paths.min(n_paths).max(1);

    let (obs, rows): (Vec<Vec<Observation>>, Vec<Vec<f64>>) = (0..n).map(|k| design(&view, basis, &paths, k)).unzip();
    let terminal: Vec<f64> = paths.iter().map(|&i| problem.terminal_cost(ens.x(i, n))).collect();

    let mut vf = ValueFunction {
        problem: problem.clone(),
        lift: lift.clone(),
        basis: basis.clone(),
        t0: ens.grid.t0,
        n_steps: n,
        seed: ens.grid.seed,
        fits: regress_targets(&rows, pl, &vec![terminal.clone(); n], basis.ridge)?,
        value: MeanEstimate::from_samples(&terminal),
        deltas: Vec::new(),
        rounds: 0,
        converged: false,
    };
    let dirs: Vec<Observation> = (0..n).map(|k| nu_direction(&vf, k)).collect();

    for round in 1..=config.max_rounds {
        // Per path and step: H Δt − q ΔW with q = ∇w^{(m−1)} ν σ. The second
        // term has zero conditional mean given Z_k, so the regression target
        // keeps its conditional expectation while most of its noise cancels.
        let incr: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let t = ens.grid.time(k);
                obs[k]
                    .iter()
                    .zip(&paths)
                    .map(|(o, &i)| {
                        let coupling = nu_gradient_with(&vf, k, o, &dirs[k]) * (problem.coeffs.sigma)(t, o.x);
                        let h = hamiltonian_at(problem, t, o.x, coupling)?.value;
                        Ok(h * dt - coupling * ens.grid.path(i)[k])
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut targets = vec![Vec::new(); n];
        let mut acc = terminal.clone();
        for k in (0..n).rev() {
            for (a, d) in acc.iter_mut().zip(&incr[k]) {
                *a += d;
            }
            targets[k] = acc.clone();
        }
        let fits = regress_targets(&rows, pl, &targets, basis.ridge)?;
        let mut next = ValueFunction { fits, value: MeanEstimate::from_samples(&targets[0]), ..vf.clone() };

        let (mut delta, mut sup_w) = (0.0f64, 0.0f64);
        for k in 0..n {
            for o in &obs[k][..probes] {
                let w_new = next.value_obs(k, o);
                delta = delta.max((w_new - vf.value_obs(k, o)).abs());
                sup_w = sup_w.max(w_new.abs());
            }
        }
        if !delta.is_finite() {
            return Err(Error::NonFinite(format!("Picard delta in round {round}")));
        }
        next.deltas.push(delta);
        next.rounds = round;
        vf = next;
        if delta <= config.tol * (1.0 + sup_w) {
            vf.converged = true;
            break;
        }
        let d = &vf.deltas;
        if d.len() >= 4 && d[d.len() - 3..].iter().zip(&d[d.len() - 4..d.len() - 1]).all(|(cur, prev)| cur >= prev) {
            return Err(Error::PicardDiverged { deltas: d.clone() });
        }
    }
    let zeta0 = &ens.lifted.as_ref().expect("checked by view").zeta0;
    vf.value.mean = value_at(&vf, 0, zeta0)?;
    Ok(vf)
}
