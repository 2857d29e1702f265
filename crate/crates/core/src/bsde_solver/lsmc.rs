//! Least-squares Monte Carlo for `p_k = E[p_{k+1} | Z_k] + H(t_k, Z_k, q_k)Δt`.

use rayon::prelude::*;

use super::basis::{fit, Basis, EnsembleView, LinearFit, Observation};
use super::value::ValueModel;
use crate::control_core::{hamiltonian_at, ControlProblem};
use crate::error::{Error, Result};
use crate::forward_sim::PathEnsemble;
use crate::kernel_lift::DiscreteLift;
use crate::stats::MeanEstimate;

/// `|p̂|` above this aborts the backward pass.
pub const EXPLOSION_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub r2_p: f64,
    pub r2_q: f64,
    pub condition: f64,
    /// Mean of `p_{k+1} − p_k + HΔt − q ΔW`. The fitted intercept makes this
    /// equal to `−Ê[q ΔW]`, so the error reported is that of `q ΔW`.
    pub residual: MeanEstimate,
}

/// Per-step coefficients of `E[p_{k+1} | Z_k]` and of the costate `q_k`
/// (the scalar coupling `q·ν`, i.e. already multiplied by `σ`).
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub problem: ControlProblem,
    pub lift: DiscreteLift,
    pub basis: Basis,
    pub t0: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub cond: Vec<LinearFit>,
    pub q: Vec<LinearFit>,
    /// `p̂_0(ζ0)` with the standard error of the pathwise cost-to-go.
    pub value: MeanEstimate,
    pub diagnostics: Vec<StepDiagnostics>,
    /// `Ê[sup_k |p_k|²]`.
    pub sup_p2: f64,
    /// `Ê[Σ_k q_k² Δt]`.
    pub q_energy: f64,
}

impl ValueModel for BsdeSolution {
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
        let f = self.basis.features(obs);
        let q = self.q[k].eval(&f);
        let h = hamiltonian_at(&self.problem, self.time(k), obs.x, q).map_or(f64::NAN, |r| r.value);
        self.cond[k].eval(&f) + h * self.dt()
    }
}

impl BsdeSolution {
    /// Regressed costate coupling `q̃_k(Z)`.
    pub fn q_obs(&self, k: usize, obs: &Observation) -> f64 {
        self.q[k].eval(&self.basis.features(obs))
    }
}

/// Design matrix of `basis` at step `k` over `paths`.
pub(crate) fn design(view: &EnsembleView, basis: &Basis, paths: &[usize], k: usize) -> (Vec<Observation>, Vec<f64>) {
    let p = basis.len();
    let obs: Vec<Observation> = paths.par_iter().map(|&i| view.observe(i, k)).collect();
    let mut rows = vec![0.0; paths.len() * p];
    rows.par_chunks_mut(p).zip(obs.par_iter()).for_each(|(r, o)| basis.features_into(o, r));
    (obs, rows)
}

pub(crate) fn check_ensemble(ens: &PathEnsemble, lift: &DiscreteLift, basis: &Basis) -> Result<Vec<usize>> {
    if (ens.grid.dt - lift.dt()).abs() > 1e-12 * lift.dt() {
        return Err(Error::Invalid("ensemble and lift use different dt".into()));
    }
    let paths = ens.valid_paths();
    if paths.len() < 10 * basis.len() {
        return Err(Error::Invalid(format!(
            "{} paths for {} basis functions; need at least 10 per function",
            paths.len(),
            basis.len()
        )));
    }
    Ok(paths)
}

/// Backward induction on an uncontrolled lifted ensemble.
///
/// The costate is regressed as `E[(p_{k+1} − Ê[p_{k+1}|Z_k]) ΔW_k | Z_k]/Δt`;
/// subtracting the fitted conditional mean leaves the estimator's limit
/// unchanged and removes most of its variance.
pub fn solve_lsmc(ens: &PathEnsemble, problem: &ControlProblem, lift: &DiscreteLift, basis: &Basis) -> Result<BsdeSolution> {
    let view = EnsembleView::new(ens, lift, basis)?;
    let paths = check_ensemble(ens, lift, basis)?;
    let n = ens.n_steps();
    let dt = ens.grid.dt;
    let pl = basis.len();
    let n_paths = paths.len();

    let mut p_next: Vec<f64> = paths.iter().map(|&i| problem.terminal_cost(ens.x(i, n))).collect();
    let mut cost_to_go = p_next.clone();
    let mut sup_p2: Vec<f64> = p_next.iter().map(|v| v * v).collect();
    let mut q_energy = vec![0.0; n_paths];
    let mut cond = vec![LinearFit::constant(0.0, pl); n];
    let mut qfit = vec![LinearFit::constant(0.0, pl); n];
    let mut diagnostics = Vec::with_capacity(n);

    for k in (0..n).rev() {
        let t = ens.grid.time(k);
        let (obs, rows) = design(&view, basis, &paths, k);
        let c = fit(&rows, pl, &p_next, basis.ridge, k)?;
        let c_vals: Vec<f64> = rows.par_chunks(pl).map(|r| c.eval(r)).collect();
        let dw: Vec<f64> = paths.iter().map(|&i| ens.grid.path(i)[k]).collect();
        let q_target: Vec<f64> = (0..n_paths).map(|i| (p_next[i] - c_vals[i]) * dw[i] / dt).collect();
        let q = fit(&rows, pl, &q_target, basis.ridge, k)?;
        let q_vals: Vec<f64> = rows.par_chunks(pl).map(|r| q.eval(r)).collect();
        let h: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|i| hamiltonian_at(problem, t, obs[i].x, q_vals[i]).map(|r| r.value))
            .collect::<Result<_>>()?;
        let mut residuals = Vec::with_capacity(n_paths);
        let mut martingale = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            let pk = c_vals[i] + h[i] * dt;
            if !(pk.abs() <= EXPLOSION_BOUND) {
                return Err(Error::Exploded { step: k, magnitude: pk.abs() });
            }
            residuals.push(p_next[i] - pk + h[i] * dt - q_vals[i] * dw[i]);
            martingale.push(q_vals[i] * dw[i]);
            cost_to_go[i] += h[i] * dt;
            sup_p2[i] = sup_p2[i].max(pk * pk);
            q_energy[i] += q_vals[i] * q_vals[i] * dt;
            p_next[i] = pk;
        }
        diagnostics.push(StepDiagnostics {
            step: k,
            r2_p: c.r2,
            r2_q: q.r2,
            condition: c.condition,
            residual: MeanEstimate {
                mean: residuals.iter().sum::<f64>() / n_paths as f64,
                ..MeanEstimate::from_samples(&martingale)
            },
        });
        cond[k] = c;
        qfit[k] = q;
    }
    diagnostics.reverse();

    let mut sol = BsdeSolution {
        problem: problem.clone(),
        lift: lift.clone(),
        basis: basis.clone(),
        t0: ens.grid.t0,
        n_steps: n,
        seed: ens.grid.seed,
        cond,
        q: qfit,
        value: MeanEstimate::from_samples(&cost_to_go),
        diagnostics,
        sup_p2: sup_p2.iter().sum::<f64>() / n_paths as f64,
        q_energy: q_energy.iter().sum::<f64>() / n_paths as f64,
    };
    let zeta0 = &ens.lifted.as_ref().expect("checked by view").zeta0;
    let v0 = super::value::value_at(&sol, 0, zeta0)?;
    sol.value.mean = v0;
    Ok(sol)
}
