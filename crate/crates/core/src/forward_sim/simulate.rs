//! Direct (discrete convolution) and lifted (exponential Euler) schemes.

use rayon::prelude::*;

use super::brownian::BrownianGrid;
use super::coefficients::{Controller, VolterraCoefficients};
use crate::error::{Error, Result};
use crate::kernel_lift::DiscreteLift;

/// More than this fraction of non-finite paths aborts an ensemble.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

/// What the lifted simulator records besides `X`.
#[derive(Debug, Clone, Default)]
pub struct RecordOptions {
    /// Keep every full state `Z_k` (memory `n_paths × (N+1) × dim`).
    pub store_z: bool,
    /// Lift coordinates recorded at every step.
    pub coords: Vec<usize>,
}

impl RecordOptions {
    pub fn full() -> Self {
        Self { store_z: true, coords: Vec::new() }
    }
}

/// Simulated trajectories, all arrays row-major by path.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: BrownianGrid,
    /// `n_paths × (N+1)`.
    pub x: Vec<f64>,
    /// `n_paths × N`, the control applied on each step.
    pub controls: Vec<f64>,
    /// Lifted ensembles only.
    pub lifted: Option<LiftedRecord>,
    /// Indices of paths aborted on non-finite values.
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LiftedRecord {
    pub dim: usize,
    pub zeta0: Vec<f64>,
    /// `⟨g, E^{N-k} Z_k⟩`, the grid forecast of `X_N` made at step `k`.
    pub forecast: Vec<f64>,
    /// `‖Z_k‖_∞`.
    pub sup_norm: Vec<f64>,
    pub coords: Vec<usize>,
    /// `n_paths × (N+1) × coords.len()`.
    pub coord_values: Vec<f64>,
    /// `⟨g, E Z_k⟩`.
    pub next_pair: Vec<f64>,
    /// `(E Z_k)[c]` for the recorded coordinates, laid out like `coord_values`.
    pub next_coord_values: Vec<f64>,
    /// `n_paths × (N+1) × dim`.
    pub z: Option<Vec<f64>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.grid.n_paths()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn x(&self, path: usize, k: usize) -> f64 {
        self.x[path * (self.n_steps() + 1) + k]
    }

    pub fn x_path(&self, path: usize) -> &[f64] {
        let w = self.n_steps() + 1;
        &self.x[path * w..(path + 1) * w]
    }

    pub fn control(&self, path: usize, k: usize) -> f64 {
        self.controls[path * self.n_steps() + k]
    }

    pub fn is_flagged(&self, path: usize) -> bool {
        self.flagged.binary_search(&path).is_ok()
    }

    /// Indices of paths usable by estimators.
    pub fn valid_paths(&self) -> Vec<usize> {
        (0..self.n_paths()).filter(|&i| !self.is_flagged(i)).collect()
    }

    pub fn forecast(&self, path: usize, k: usize) -> Option<f64> {
        self.lifted.as_ref().map(|l| l.forecast[path * (self.n_steps() + 1) + k])
    }

    pub fn sup_norm(&self, path: usize, k: usize) -> Option<f64> {
        self.lifted.as_ref().map(|l| l.sup_norm[path * (self.n_steps() + 1) + k])
    }

    pub fn coord_values(&self, path: usize, k: usize) -> &[f64] {
        self.coord_slice(path, k, |l| &l.coord_values)
    }

    pub fn next_pair(&self, path: usize, k: usize) -> Option<f64> {
        self.lifted.as_ref().map(|l| l.next_pair[path * (self.n_steps() + 1) + k])
    }

    pub fn next_coord_values(&self, path: usize, k: usize) -> &[f64] {
        self.coord_slice(path, k, |l| &l.next_coord_values)
    }

    fn coord_slice(&self, path: usize, k: usize, pick: impl Fn(&LiftedRecord) -> &Vec<f64>) -> &[f64] {
        match &self.lifted {
            Some(l) => {
                let m = l.coords.len();
                let at = (path * (self.n_steps() + 1) + k) * m;
                &pick(l)[at..at + m]
            }
            None => &[],
        }
    }

    pub fn z(&self, path: usize, k: usize) -> Option<&[f64]> {
        let l = self.lifted.as_ref()?;
        let z = l.z.as_ref()?;
        let at = (path * (self.n_steps() + 1) + k) * l.dim;
        Some(&z[at..at + l.dim])
    }

    /// Sample mean and standard error of `X_k` over valid paths.
    pub fn x_moments(&self, k: usize) -> (f64, f64) {
        let vals: Vec<f64> = self.valid_paths().iter().map(|&i| self.x(i, k)).collect();
        let m = crate::stats::MeanEstimate::from_samples(&vals);
        (m.mean, m.se)
    }
}

struct PathRecord {
    x: Vec<f64>,
    controls: Vec<f64>,
    forecast: Vec<f64>,
    sup_norm: Vec<f64>,
    coord_values: Vec<f64>,
    next_pair: Vec<f64>,
    next_coord_values: Vec<f64>,
    z: Vec<f64>,
    flagged: bool,
}

fn check_flagged(flags: impl Iterator<Item = bool>, n_paths: usize) -> Result<Vec<usize>> {
    let flagged: Vec<usize> = flags.enumerate().filter(|(_, f)| *f).map(|(i, _)| i).collect();
    if flagged.len() as f64 > MAX_FLAGGED_FRACTION * n_paths as f64 {
        return Err(Error::EnsembleAborted { flagged: flagged.len(), paths: n_paths });
    }
    Ok(flagged)
}

/// Left-point Euler scheme for the Volterra equation with kernel values
/// `kernel_grid[m] = K(mΔt)`. Each path costs `O(N²)`.
pub fn simulate_direct(
    coeffs: &VolterraCoefficients,
    kernel_grid: &[f64],
    controller: &dyn Controller,
    grid: &BrownianGrid,
) -> Result<PathEnsemble> {
    let n = grid.n_steps;
    if kernel_grid.len() < n + 1 {
        return Err(Error::Dimension { expected: n + 1, got: kernel_grid.len() });
    }
    if controller.needs_state() {
        return Err(Error::Invalid("the direct scheme has no lifted state for this controller".into()));
    }
    let x0 = coeffs.initial_curve(grid.t0, grid.dt, n);
    let records: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..grid.n_paths())
        .into_par_iter()
        .map(|p| {
            let dw = grid.path(p);
            let mut x = vec![f64::NAN; n + 1];
            let mut controls = vec![f64::NAN; n];
            let mut incs = vec![0.0; n];
            for k in 0..=n {
                let conv: f64 = (0..k).map(|j| kernel_grid[k - j] * incs[j]).sum();
                let xk = x0[k] + conv;
                if !xk.is_finite() {
                    return (x, controls, true);
                }
                x[k] = xk;
                if k == n {
                    break;
                }
                let t = grid.time(k);
                let u = controller.control(k, t, xk, None);
                let sigma = (coeffs.sigma)(t, xk);
                let drift = (coeffs.beta)(t, xk) + sigma * controller.drift(t, xk, u);
                let inc = drift * grid.dt + sigma * dw[k];
                if !inc.is_finite() {
                    return (x, controls, true);
                }
                controls[k] = u;
                incs[k] = inc;
            }
            (x, controls, false)
        })
        .collect();
    let flagged = check_flagged(records.iter().map(|r| r.2), records.len())?;
    let mut xs = Vec::with_capacity(records.len() * (n + 1));
    let mut us = Vec::with_capacity(records.len() * n);
    for (x, u, _) in records {
        xs.extend(x);
        us.extend(u);
    }
    Ok(PathEnsemble { grid: grid.clone(), x: xs, controls: us, lifted: None, flagged })
}

/// Exponential-Euler scheme on the lift:
/// `Z_{k+1} = E(Z_k + ν[(β + σR)Δt + σΔW_k])`, `X_k = ⟨g, Z_k⟩`.
pub fn simulate_lifted(
    coeffs: &VolterraCoefficients,
    lift: &DiscreteLift,
    controller: &dyn Controller,
    grid: &BrownianGrid,
    zeta0: &[f64],
    record: &RecordOptions,
) -> Result<PathEnsemble> {
    let n = grid.n_steps;
    let dim = lift.dim();
    if zeta0.len() != dim {
        return Err(Error::Dimension { expected: dim, got: zeta0.len() });
    }
    if let Some(max) = lift.max_steps() {
        if n > max {
            return Err(Error::Invalid(format!("lift covers {max} steps, grid has {n}")));
        }
    }
    if (grid.dt - lift.dt()).abs() > 1e-12 * lift.dt() {
        return Err(Error::Invalid(format!("grid dt {} differs from lift dt {}", grid.dt, lift.dt())));
    }
    if let Some(&bad) = record.coords.iter().find(|&&c| c >= dim) {
        return Err(Error::Invalid(format!("recorded coordinate {bad} outside lift dimension {dim}")));
    }
    let m = record.coords.len();
    let records: Vec<PathRecord> = (0..grid.n_paths())
        .into_par_iter()
        .map(|p| {
            let dw = grid.path(p);
            let mut rec = PathRecord {
                x: vec![f64::NAN; n + 1],
                controls: vec![f64::NAN; n],
                forecast: vec![f64::NAN; n + 1],
                sup_norm: vec![f64::NAN; n + 1],
                coord_values: vec![f64::NAN; (n + 1) * m],
                next_pair: vec![f64::NAN; n + 1],
                next_coord_values: vec![f64::NAN; (n + 1) * m],
                z: if record.store_z { vec![f64::NAN; (n + 1) * dim] } else { Vec::new() },
                flagged: false,
            };
            let mut z = zeta0.to_vec();
            for k in 0..=n {
                let xk = lift.pair_unchecked(&z);
                if !xk.is_finite() {
                    rec.flagged = true;
                    return rec;
                }
                rec.x[k] = xk;
                rec.forecast[k] = lift.forecast_unchecked(&z, n - k);
                rec.sup_norm[k] = z.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
                for (slot, &c) in rec.coord_values[k * m..(k + 1) * m].iter_mut().zip(&record.coords) {
                    *slot = z[c];
                }
                rec.next_pair[k] = lift.forecast_unchecked(&z, 1);
                for (slot, &c) in rec.next_coord_values[k * m..(k + 1) * m].iter_mut().zip(&record.coords) {
                    *slot = lift.stepped_coord_unchecked(&z, c);
                }
                if record.store_z {
                    rec.z[k * dim..(k + 1) * dim].copy_from_slice(&z);
                }
                if k == n {
                    break;
                }
                let t = grid.time(k);
                let u = controller.control(k, t, xk, Some(&z));
                let sigma = (coeffs.sigma)(t, xk);
                let drift = (coeffs.beta)(t, xk) + sigma * controller.drift(t, xk, u);
                let inc = drift * grid.dt + sigma * dw[k];
                if !inc.is_finite() {
                    rec.flagged = true;
                    return rec;
                }
                rec.controls[k] = u;
                inject(lift, &mut z, inc);
                lift.step_in_place(&mut z);
            }
            rec
        })
        .collect();
    let flagged = check_flagged(records.iter().map(|r| r.flagged), records.len())?;
    let n_paths = records.len();
    let mut out = LiftedRecord {
        dim,
        zeta0: zeta0.to_vec(),
        forecast: Vec::with_capacity(n_paths * (n + 1)),
        sup_norm: Vec::with_capacity(n_paths * (n + 1)),
        coords: record.coords.clone(),
        coord_values: Vec::with_capacity(n_paths * (n + 1) * m),
        next_pair: Vec::with_capacity(n_paths * (n + 1)),
        next_coord_values: Vec::with_capacity(n_paths * (n + 1) * m),
        z: record.store_z.then(|| Vec::with_capacity(n_paths * (n + 1) * dim)),
    };
    let mut xs = Vec::with_capacity(n_paths * (n + 1));
    let mut us = Vec::with_capacity(n_paths * n);
    for rec in records {
        xs.extend(rec.x);
        us.extend(rec.controls);
        out.forecast.extend(rec.forecast);
        out.sup_norm.extend(rec.sup_norm);
        out.coord_values.extend(rec.coord_values);
        out.next_pair.extend(rec.next_pair);
        out.next_coord_values.extend(rec.next_coord_values);
        if let Some(z) = out.z.as_mut() {
            z.extend(rec.z);
        }
    }
    Ok(PathEnsemble { grid: grid.clone(), x: xs, controls: us, lifted: Some(out), flagged })
}

/// `z += ν · amount`.
pub(crate) fn inject(lift: &DiscreteLift, z: &mut [f64], amount: f64) {
    for (zi, &ni) in z.iter_mut().zip(lift.nu()) {
        if ni != 0.0 {
            *zi += ni * amount;
        }
    }
}

/// One lifted path from `start` with state `z_start`, returning every state
/// `Z_start..=Z_end` and the applied controls.
pub fn simulate_path(
    coeffs: &VolterraCoefficients,
    lift: &DiscreteLift,
    controller: &dyn Controller,
    t0: f64,
    increments: &[f64],
    z_start: &[f64],
    start: usize,
    end: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if z_start.len() != lift.dim() {
        return Err(Error::Dimension { expected: lift.dim(), got: z_start.len() });
    }
    if end > increments.len() || start > end {
        return Err(Error::Invalid(format!("bad step range {start}..={end}")));
    }
    let dt = lift.dt();
    let mut states = Vec::with_capacity(end - start + 1);
    let mut controls = Vec::with_capacity(end - start);
    let mut z = z_start.to_vec();
    for k in start..end {
        let t = t0 + k as f64 * dt;
        let x = lift.pair_unchecked(&z);
        let u = controller.control(k, t, x, Some(&z));
        let sigma = (coeffs.sigma)(t, x);
        let inc = ((coeffs.beta)(t, x) + sigma * controller.drift(t, x, u)) * dt + sigma * increments[k];
        if !inc.is_finite() {
            return Err(Error::NonFinite(format!("increment at step {k}")));
        }
        states.push(z.clone());
        controls.push(u);
        inject(lift, &mut z, inc);
        lift.step_in_place(&mut z);
    }
    states.push(z);
    Ok((states, controls))
}
