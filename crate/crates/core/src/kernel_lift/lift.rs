//! Finite-dimensional lifts `K(kΔt) ≈ ⟨g, E^k ν⟩`.
//!
//! A shift lift discretizes the translation semigroup on `[-T, T)` with cells
//! of width `Δt`. Coordinates `0..n` hold the reservoir `[-T, 0)` where `ν = 1`
//! lives, coordinates `n..2n` hold the window `[0, T)` where `g` lives. One
//! step moves every cell one index up, zero-fills index 0 and drops the last
//! cell. With `g` equal to exact cell integrals the pairing telescopes to
//! `K(kΔt)` at every grid time.
//!
//! A Laplace lift discretizes `K(t) = ∫ e^{-xt} m(x) dx` with a quadrature,
//! giving a diagonal step `e^{-x_j Δt}`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::kernel::{Kernel, KernelKind};
use super::quadrature::gauss_legendre_on;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exactness {
    GridExact,
    Approximate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOperator {
    /// Index shift `i → i + 1` with zero fill-in.
    Shift,
    /// Componentwise multipliers `e^{-x_j Δt}`.
    Diagonal { nodes: Vec<f64>, multipliers: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct DiscreteLift {
    g: Vec<f64>,
    nu: Vec<f64>,
    step: StepOperator,
    dt: f64,
    exactness: Exactness,
    /// Number of window cells for shift lifts (`dim / 2`), node count otherwise.
    cells: usize,
    label: String,
}

/// Probe range used to bound the reconstruction error of approximate lifts.
#[derive(Debug, Clone, Copy)]
pub struct ReconstructionBound {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub max_rel_error: f64,
}

impl ReconstructionBound {
    pub fn probes(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|i| self.t_min + (self.t_max - self.t_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

fn grid_index(t: f64, dt: f64) -> Option<usize> {
    if t < 0.0 {
        return None;
    }
    let r = t / dt;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * r.max(1.0)).then_some(k as usize)
}

/// Builds the grid-exact shift lift on `[0, horizon]`.
///
/// Window weights are `g_i = K((i+1)Δt) − K(iΔt)` for `i ≥ 1` and
/// `g_0 = K(Δt)`, i.e. exact cell integrals of `g = K'` plus any atom `K(0)`
/// at the origin; for `√t` this is `√((i+1)Δt) − √(iΔt)`.
pub fn build_shift_lift(kernel: &Kernel, dt: f64, horizon: f64) -> Result<DiscreteLift> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    let cells = grid_index(horizon, dt)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Invalid(format!("horizon {horizon} is not a positive multiple of dt {dt}")))?;
    if horizon > kernel.horizon() * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!(
            "lift horizon {horizon} exceeds kernel horizon {}",
            kernel.horizon()
        )));
    }
    if kernel.singular_at_zero() {
        return Err(Error::Invalid(format!(
            "kernel {} has no integrable cell density near 0",
            kernel.name()
        )));
    }
    let mut values = Vec::with_capacity(cells + 1);
    values.push(0.0);
    for i in 1..=cells {
        let t = i as f64 * dt;
        let v = kernel.value(t);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("K({t}) for shift lift")));
        }
        values.push(v);
    }
    let mut g = vec![0.0; 2 * cells];
    for i in 0..cells {
        g[cells + i] = values[i + 1] - values[i];
    }
    let mut nu = vec![0.0; 2 * cells];
    nu[..cells].fill(1.0);
    Ok(DiscreteLift {
        g,
        nu,
        step: StepOperator::Shift,
        dt,
        exactness: Exactness::GridExact,
        cells,
        label: format!("shift(kernel={},dt={dt},cells={cells})", kernel.name()),
    })
}

/// Default quadrature for a Laplace density on `[0, ∞)`: 8 geometric panels
/// with edges `ε·10^{-3 + 6i/8}` (the first panel extended down to 0) and
/// `n_nodes / 8` Gauss–Legendre nodes per panel.
pub fn default_laplace_quadrature(eps: f64, n_nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const PANELS: usize = 8;
    if n_nodes < PANELS || n_nodes % PANELS != 0 {
        return Err(Error::Invalid(format!(
            "node count must be a positive multiple of {PANELS}, got {n_nodes}"
        )));
    }
    let per_panel = n_nodes / PANELS;
    let mut edges: Vec<f64> = (0..=PANELS)
        .map(|i| eps * 10f64.powf(-3.0 + 6.0 * i as f64 / PANELS as f64))
        .collect();
    edges[0] = 0.0;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    for pair in edges.windows(2) {
        let (x, w) = gauss_legendre_on(per_panel, pair[0], pair[1]);
        nodes.extend(x);
        weights.extend(w);
    }
    Ok((nodes, weights))
}

/// Builds a diagonal lift from a quadrature `(x_j, w_j)` of the kernel's
/// Laplace density `m`: `g_j = ν_j = √(w_j m(x_j))`.
///
/// Kernels without a density (the exponential kernel) use `m ≡ 1` at the
/// given nodes, so a single node `λ` with weight 1 reproduces `e^{-λt}`.
pub fn build_laplace_lift(
    kernel: &Kernel,
    nodes: &[f64],
    weights: &[f64],
    dt: f64,
    bound: Option<ReconstructionBound>,
) -> Result<DiscreteLift> {
    if nodes.is_empty() || nodes.len() != weights.len() {
        return Err(Error::Invalid("nodes and weights must be non-empty and equal length".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    if let Some(&bad) = nodes.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Invalid(format!("laplace nodes must be positive, got {bad}")));
    }
    let mut g = Vec::with_capacity(nodes.len());
    for (&x, &w) in nodes.iter().zip(weights) {
        let mass = w * match kernel.kind() {
            KernelKind::Exponential { .. } => 1.0,
            _ => kernel
                .laplace_density(x)
                .ok_or_else(|| Error::Invalid(format!("kernel {} has no Laplace density", kernel.name())))?,
        };
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::Invalid(format!("quadrature mass {mass} at node {x} is negative")));
        }
        g.push(mass.sqrt());
    }
    let multipliers = nodes.iter().map(|&x| (-x * dt).exp()).collect();
    let lift = DiscreteLift {
        nu: g.clone(),
        g,
        step: StepOperator::Diagonal { nodes: nodes.to_vec(), multipliers },
        dt,
        exactness: Exactness::Approximate,
        cells: nodes.len(),
        label: format!("laplace(kernel={},dt={dt},nodes={})", kernel.name(), nodes.len()),
    };
    if let Some(bound) = bound {
        let error = lift.max_relative_error(kernel, &bound.probes())?;
        if !(error <= bound.max_rel_error) {
            return Err(Error::Reconstruction { error, bound: bound.max_rel_error });
        }
    }
    Ok(lift)
}

impl DiscreteLift {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn exactness(&self) -> Exactness {
        self.exactness
    }

    pub fn step_operator(&self) -> &StepOperator {
        &self.step
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_shift(&self) -> bool {
        matches!(self.step, StepOperator::Shift)
    }

    /// Number of grid steps the lift is valid for (`None` when unbounded).
    pub fn max_steps(&self) -> Option<usize> {
        self.is_shift().then_some(self.cells)
    }

    /// Window part of `g` for shift lifts (the per-cell integrals of `g`).
    pub fn cell_weights(&self) -> &[f64] {
        if self.is_shift() {
            &self.g[self.cells..]
        } else {
            &self.g
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: len });
        }
        Ok(())
    }

    /// `⟨g, z⟩`.
    pub fn pair(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z.len())?;
        Ok(self.pair_unchecked(z))
    }

    pub(crate) fn pair_unchecked(&self, z: &[f64]) -> f64 {
        match self.step {
            // Reservoir weights are zero.
            StepOperator::Shift => dot(&self.g[self.cells..], &z[self.cells..]),
            StepOperator::Diagonal { .. } => dot(&self.g, z),
        }
    }

    /// `⟨g, E^m z⟩` without forming `E^m z`.
    pub fn forecast(&self, z: &[f64], m: usize) -> Result<f64> {
        self.check_dim(z.len())?;
        Ok(self.forecast_unchecked(z, m))
    }

    pub(crate) fn forecast_unchecked(&self, z: &[f64], m: usize) -> f64 {
        match &self.step {
            StepOperator::Shift => {
                let d = self.dim();
                if m >= d {
                    return 0.0;
                }
                let start = self.cells.max(m);
                dot(&self.g[start..], &z[start - m..d - m])
            }
            StepOperator::Diagonal { nodes, .. } => {
                let tau = m as f64 * self.dt;
                nodes
                    .iter()
                    .zip(&self.g)
                    .zip(z)
                    .map(|((&x, &g), &v)| g * v * (-x * tau).exp())
                    .sum()
            }
        }
    }

    /// `⟨g, E^{t/Δt} ν⟩` for shift lifts (grid times only), or
    /// `Σ g_j ν_j e^{-x_j t}` for Laplace lifts.
    pub fn reconstruct_kernel(&self, t: f64) -> Result<f64> {
        match &self.step {
            StepOperator::Shift => {
                let k = grid_index(t, self.dt).ok_or(Error::OffGrid { t, dt: self.dt })?;
                if k > self.cells {
                    return Err(Error::Domain { t, horizon: self.cells as f64 * self.dt });
                }
                Ok(self.forecast_unchecked(&self.nu, k))
            }
            StepOperator::Diagonal { nodes, .. } => {
                if t < 0.0 {
                    return Err(Error::Domain { t, horizon: f64::INFINITY });
                }
                Ok(nodes
                    .iter()
                    .zip(self.g.iter().zip(&self.nu))
                    .map(|(&x, (&g, &n))| g * n * (-x * t).exp())
                    .sum())
            }
        }
    }

    /// Kernel values `K̂(kΔt)` for `k = 0..=n_steps`.
    pub fn kernel_grid(&self, n_steps: usize) -> Result<Vec<f64>> {
        (0..=n_steps).map(|k| self.reconstruct_kernel(k as f64 * self.dt)).collect()
    }

    pub fn max_relative_error(&self, kernel: &Kernel, probes: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &t in probes {
            let exact = kernel.eval(t)?;
            let approx = self.reconstruct_kernel(t)?;
            worst = worst.max((approx - exact).abs() / exact.abs().max(1e-300));
        }
        Ok(worst)
    }

    /// Applies `E` once.
    pub fn semigroup_step(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(state.len())?;
        let mut out = state.to_vec();
        self.step_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn step_in_place(&self, state: &mut [f64]) {
        match &self.step {
            StepOperator::Shift => {
                state.copy_within(..state.len() - 1, 1);
                state[0] = 0.0;
            }
            StepOperator::Diagonal { multipliers, .. } => {
                for (v, m) in state.iter_mut().zip(multipliers) {
                    *v *= m;
                }
            }
        }
    }

    /// `(E z)[c]`.
    pub(crate) fn stepped_coord_unchecked(&self, z: &[f64], c: usize) -> f64 {
        match &self.step {
            StepOperator::Shift => {
                if c == 0 {
                    0.0
                } else {
                    z[c - 1]
                }
            }
            StepOperator::Diagonal { multipliers, .. } => multipliers[c] * z[c],
        }
    }

    /// Applies `E^m` in place.
    pub fn step_n_in_place(&self, state: &mut [f64], m: usize) {
        match &self.step {
            StepOperator::Shift => {
                let d = state.len();
                if m >= d {
                    state.fill(0.0);
                } else if m > 0 {
                    state.copy_within(..d - m, m);
                    state[..m].fill(0.0);
                }
            }
            StepOperator::Diagonal { nodes, .. } => {
                let tau = m as f64 * self.dt;
                for (v, &x) in state.iter_mut().zip(nodes) {
                    *v *= (-x * tau).exp();
                }
            }
        }
    }

    /// Finds `ζ` with `⟨g, E^k ζ⟩ = x0(t_k)` for `k = 0..=n_steps`.
    ///
    /// Shift lifts solve the lower-triangular system exactly (needs
    /// `g_0 ≠ 0`); Laplace lifts use ridge-regularized least squares, so the
    /// embedding is approximate there. Returns `(ζ, max residual)`.
    pub fn embed_initial_curve(&self, x0: &[f64]) -> Result<(Vec<f64>, f64)> {
        if x0.is_empty() {
            return Err(Error::Invalid("initial curve needs at least one grid value".into()));
        }
        let mut zeta = vec![0.0; self.dim()];
        match &self.step {
            StepOperator::Shift => {
                let n = self.cells;
                if x0.len() > n + 1 {
                    return Err(Error::Invalid(format!(
                        "initial curve has {} grid values but the lift covers {} steps",
                        x0.len() - 1,
                        n
                    )));
                }
                let gw = self.cell_weights();
                if gw[0] == 0.0 {
                    return Err(Error::Invalid("g_0 = 0: initial curve cannot be embedded".into()));
                }
                // a_j = ζ[n - j]
                let mut a = vec![0.0; x0.len()];
                for k in 0..x0.len() {
                    // cells past the window have been shifted out
                    let tail: f64 = (1..=k.min(n - 1)).map(|m| gw[m] * a[k - m]).sum();
                    a[k] = (x0[k] - tail) / gw[0];
                }
                for (j, &v) in a.iter().enumerate() {
                    zeta[n - j] = v;
                }
            }
            StepOperator::Diagonal { nodes, .. } => {
                let rows = x0.len();
                let d = self.dim();
                let a = DMatrix::from_fn(rows, d, |k, j| {
                    self.g[j] * (-nodes[j] * k as f64 * self.dt).exp()
                });
                let ata = a.transpose() * &a;
                let ridge = 1e-12 * ata.trace() / d as f64;
                let lhs = ata + DMatrix::identity(d, d) * ridge;
                let rhs = a.transpose() * DVector::from_column_slice(x0);
                let sol = lhs
                    .cholesky()
                    .ok_or_else(|| Error::Invalid("initial-curve normal equations not positive definite".into()))?
                    .solve(&rhs);
                zeta.copy_from_slice(sol.as_slice());
            }
        }
        let mut residual: f64 = 0.0;
        for (k, &target) in x0.iter().enumerate() {
            residual = residual.max((self.forecast_unchecked(&zeta, k) - target).abs());
        }
        Ok((zeta, residual))
    }

    /// Lift dump: `index,g_vec,nu_vec,step` where `step` is the multiplier
    /// (Laplace) or `shift`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,g_vec,nu_vec,step")?;
        for i in 0..self.dim() {
            match &self.step {
                StepOperator::Shift => writeln!(out, "{i},{},{},shift", self.g[i], self.nu[i])?,
                StepOperator::Diagonal { multipliers, .. } => {
                    writeln!(out, "{i},{},{},{}", self.g[i], self.nu[i], multipliers[i])?
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
