//! `H(t, z, ξ) = inf_{u ∈ U} [F^g(t,z,u) + (ξ·ν) R^g(t,z,u)]` with its
//! minimizer set and a deterministic selection.

use super::problem::ControlProblem;
use crate::error::{Error, Result};
use crate::kernel_lift::{dot, DiscreteLift};

pub const SCAN_POINTS: usize = 257;
/// Width of the final golden-section bracket.
pub const U_TOL: f64 = 1e-8;
/// Values within this of the infimum belong to the argmin set.
pub const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianResult {
    pub value: f64,
    /// Minimizers in increasing order.
    pub argmin_set: Vec<f64>,
    pub selected: f64,
}

/// The measurable selection: smallest minimizer.
pub fn gamma_select(res: &HamiltonianResult) -> Result<f64> {
    res.argmin_set.first().copied().ok_or(Error::EmptyArgmin)
}

fn objective(problem: &ControlProblem, t: f64, x: f64, coupling: f64) -> impl Fn(f64) -> f64 + '_ {
    move |u| problem.running_cost(t, x, u) + coupling * problem.r_clamped(t, x, u)
}

fn finish(mut candidates: Vec<(f64, f64)>) -> Result<HamiltonianResult> {
    if let Some(&(u, _)) = candidates.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("Hamiltonian objective at u = {u}")));
    }
    let value = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    candidates.retain(|c| c.1 <= value + VALUE_TOL);
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Points closer than U_TOL are one minimizer, represented by its best value.
    let mut clusters: Vec<(f64, f64)> = Vec::with_capacity(candidates.len());
    let mut anchor = f64::NEG_INFINITY;
    for (u, v) in candidates {
        match clusters.last_mut() {
            Some(best) if u - anchor <= U_TOL => {
                if v < best.1 {
                    *best = (u, v);
                }
            }
            _ => {
                clusters.push((u, v));
                anchor = u;
            }
        }
    }
    let argmin_set: Vec<f64> = clusters.into_iter().map(|c| c.0).collect();
    let selected = *argmin_set.first().ok_or(Error::EmptyArgmin)?;
    Ok(HamiltonianResult { value, argmin_set, selected })
}

/// Hamiltonian at physical state `x` with scalar costate coupling `ξ·ν`.
pub fn hamiltonian_at(problem: &ControlProblem, t: f64, x: f64, coupling: f64) -> Result<HamiltonianResult> {
    if let Some(res) = closed_form(problem, t, x, coupling) {
        return res;
    }
    scan(problem, t, x, coupling)
}

/// Hamiltonian at lifted state `z` and costate `xi` (lift coordinates).
pub fn hamiltonian(problem: &ControlProblem, lift: &DiscreteLift, t: f64, z: &[f64], xi: &[f64]) -> Result<HamiltonianResult> {
    if xi.len() != lift.dim() {
        return Err(Error::Dimension { expected: lift.dim(), got: xi.len() });
    }
    let x = lift.pair(z)?;
    hamiltonian_at(problem, t, x, dot(xi, lift.nu()))
}

/// Closed form for quadratic `F` and affine `R` that stays inside the clamp.
fn closed_form(problem: &ControlProblem, t: f64, x: f64, coupling: f64) -> Option<Result<HamiltonianResult>> {
    let s = problem.structure?;
    let (lo, hi) = (problem.u_lo, problem.u_hi);
    let r_max = (s.r1 * lo + s.r0).abs().max((s.r1 * hi + s.r0).abs());
    if r_max > problem.k_r {
        return None;
    }
    let phi = objective(problem, t, x, coupling);
    let b = s.f1 + coupling * s.r1;
    let points: Vec<f64> = if s.f2 > 0.0 {
        vec![(-b / (2.0 * s.f2)).clamp(lo, hi)]
    } else if s.f2 == 0.0 && b > 0.0 {
        vec![lo]
    } else if s.f2 == 0.0 && b < 0.0 {
        vec![hi]
    } else {
        // concave or flat: the infimum sits on the boundary
        vec![lo, hi]
    };
    Some(finish(points.into_iter().map(|u| (u, phi(u))).collect()))
}

/// Grid scan with golden-section refinement of every local minimum.
pub fn scan(problem: &ControlProblem, t: f64, x: f64, coupling: f64) -> Result<HamiltonianResult> {
    let phi = objective(problem, t, x, coupling);
    let (lo, hi) = (problem.u_lo, problem.u_hi);
    if lo == hi {
        return finish(vec![(lo, phi(lo))]);
    }
    let us: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let vals: Vec<f64> = us.iter().map(|&u| phi(u)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("Hamiltonian objective at u = {}", us[i])));
    }
    let last = SCAN_POINTS - 1;
    let mut candidates = Vec::new();
    for i in 0..SCAN_POINTS {
        let left = i == 0 || vals[i] <= vals[i - 1];
        let right = i == last || vals[i] <= vals[i + 1];
        if !(left && right) {
            continue;
        }
        candidates.push((us[i], vals[i]));
        let a = us[i.saturating_sub(1)];
        let b = us[(i + 1).min(last)];
        let u = golden_section(&phi, a, b);
        candidates.push((u, phi(u)));
    }
    finish(candidates)
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > U_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::control_core::QuadAffine;
    use crate::forward_sim::VolterraCoefficients;

    fn problem(f: impl Fn(f64) -> f64 + Send + Sync + 'static, r: impl Fn(f64) -> f64 + Send + Sync + 'static, u: (f64, f64)) -> ControlProblem {
        ControlProblem::new(
            "test",
            VolterraCoefficients::constant(0.0, 1.0, 0.0),
            Arc::new(move |_, _, u| r(u)),
            Arc::new(move |_, _, u| f(u)),
            Arc::new(|x| x),
            u,
            10.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn concave_endpoint_example() {
        // Consumption enters the drift as R(c) = -c, so with unit coupling
        // φ(c) = -c² - c on [0, 1]: φ(0) = 0, φ(1) = -2.
        for p in [
            problem(|c| -c * c, |c| -c, (0.0, 1.0)),
            problem(|c| -c * c, |c| -c, (0.0, 1.0)).with_structure(QuadAffine { f2: -1.0, f1: 0.0, r1: -1.0, r0: 0.0 }),
        ] {
            let h = hamiltonian_at(&p, 0.0, 0.0, 1.0).unwrap();
            assert!((h.value + 2.0).abs() < 1e-12);
            assert_eq!(h.argmin_set, vec![1.0]);
            assert_eq!(gamma_select(&h).unwrap(), 1.0);
            let h0 = hamiltonian_at(&p, 0.0, 0.0, 0.0).unwrap();
            assert!((h0.value + 1.0).abs() < 1e-12);
            assert_eq!(h0.argmin_set, vec![1.0]);
        }
    }

    #[test]
    fn interior_minimum() {
        let p = problem(|u| u * u, |u| u, (-1.0, 1.0));
        let h = scan(&p, 0.0, 0.0, 1.0).unwrap();
        assert!((h.selected + 0.5).abs() < 1e-7, "{}", h.selected);
        assert!((h.value + 0.25).abs() < 1e-12);
        let q = p.clone().with_structure(QuadAffine { f2: 1.0, f1: 0.0, r1: 1.0, r0: 0.0 });
        let c = hamiltonian_at(&q, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(c.argmin_set, vec![-0.5]);
        assert!((c.value + 0.25).abs() < 1e-15);
    }

    #[test]
    fn ties_select_smallest() {
        // φ(u) = -(u - 1/2)² has equal endpoint values.
        let p = problem(|u| -(u - 0.5) * (u - 0.5), |_| 0.0, (0.0, 1.0));
        let h = hamiltonian_at(&p, 0.0, 0.0, 0.3).unwrap();
        assert_eq!(h.argmin_set.len(), 2);
        assert_eq!(gamma_select(&h).unwrap(), 0.0);
        let s = p.with_structure(QuadAffine { f2: -1.0, f1: 1.0, r1: 0.0, r0: 0.0 });
        assert_eq!(hamiltonian_at(&s, 0.0, 0.0, 0.3).unwrap().argmin_set, vec![0.0, 1.0]);
        let empty = HamiltonianResult { value: 0.0, argmin_set: vec![], selected: 0.0 };
        assert!(matches!(gamma_select(&empty), Err(Error::EmptyArgmin)));
    }

    #[test]
    fn flat_objective_keeps_whole_grid() {
        let p = problem(|_| 1.0, |_| 0.0, (0.0, 1.0));
        let h = scan(&p, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(h.selected, 0.0);
        assert!(h.argmin_set.len() >= SCAN_POINTS);
    }

    #[test]
    fn clamp_disables_closed_form() {
        // R = 20u clamps at K_R = 10, so the scan must see the kink.
        let p = problem(|u| u * u, |u| 20.0 * u, (-1.0, 1.0)).with_structure(QuadAffine { f2: 1.0, f1: 0.0, r1: 20.0, r0: 0.0 });
        let h = hamiltonian_at(&p, 0.0, 0.0, 1.0).unwrap();
        let s = scan(&p, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(h, s);
        // φ = u² - 10 left of the kink at u = -1/2, increasing right of it
        assert!((h.value + 9.75).abs() < 1e-9);
        assert!((h.selected + 0.5).abs() < 1e-7);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let p = problem(|u| if u > 0.5 { f64::NAN } else { u }, |_| 0.0, (0.0, 1.0));
        assert!(matches!(hamiltonian_at(&p, 0.0, 0.0, 0.0), Err(Error::NonFinite(_))));
    }
}
