use super::brownian::BrownianGrid;
use super::coefficients::{Controller, VolterraCoefficients};
use super::simulate::{simulate_lifted, RecordOptions};
use crate::error::Result;
use crate::kernel_lift::DiscreteLift;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub scale: f64,
    pub p: u32,
    /// `Ê[sup_k ‖Z_k‖^p] / (1 + ‖ζ‖^p)`, max norm.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// Set when, for some `p`, the ratio grows more than 10× across a sweep
    /// whose scales span at least a factor 10.
    pub unbounded: bool,
}

/// Growth diagnostic of the lifted state over rescaled initial states `s·ζ`.
pub fn moment_diagnostic(
    coeffs: &VolterraCoefficients,
    lift: &DiscreteLift,
    controller: &dyn Controller,
    grid: &BrownianGrid,
    zeta0: &[f64],
    powers: &[u32],
    scales: &[f64],
) -> Result<MomentReport> {
    let zeta_norm = zeta0.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    let mut rows = Vec::new();
    for &s in scales {
        let zeta: Vec<f64> = zeta0.iter().map(|v| v * s).collect();
        let ens = simulate_lifted(coeffs, lift, controller, grid, &zeta, &RecordOptions::default())?;
        let w = ens.n_steps() + 1;
        let sups: Vec<f64> = ens
            .valid_paths()
            .iter()
            .map(|&i| {
                (0..w).fold(0.0, |a: f64, k| a.max(ens.sup_norm(i, k).unwrap_or(f64::NAN)))
            })
            .collect();
        for &p in powers {
            let mean = sups.iter().map(|v| v.powi(p as i32)).sum::<f64>() / sups.len().max(1) as f64;
            rows.push(MomentRow { scale: s, p, ratio: mean / (1.0 + (s * zeta_norm).powi(p as i32)) });
        }
    }
    let mut unbounded = false;
    let (lo, hi) = scales
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s.abs()), hi.max(s.abs())));
    if hi >= 10.0 * lo {
        for &p in powers {
            let ratios: Vec<f64> = rows.iter().filter(|r| r.p == p).map(|r| r.ratio).collect();
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = ratios.iter().cloned().fold(0.0, f64::max);
            if !max.is_finite() || max > 10.0 * min {
                unbounded = true;
            }
        }
    }
    Ok(MomentReport { rows, unbounded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_sim::{Phase, Uncontrolled};
    use crate::kernel_lift::{build_shift_lift, Kernel};

    #[test]
    fn frozen_flow_ratio_at_most_one() {
        let lift = build_shift_lift(&Kernel::sqrt(1.0), 1.0 / 16.0, 1.0).unwrap();
        let grid = BrownianGrid::generate(0.0, 1.0, 16, 20, 2, Phase::Forward).unwrap();
        let (zeta, _) = lift.embed_initial_curve(&[1.0; 17]).unwrap();
        let coeffs = VolterraCoefficients::constant(0.0, 0.0, 1.0);
        let r = moment_diagnostic(&coeffs, &lift, &Uncontrolled, &grid, &zeta, &[2, 4], &[1.0, 2.0, 5.0, 10.0])
            .unwrap();
        assert_eq!(r.rows.len(), 8);
        assert!(r.rows.iter().all(|row| row.ratio <= 1.0));
    }
}
