use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forward_sim::VolterraCoefficients;
use crate::kernel_lift::{DiscreteLift, RealFn};

/// Map `(t, x, u) → ℝ`.
pub type ControlFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// `F = f2 u² + f1 u + (terms free of u)`, `R = r1 u + r0`, with constant
/// coefficients. Lets the Hamiltonian use its closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadAffine {
    pub f2: f64,
    pub f1: f64,
    pub r1: f64,
    pub r0: f64,
}

/// Default bound on the controlled drift `R`.
pub const DEFAULT_K_R: f64 = 10.0;

/// Controlled Volterra problem: minimize `E[∫ F(t, X, u) dt + G(X_T)]`
/// subject to `X = x0 + ∫K(β + σR(u))ds + ∫Kσ dW`, `u ∈ [u_lo, u_hi]`.
#[derive(Clone)]
pub struct ControlProblem {
    pub name: String,
    pub coeffs: VolterraCoefficients,
    pub r: ControlFn,
    pub running: ControlFn,
    pub terminal: RealFn,
    pub u_lo: f64,
    pub u_hi: f64,
    pub k_r: f64,
    pub t0: f64,
    pub horizon: f64,
    pub structure: Option<QuadAffine>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("u", &(self.u_lo, self.u_hi))
            .field("k_r", &self.k_r)
            .field("t0", &self.t0)
            .field("horizon", &self.horizon)
            .field("structure", &self.structure)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        coeffs: VolterraCoefficients,
        r: ControlFn,
        running: ControlFn,
        terminal: RealFn,
        (u_lo, u_hi): (f64, f64),
        k_r: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(u_lo.is_finite() && u_hi.is_finite()) {
            return Err(Error::Invalid("control set must be a bounded interval".into()));
        }
        if u_lo > u_hi {
            return Err(Error::Invalid(format!("empty control set [{u_lo}, {u_hi}]")));
        }
        if !(k_r > 0.0) {
            return Err(Error::Invalid(format!("K_R must be positive, got {k_r}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            name: name.into(),
            coeffs,
            r,
            running,
            terminal,
            u_lo,
            u_hi,
            k_r,
            t0: 0.0,
            horizon,
            structure: None,
        })
    }

    pub fn with_structure(mut self, s: QuadAffine) -> Self {
        self.structure = Some(s);
        self
    }

    pub fn project(&self, u: f64) -> f64 {
        u.clamp(self.u_lo, self.u_hi)
    }

    /// `R` clamped to `[-K_R, K_R]`.
    pub fn r_clamped(&self, t: f64, x: f64, u: f64) -> f64 {
        (self.r)(t, x, u).clamp(-self.k_r, self.k_r)
    }

    pub fn running_cost(&self, t: f64, x: f64, u: f64) -> f64 {
        (self.running)(t, x, u)
    }

    pub fn terminal_cost(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    /// Largest `|R|` (before clamping) over a probe box; compare with `K_R`.
    pub fn r_probe(&self, x_range: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=8 {
            let t = self.t0 + self.horizon * i as f64 / 8.0;
            for j in 0..=16 {
                let x = -x_range + 2.0 * x_range * j as f64 / 16.0;
                for l in 0..=16 {
                    let u = self.u_lo + (self.u_hi - self.u_lo) * l as f64 / 16.0;
                    worst = worst.max((self.r)(t, x, u).abs());
                }
            }
        }
        worst
    }
}

/// Costs composed with the pairing: `F^g(t, Z, u) = F(t, ⟨g,Z⟩, u)`,
/// `G^g(Z) = G(⟨g,Z⟩)`.
#[derive(Clone, Copy)]
pub struct LiftedCost<'a> {
    pub problem: &'a ControlProblem,
    pub lift: &'a DiscreteLift,
}

pub fn lift_cost<'a>(problem: &'a ControlProblem, lift: &'a DiscreteLift) -> LiftedCost<'a> {
    LiftedCost { problem, lift }
}

impl LiftedCost<'_> {
    pub fn running(&self, t: f64, z: &[f64], u: f64) -> Result<f64> {
        Ok(self.problem.running_cost(t, self.lift.pair(z)?, u))
    }

    pub fn terminal(&self, z: &[f64]) -> Result<f64> {
        Ok(self.problem.terminal_cost(self.lift.pair(z)?))
    }
}
