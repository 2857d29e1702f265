use std::fmt;
use std::sync::Arc;

use crate::kernel_lift::RealFn;

/// Map `(t, x) → ℝ`.
pub type CoefFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Drift, volatility and initial curve of the Volterra equation
/// `X_t = x0(t) + ∫ K(t-s)(β + σR) ds + ∫ K(t-s) σ dW`.
#[derive(Clone)]
pub struct VolterraCoefficients {
    pub beta: CoefFn,
    pub sigma: CoefFn,
    pub x0: RealFn,
    /// Optional `∂β/∂x` and `∂σ/∂x`; central differences are used otherwise.
    pub dbeta: Option<CoefFn>,
    pub dsigma: Option<CoefFn>,
    pub lipschitz_hint: Option<f64>,
}

impl fmt::Debug for VolterraCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolterraCoefficients")
            .field("lipschitz_hint", &self.lipschitz_hint)
            .finish_non_exhaustive()
    }
}

/// Relative step of the finite-difference derivative fallback.
pub const FD_STEP: f64 = 1e-6;

pub(crate) fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = FD_STEP * (1.0 + x.abs());
    (f(x + h) - f(x - h)) / (2.0 * h)
}

impl VolterraCoefficients {
    pub fn new(beta: CoefFn, sigma: CoefFn, x0: RealFn) -> Self {
        Self { beta, sigma, x0, dbeta: None, dsigma: None, lipschitz_hint: None }
    }

    pub fn constant(beta: f64, sigma: f64, x0: f64) -> Self {
        let mut c = Self::new(Arc::new(move |_, _| beta), Arc::new(move |_, _| sigma), Arc::new(move |_| x0));
        c.dbeta = Some(Arc::new(|_, _| 0.0));
        c.dsigma = Some(Arc::new(|_, _| 0.0));
        c.lipschitz_hint = Some(0.0);
        c
    }

    pub fn with_derivatives(mut self, dbeta: CoefFn, dsigma: CoefFn) -> Self {
        self.dbeta = Some(dbeta);
        self.dsigma = Some(dsigma);
        self
    }

    pub fn d_beta(&self, t: f64, x: f64) -> f64 {
        match &self.dbeta {
            Some(d) => d(t, x),
            None => central_diff(|y| (self.beta)(t, y), x),
        }
    }

    pub fn d_sigma(&self, t: f64, x: f64) -> f64 {
        match &self.dsigma {
            Some(d) => d(t, x),
            None => central_diff(|y| (self.sigma)(t, y), x),
        }
    }

    /// `x0(t0 + kΔt)` for `k = 0..=n`.
    pub fn initial_curve(&self, t0: f64, dt: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| (self.x0)(t0 + k as f64 * dt)).collect()
    }

    /// Advisory probe of the standing hypotheses on a box `[t0,t1] × [-r, r]`:
    /// returns the smallest `c` with `|β| + |σ| ≤ c(1 + |x|)` on the probe
    /// points, and `false` when any coefficient is non-finite there.
    pub fn growth_probe(&self, t0: f64, t1: f64, r: f64) -> (f64, bool) {
        let mut c: f64 = 0.0;
        let mut finite = true;
        for i in 0..=16 {
            let t = t0 + (t1 - t0) * i as f64 / 16.0;
            for j in 0..=32 {
                let x = -r + 2.0 * r * j as f64 / 32.0;
                let b = (self.beta)(t, x);
                let s = (self.sigma)(t, x);
                if !(b.is_finite() && s.is_finite()) {
                    finite = false;
                    continue;
                }
                c = c.max((b.abs() + s.abs()) / (1.0 + x.abs()));
            }
        }
        (c, finite)
    }
}

/// Supplies the control and the controlled drift `R` to the simulators.
pub trait Controller: Sync {
    /// Control applied on `[t_k, t_{k+1})`. `z` is the lifted state when the
    /// simulator has one.
    fn control(&self, step: usize, t: f64, x: f64, z: Option<&[f64]>) -> f64;

    /// `R(t, x, u)`, already clamped.
    fn drift(&self, t: f64, x: f64, u: f64) -> f64;

    /// Whether `control` needs the lifted state.
    fn needs_state(&self) -> bool {
        false
    }
}

/// `R ≡ 0`, `u ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uncontrolled;

impl Controller for Uncontrolled {
    fn control(&self, _: usize, _: f64, _: f64, _: Option<&[f64]>) -> f64 {
        0.0
    }

    fn drift(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_fallback() {
        let c = VolterraCoefficients::new(
            Arc::new(|_, x: f64| x.sin()),
            Arc::new(|_, x: f64| 0.2 * (1.0 + 0.3 * x.sin())),
            Arc::new(|_| 0.0),
        );
        assert!((c.d_beta(0.0, 0.4) - 0.4f64.cos()).abs() < 1e-9);
        assert!((c.d_sigma(0.0, 0.4) - 0.06 * 0.4f64.cos()).abs() < 1e-9);
        let k = VolterraCoefficients::constant(1.0, 2.0, 0.0);
        assert_eq!(k.d_beta(0.3, 5.0), 0.0);
        let (g, finite) = k.growth_probe(0.0, 1.0, 10.0);
        assert!(finite && (g - 3.0).abs() < 1e-12);
    }
}
