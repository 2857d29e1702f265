//! Gauss–Legendre rules and a small adaptive integrator.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Maps the `[-1, 1]` rule onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&xi| mid + half * xi).collect(),
        w.iter().map(|&wi| half * wi).collect(),
    )
}

const PANEL_NODES: usize = 15;
const MAX_DEPTH: usize = 48;

/// Adaptive bisection with a 15-point Gauss–Legendre panel rule.
///
/// Endpoints are never evaluated, so integrable endpoint singularities are
/// tolerated (slowly). Prefer [`integrate_sqrt_singular`] when the singularity
/// is of `x^{-1/2}` type.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (x, w) = gauss_legendre(PANEL_NODES);
    let panel = |lo: f64, hi: f64| -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        x.iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * f(mid + half * xi))
            .sum::<f64>()
            * half
    };
    let whole = panel(a, b);
    refine(&panel, a, b, whole, tol, 0)
}

fn refine<P: Fn(f64, f64) -> f64>(panel: &P, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let mid = 0.5 * (a + b);
    let left = panel(a, mid);
    let right = panel(mid, b);
    let split = left + right;
    if depth >= MAX_DEPTH || (split - whole).abs() <= tol {
        return split;
    }
    refine(panel, a, mid, left, 0.5 * tol, depth + 1) + refine(panel, mid, b, right, 0.5 * tol, depth + 1)
}

/// Integrates over `[a, b]` after the substitution `x = a + s²`, which removes
/// an `(x - a)^{-1/2}` singularity at the left endpoint.
pub fn integrate_sqrt_singular<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let top = (b - a).sqrt();
    integrate(|s| 2.0 * s * f(a + s * s), 0.0, top, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let (_, w) = gauss_legendre_on(12, 2.0, 5.0);
        assert!((w.iter().sum::<f64>() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_inverse_sqrt() {
        let v = integrate_sqrt_singular(|x| 0.5 / x.sqrt(), 0.0, 0.81, 1e-12);
        assert!((v - 0.9).abs() < 1e-11);
        let v = integrate(|x| (-x).exp(), 0.0, 3.0, 1e-12);
        assert!((v - (1.0 - (-3.0f64).exp())).abs() < 1e-12);
    }
}
