use std::sync::Arc;

use vlift::control_core::catalog::{scenario, ScenarioParams};
use vlift::control_core::{ConstantPolicy, ProblemController};
use vlift::forward_sim::*;
use vlift::kernel_lift::*;

fn state_sigma_coeffs(x0: f64) -> VolterraCoefficients {
    VolterraCoefficients::new(
        Arc::new(|_, x: f64| 0.1 * x.cos()),
        Arc::new(|_, x: f64| 1.0 + 0.3 * x.sin()),
        Arc::new(move |_| x0),
    )
    .with_derivatives(Arc::new(|_, x: f64| -0.1 * x.sin()), Arc::new(|_, x: f64| 0.3 * x.cos()))
}

/// Sample variance of the terminal values and its standard error.
fn terminal_variance(ens: &PathEnsemble) -> (f64, f64) {
    let n = ens.n_steps();
    let xs: Vec<f64> = (0..ens.n_paths()).map(|p| ens.x(p, n)).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let e = vlift::stats::MeanEstimate::from_samples(&sq);
    (e.mean, e.se)
}

fn sqrt_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|k| (k as f64 / n as f64).sqrt()).collect()
}

#[test]
fn pathwise_equivalence_of_direct_and_lifted_schemes() {
    let params = ScenarioParams { state_sigma: true, ..ScenarioParams::default() };
    let s = scenario("consumption_sqrt", &params, 128).unwrap();
    let grid = BrownianGrid::generate(0.0, 1.0, 128, 100, 11, Phase::Forward).unwrap();
    let policy = ConstantPolicy(0.7);
    let ctl = ProblemController::new(&s.problem, &policy);
    let direct = simulate_direct(&s.problem.coeffs, &s.lift.kernel_grid(128).unwrap(), &ctl, &grid).unwrap();
    let lifted = simulate_lifted(&s.problem.coeffs, &s.lift, &ctl, &grid, &s.zeta0, &RecordOptions::default()).unwrap();
    let sup = direct.x.iter().zip(&lifted.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(sup <= 1e-10, "sup error {sup}");
}

#[test]
fn exponential_kernel_lift_matches_markovian_sde() {
    // K(t) = e^{-λt}: X_{k+1} = x0 + e^{-λΔt}(X_k - x0 + β Δt + σ ΔW_k) with x0 constant
    // is the one-factor recursion the single-node lift must reproduce.
    let lambda = 1.5;
    let k = Kernel::exponential(lambda, 1.0).unwrap();
    let lift = build_laplace_lift(&k, &[lambda], &[1.0], 1.0 / 64.0, None).unwrap();
    let coeffs = state_sigma_coeffs(0.0);
    let grid = BrownianGrid::generate(0.0, 1.0, 64, 20, 3, Phase::Forward).unwrap();
    let zeta0 = vec![0.0];
    let ens = simulate_lifted(&coeffs, &lift, &Uncontrolled, &grid, &zeta0, &RecordOptions::default()).unwrap();
    let decay = (-lambda / 64.0).exp();
    for p in 0..20 {
        let dw = grid.path(p);
        let mut y: f64 = 0.0;
        for kk in 0..64 {
            let t = grid.time(kk);
            y = decay * (y + 0.1 * y.cos() * grid.dt + (1.0 + 0.3 * y.sin()) * dw[kk]);
            let got = ens.x(p, kk + 1);
            assert!((got - y).abs() <= 1e-10, "path {p} step {kk} t={t}: {got} vs {y}");
        }
    }
}

#[test]
fn degenerate_coefficients_follow_initial_curve() {
    let coeffs = VolterraCoefficients::constant(0.0, 0.0, 1.0);
    let grid = BrownianGrid::generate(0.0, 1.0, 16, 4, 1, Phase::Forward).unwrap();
    let direct = simulate_direct(&coeffs, &sqrt_grid(16), &Uncontrolled, &grid).unwrap();
    assert!(direct.x.iter().all(|&x| x == 1.0));
}

#[test]
fn riemann_sum_of_drift() {
    // β = 1, σ = 0, x0 = 0: X_N = Σ_j √((N−j)Δt) Δt, left-point sum of ∫ √(T−s) ds.
    let coeffs = VolterraCoefficients::constant(1.0, 0.0, 0.0);
    let mut errs = Vec::new();
    for n in [64usize, 256, 1024] {
        let grid = BrownianGrid::generate(0.0, 1.0, n, 1, 1, Phase::Forward).unwrap();
        let ens = simulate_direct(&coeffs, &sqrt_grid(n), &Uncontrolled, &grid).unwrap();
        let dt = 1.0 / n as f64;
        let oracle: f64 = (0..n).map(|j| ((n - j) as f64 * dt).sqrt() * dt).sum();
        assert!((ens.x(0, n) - oracle).abs() < 1e-12);
        errs.push((ens.x(0, n) - 2.0 / 3.0).abs());
    }
    for w in errs.windows(2) {
        // a factor 4 in Δt at rate ≥ 1/2 at least halves the error
        assert!(w[1] <= 0.55 * w[0], "{errs:?}");
    }
}

#[test]
fn terminal_variance_matches_ito_isometry() {
    // Discrete oracle: Var X_N = Σ_j K((N−j)Δt)² Δt = Σ_m mΔt² = T²/2 + TΔt/2.
    let n = 256;
    let dt = 1.0 / n as f64;
    let coeffs = VolterraCoefficients::constant(0.0, 1.0, 0.0);
    let kg = sqrt_grid(n);
    let mut xs = Vec::with_capacity(100_000);
    for batch in 0..10u64 {
        let grid = BrownianGrid::generate_range(0.0, 1.0, n, batch * 10_000, 10_000, 5, Phase::Forward).unwrap();
        let ens = simulate_direct(&coeffs, &kg, &Uncontrolled, &grid).unwrap();
        xs.extend((0..ens.n_paths()).map(|p| ens.x(p, n)));
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let v = vlift::stats::MeanEstimate::from_samples(&sq);
    let discrete: f64 = (1..=n).map(|m| m as f64 * dt * dt).sum();
    assert!((discrete - (0.5 + 0.5 * dt)).abs() < 1e-14);
    assert!((v.mean - discrete).abs() <= 3.0 * v.se, "{v:?} vs {discrete}");
    assert!((v.mean - 0.5).abs() <= 3.0 * v.se, "{v:?}");
}

#[test]
fn weak_error_rate_on_coupled_resolutions() {
    // Finest increments are summed pairwise for the coarser grids, so the
    // Monte Carlo noise largely cancels in successive differences.
    let n_fine = 256;
    let paths = 20_000;
    let fine = BrownianGrid::generate(0.0, 1.0, n_fine, paths, 8, Phase::Forward).unwrap();
    let coeffs = VolterraCoefficients::constant(0.0, 1.0, 0.0);
    let mut vars = Vec::new();
    let mut incs = fine.increments().to_vec();
    let mut n = n_fine;
    for _ in 0..3 {
        let grid = BrownianGrid::from_increments(0.0, 1.0, n, incs.clone()).unwrap();
        let ens = simulate_direct(&coeffs, &sqrt_grid(n), &Uncontrolled, &grid).unwrap();
        vars.push(terminal_variance(&ens).0);
        incs = incs.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        n /= 2;
    }
    // vars: Δt = 1/256, 1/128, 1/64
    let d_fine = vars[1] - vars[0];
    let d_coarse = vars[2] - vars[1];
    let rate = (d_coarse / d_fine).log2();
    assert!(rate >= 0.4, "observed rate {rate} from {vars:?}");
}

#[test]
fn malliavin_identity_with_state_dependent_sigma() {
    let n = 1000;
    let k = Kernel::sqrt(1.0);
    let lift = build_shift_lift(&k, 1.0 / n as f64, 1.0).unwrap();
    let coeffs = state_sigma_coeffs(0.3);
    let x0 = coeffs.initial_curve(0.0, lift.dt(), n);
    let (zeta0, _) = lift.embed_initial_curve(&x0).unwrap();
    let grid = BrownianGrid::generate(0.0, 1.0, n, 4, 21, Phase::Forward).unwrap();
    let mut ok = 0;
    let mut total = 0;
    for p in 0..4 {
        for (s, tau) in [(0, 500), (100, 101), (250, 900), (400, 1000), (700, 800)] {
            let r = malliavin_bump_check(&coeffs, &lift, &Uncontrolled, 0.0, grid.path(p), &zeta0, s, tau).unwrap();
            total += 1;
            ok += usize::from(r.rel_error <= 1e-2);
        }
    }
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
}

#[test]
fn tangent_bump_error_is_higher_order() {
    let n = 128;
    let lift = build_shift_lift(&Kernel::sqrt(1.0), 1.0 / n as f64, 1.0).unwrap();
    let coeffs = state_sigma_coeffs(0.2);
    let (zeta0, _) = lift.embed_initial_curve(&coeffs.initial_curve(0.0, lift.dt(), n)).unwrap();
    let grid = BrownianGrid::generate(0.0, 1.0, n, 1, 2, Phase::Forward).unwrap();
    let h: Vec<f64> = (0..lift.dim()).map(|i| ((i as f64) * 0.37).sin()).collect();
    let tan = tangent_process(&coeffs, &lift, &Uncontrolled, 0.0, grid.path(0), &zeta0, &h).unwrap();
    let (base, _) = simulate_path(&coeffs, &lift, &Uncontrolled, 0.0, grid.path(0), &zeta0, 0, n).unwrap();
    let remainder = |eps: f64| {
        let z1: Vec<f64> = zeta0.iter().zip(&h).map(|(z, v)| z + eps * v).collect();
        let (bumped, _) = simulate_path(&coeffs, &lift, &Uncontrolled, 0.0, grid.path(0), &z1, 0, n).unwrap();
        let last = &bumped[n];
        last.iter().zip(&base[n]).zip(&tan[n]).map(|((b, a), t)| (b - a - eps * t).abs()).fold(0.0, f64::max)
    };
    let (r4, r5) = (remainder(1e-4), remainder(1e-5));
    // o(ε): shrinking ε tenfold shrinks the remainder by far more than tenfold
    assert!(r5 < r4 / 30.0, "{r4} {r5}");
}

#[test]
fn moment_ratios_are_stable_across_scales() {
    let s = scenario("lq_smooth", &ScenarioParams::default(), 64).unwrap();
    let grid = BrownianGrid::generate(0.0, 1.0, 64, 10_000, 4, Phase::Forward).unwrap();
    let r = moment_diagnostic(&s.problem.coeffs, &s.lift, &Uncontrolled, &grid, &s.zeta0, &[2, 4], &[1.0, 2.0, 5.0, 10.0])
        .unwrap();
    assert!(!r.unbounded);
    for p in [2, 4] {
        let ratios: Vec<f64> = r.rows.iter().filter(|row| row.p == p).map(|row| row.ratio).collect();
        assert!(ratios.iter().all(|v| v.is_finite()));
        let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 3.0, "p={p}: {ratios:?}");
    }
}

#[test]
fn ensembles_are_bit_identical_across_runs() {
    let s = scenario("lq_smooth", &ScenarioParams::default(), 32).unwrap();
    let run = || {
        let grid = BrownianGrid::generate(0.0, 1.0, 32, 500, 99, Phase::Forward).unwrap();
        simulate_lifted(&s.problem.coeffs, &s.lift, &Uncontrolled, &grid, &s.zeta0, &RecordOptions::full()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let za = a.lifted.unwrap().z.unwrap();
    let zb = b.lifted.unwrap().z.unwrap();
    assert!(za.iter().zip(&zb).all(|(x, y)| x.to_bits() == y.to_bits()));
}
