//! The five experiment verbs. Each writes its tables under the output
//! directory and records tolerance violations in a [`Report`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::Subcommand;
use vlift::bsde_solver::{solve_lsmc, BsdeSolution, ValueModel};
use vlift::control_core::catalog::{consumption_optimal_value, Scenario};
use vlift::control_core::{evaluate_cost, random_policies, ConstantPolicy, Policy};
use vlift::forward_sim::{io, simulate_direct, simulate_lifted, BrownianGrid, PathEnsemble, Phase, RecordOptions, Uncontrolled};
use vlift::hjb_value::{closed_loop_simulate, picard_mild_solve, verify_value_inequality, ValueFunction};
use vlift::kernel_lift::Exactness;
use vlift::persist::{save_lsmc, save_picard};
use vlift::stats::MeanEstimate;

use crate::config::{ExperimentConfig, Method};
use crate::output::{create, DirLock, Table, MANIFEST};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Kernel reconstruction table `t,K,K_hat,abs_err,rel_err`.
    LiftCheck,
    /// Direct and lifted simulation on shared noise, with the equivalence report.
    Simulate,
    /// Value by LSMC and/or Picard, persisted, with the cross-method report.
    Solve,
    /// Feedback policy, closed loop and verification against random policies.
    Optimize,
    /// Full optimal-consumption bundle with the closed-form comparison.
    ConsumptionExample,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::LiftCheck => "lift-check",
            Command::Simulate => "simulate",
            Command::Solve => "solve",
            Command::Optimize => "optimize",
            Command::ConsumptionExample => "consumption-example",
        }
    }
}

/// Files written, checks failed and warnings raised by one command.
#[derive(Debug, Default)]
pub struct Report {
    root: PathBuf,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
    pub violations: Vec<String>,
}

impl Report {
    fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), ..Self::default() }
    }

    /// Path of output `name` inside subdirectory `sub` (may be empty).
    fn file(&mut self, sub: &str, name: &str) -> Result<PathBuf> {
        let dir = self.root.join(sub);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        self.outputs.push(if sub.is_empty() { name.to_string() } else { format!("{sub}/{name}") });
        Ok(dir.join(name))
    }

    fn check(&mut self, ok: bool, what: String) {
        if !ok {
            self.violations.push(what);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs `cmd` into `out` under an exclusive lock and writes `manifest.txt`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    cfg.validate()?;
    let _lock = DirLock::acquire(out)?;
    let start = Instant::now();
    let mut rep = Report::new(out);
    let result = match cmd {
        Command::LiftCheck => lift_check(cfg, "", &mut rep),
        Command::Simulate => simulate(cfg, "", &mut rep),
        Command::Solve => solve(cfg, "", &mut rep).map(|_| ()),
        Command::Optimize => optimize(cfg, "", &mut rep).map(|_| ()),
        Command::ConsumptionExample => consumption_example(cfg, &mut rep),
    };
    let error = result.as_ref().err().map(|e| format!("{e:#}"));
    write_manifest(cmd, cfg, &rep, error.as_deref(), start.elapsed().as_secs_f64())?;
    result.map(|_| rep)
}

fn write_manifest(cmd: Command, cfg: &ExperimentConfig, rep: &Report, error: Option<&str>, wall: f64) -> Result<()> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(s, "{k} = {v}").expect("string write");
    kv("command", &cmd.name());
    kv("version", &env!("CARGO_PKG_VERSION"));
    kv("seed", &cfg.grid.seed);
    kv("status", &if error.is_some() { "error" } else if rep.passed() { "pass" } else { "violation" });
    if let Some(e) = error {
        kv("error", &e);
    }
    for o in &rep.outputs {
        kv("output", o);
    }
    for n in &rep.notes {
        kv("note", n);
    }
    for w in &rep.warnings {
        kv("warning", w);
    }
    for v in &rep.violations {
        kv("violation", v);
    }
    kv("wall_time_s", &format!("{wall:.3}"));
    kv("timestamp_unix", &stamp);
    s.push_str("\n[config]\n");
    s.push_str(&cfg.to_toml());
    std::fs::write(rep.root.join(MANIFEST), s).context("writing manifest")
}

fn grid(cfg: &ExperimentConfig, s: &Scenario, phase: Phase, seed: u64, paths: usize) -> Result<BrownianGrid> {
    let t0 = s.problem.t0;
    Ok(BrownianGrid::generate(t0, t0 + cfg.grid.horizon, cfg.grid.n_steps, paths, seed, phase)?)
}

/// The driverless forward ensemble shared by both solvers.
fn forward(cfg: &ExperimentConfig, s: &Scenario) -> Result<PathEnsemble> {
    let g = grid(cfg, s, Phase::Forward, cfg.grid.seed, cfg.grid.n_paths)?;
    let record = RecordOptions { store_z: false, coords: cfg.basis.coords.clone() };
    Ok(simulate_lifted(&s.problem.coeffs, &s.lift, &Uncontrolled, &g, &s.zeta0, &record)?)
}

pub fn lift_check(cfg: &ExperimentConfig, sub: &str, rep: &mut Report) -> Result<()> {
    let kernel = cfg.kernel()?;
    let lift = cfg.build_lift(&kernel)?;
    let n = cfg.grid.n_steps;
    let dt = cfg.dt();
    let exact = lift.exactness() == Exactness::GridExact;
    let mut table = Table::new(&["t", "K", "K_hat", "abs_err", "rel_err"]);
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for k in 0..=n {
        let t = if k == n { cfg.grid.horizon } else { k as f64 * dt };
        let exact_k = kernel.eval(t)?;
        let approx = lift.reconstruct_kernel(t)?;
        let abs = (approx - exact_k).abs();
        let rel = if exact_k == 0.0 { abs } else { abs / exact_k.abs() };
        table.row(&[&t, &exact_k, &approx, &abs, &rel]);
        max_abs = max_abs.max(abs);
        if t >= cfg.checks.check_from - 1e-12 {
            max_rel = max_rel.max(rel);
        }
    }
    table.write(&rep.file(sub, "lift_check.csv")?)?;
    let mut w = create(&rep.file(sub, "lift.csv")?)?;
    lift.write_csv(&mut w)?;
    if exact {
        rep.notes.push(format!("{}: max abs error {max_abs:e} at grid times", lift.label()));
        rep.check(max_abs <= cfg.checks.max_abs_err, format!("lift max abs error {max_abs:e} > {:e}", cfg.checks.max_abs_err));
    } else {
        rep.notes.push(format!("{}: max rel error {max_rel:e} on t >= {}", lift.label(), cfg.checks.check_from));
        rep.check(max_rel <= cfg.checks.max_rel_err, format!("lift max rel error {max_rel:e} > {:e}", cfg.checks.max_rel_err));
    }
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig, sub: &str, rep: &mut Report) -> Result<()> {
    let s = cfg.scenario()?;
    let n = cfg.grid.n_steps;
    let dt = cfg.dt();
    let shared = grid(cfg, &s, Phase::Forward, cfg.grid.seed, cfg.grid.n_paths)?;
    let lifted = simulate_lifted(&s.problem.coeffs, &s.lift, &Uncontrolled, &shared, &s.zeta0, &RecordOptions::default())?;
    let direct_grid = if cfg.checks.force_seed_mismatch {
        rep.warnings.push("direct scheme runs on seed + 1 (forced mismatch)".into());
        grid(cfg, &s, Phase::Forward, cfg.grid.seed.wrapping_add(1), cfg.grid.n_paths)?
    } else {
        shared
    };
    let kernel_grid: Vec<f64> = (0..=n).map(|k| s.kernel.eval(k as f64 * dt)).collect::<vlift::Result<_>>()?;
    let direct = simulate_direct(&s.problem.coeffs, &kernel_grid, &Uncontrolled, &direct_grid)?;

    let paths: Vec<usize> = (0..lifted.n_paths()).filter(|&p| !lifted.is_flagged(p) && !direct.is_flagged(p)).collect();
    let mut table = Table::new(&["step", "t", "max_abs_diff", "mean_abs_diff"]);
    let mut sup = 0.0f64;
    for k in 0..=n {
        let diffs: Vec<f64> = paths.iter().map(|&p| (direct.x(p, k) - lifted.x(p, k)).abs()).collect();
        let max = diffs.iter().copied().fold(0.0, f64::max);
        let mean = diffs.iter().sum::<f64>() / diffs.len().max(1) as f64;
        table.row(&[&k, &lifted.grid.time(k), &max, &mean]);
        sup = sup.max(max);
    }
    table.write(&rep.file(sub, "equivalence.csv")?)?;

    let mut trace = Table::new(&["path_id", "step", "t", "x_direct", "x_lifted"]);
    for &p in paths.iter().take(cfg.checks.trace_paths) {
        for k in 0..=n {
            trace.row(&[&p, &k, &lifted.grid.time(k), &direct.x(p, k), &lifted.x(p, k)]);
        }
    }
    trace.write(&rep.file(sub, "paths.csv")?)?;
    io::write_binary(&lifted, create(&rep.file(sub, "lifted.bin")?)?)?;
    io::write_binary(&direct, create(&rep.file(sub, "direct.bin")?)?)?;

    rep.notes.push(format!("sup |X_direct - <g,Z>| = {sup:e} over {} paths", paths.len()));
    if s.lift.exactness() == Exactness::GridExact {
        rep.check(sup <= cfg.checks.equivalence_tol, format!("pathwise equivalence {sup:e} > {:e}", cfg.checks.equivalence_tol));
    } else {
        rep.warnings.push(format!("approximate lift: equivalence is report-only (sup {sup:e})"));
    }
    Ok(())
}

/// Closed-form optimal value and its O(Δt^{1/2}) band, where one exists.
fn closed_form(cfg: &ExperimentConfig, s: &Scenario) -> Option<(f64, f64)> {
    let p = cfg.params();
    if cfg.problem.name != "consumption" || p.state_sigma {
        return None;
    }
    let j = consumption_optimal_value(&p, &s.kernel).ok()?;
    Some((j, p.a2 * p.sigma0 * p.c_bar * cfg.dt().sqrt()))
}

pub struct Solved {
    pub scenario: Scenario,
    pub lsmc: Option<BsdeSolution>,
    pub picard: Option<ValueFunction>,
}

fn agreement_row(table: &mut Table, rep: &mut Report, name: &str, est: MeanEstimate, reference: f64, tol: f64) {
    let ok = (est.mean - reference).abs() <= tol;
    table.row(&[&name, &est.mean, &est.se, &reference, &tol, &ok]);
    rep.check(ok, format!("{name}: |{} - {reference}| > {tol}", est.mean));
}

pub fn solve(cfg: &ExperimentConfig, sub: &str, rep: &mut Report) -> Result<Solved> {
    let s = cfg.scenario()?;
    let basis = cfg.basis();
    basis.validate(s.lift.dim())?;
    let ens = forward(cfg, &s)?;
    let method = cfg.solver.method;
    let lsmc = match method {
        Method::Picard => None,
        _ => {
            let sol = solve_lsmc(&ens, &s.problem, &s.lift, &basis)?;
            let dir = rep.file(sub, "lsmc")?;
            save_lsmc(&sol, &dir)?;
            Some(sol)
        }
    };
    let picard = match method {
        Method::Lsmc => None,
        _ => {
            let vf = picard_mild_solve(&ens, &s.problem, &s.lift, &basis, &cfg.picard())?;
            let dir = rep.file(sub, "picard")?;
            save_picard(&vf, &dir)?;
            let mut t = Table::new(&["round", "delta"]);
            for (i, d) in vf.deltas.iter().enumerate() {
                t.row(&[&(i + 1), d]);
            }
            t.write(&rep.file(sub, "picard_deltas.csv")?)?;
            Some(vf)
        }
    };

    let mut table = Table::new(&["quantity", "value", "se", "reference", "tolerance", "passed"]);
    if let (Some(a), Some(b)) = (&lsmc, &picard) {
        let diff = MeanEstimate { mean: a.value.mean - b.value.mean, se: a.value.combined_se(&b.value), n: a.value.n };
        agreement_row(&mut table, rep, "lsmc_minus_picard", diff, 0.0, 2.0 * diff.se);
    }
    if let Some((j, band)) = closed_form(cfg, &s) {
        for (name, est) in [("lsmc_value", lsmc.as_ref().map(|x| x.value)), ("picard_value", picard.as_ref().map(|x| x.value))] {
            if let Some(est) = est {
                agreement_row(&mut table, rep, name, est, j, 3.0 * est.se + band);
            }
        }
    } else {
        for (name, est) in [("lsmc_value", lsmc.as_ref().map(|x| x.value)), ("picard_value", picard.as_ref().map(|x| x.value))] {
            if let Some(est) = est {
                table.row(&[&name, &est.mean, &est.se, &"", &"", &""]);
            }
        }
    }
    table.write(&rep.file(sub, "agreement.csv")?)?;

    if let Some(a) = &lsmc {
        rep.notes.push(format!("lsmc value {} (se {})", a.value.mean, a.value.se));
    }
    if let Some(vf) = &picard {
        rep.notes.push(format!("picard value {} (se {}) after {} rounds", vf.value.mean, vf.value.se, vf.rounds));
        let d = &vf.deltas;
        let decreasing = d.windows(2).skip(1).all(|w| w[1] < w[0]);
        rep.check(decreasing, format!("picard deltas not decreasing after round 2: {d:?}"));
        if !vf.converged {
            rep.warnings.push(format!("picard stopped after {} rounds without reaching tol {}", vf.rounds, cfg.solver.picard_tol));
        }
    }
    Ok(Solved { scenario: s, lsmc, picard })
}

/// Closed-loop summary used by the consumption bundle.
pub struct Optimized {
    pub value: MeanEstimate,
    pub cost: MeanEstimate,
    pub frac_upper: f64,
    pub frac_lower: f64,
    /// Largest gap of an endpoint policy, in combined standard errors.
    pub worst_endpoint_z: f64,
}

pub fn optimize(cfg: &ExperimentConfig, sub: &str, rep: &mut Report) -> Result<Optimized> {
    let s = cfg.scenario()?;
    let basis = cfg.basis();
    basis.validate(s.lift.dim())?;
    let ens = forward(cfg, &s)?;
    if cfg.solver.method == Method::Lsmc {
        let sol = solve_lsmc(&ens, &s.problem, &s.lift, &basis)?;
        optimize_with(cfg, sub, rep, &s, &sol, sol.value)
    } else {
        let vf = picard_mild_solve(&ens, &s.problem, &s.lift, &basis, &cfg.picard())?;
        optimize_with(cfg, sub, rep, &s, &vf, vf.value)
    }
}

fn optimize_with(
    cfg: &ExperimentConfig,
    sub: &str,
    rep: &mut Report,
    s: &Scenario,
    model: &dyn ValueModel,
    value: MeanEstimate,
) -> Result<Optimized> {
    let problem = &s.problem;
    let n = cfg.grid.n_steps;
    let eval = grid(cfg, s, Phase::Evaluation, cfg.grid.seed, cfg.grid.n_paths)?;
    let closed = closed_loop_simulate(model, &eval, &s.zeta0, &RecordOptions::default())?;
    let cost = evaluate_cost(problem, &closed);

    let valid = closed.valid_paths();
    let (mut upper, mut lower, mut total) = (0usize, 0usize, 0usize);
    for &p in &valid {
        for k in 0..n {
            let u = closed.control(p, k);
            total += 1;
            upper += usize::from(u == problem.u_hi);
            lower += usize::from(u == problem.u_lo);
        }
    }
    let frac_upper = upper as f64 / total.max(1) as f64;
    let frac_lower = lower as f64 / total.max(1) as f64;

    let mut trace = Table::new(&["path_id", "step", "t", "x", "u"]);
    for &p in valid.iter().take(cfg.checks.trace_paths) {
        for k in 0..=n {
            let u = if k < n { closed.control(p, k).to_string() } else { String::new() };
            trace.row(&[&p, &k, &closed.grid.time(k), &closed.x(p, k), &u]);
        }
    }
    trace.write(&rep.file(sub, "policy_trace.csv")?)?;

    let m = cfg.checks.random_policies;
    let x_ref = problem.coeffs.initial_curve(problem.t0, cfg.dt(), 0)[0];
    let random = random_policies(problem, m / 2, m - m / 2, cfg.grid.seed, x_ref);
    let endpoints = [ConstantPolicy(problem.u_lo), ConstantPolicy(problem.u_hi)];
    let mut refs: Vec<&dyn Policy> = random.iter().map(|p| p.as_ref()).collect();
    refs.extend(endpoints.iter().map(|p| p as &dyn Policy));
    let report = verify_value_inequality(model, value, &refs, &eval, &s.zeta0)?;

    let mut table = Table::new(&["label", "cost", "se", "gap", "combined_se", "passed"]);
    for c in report.policies.iter().chain(std::iter::once(&report.feedback)) {
        table.row(&[&c.label, &c.cost.mean, &c.cost.se, &c.gap, &c.combined_se, &c.passed]);
        rep.check(c.passed, format!("{}: cost {} vs value {} (gap {}, se {})", c.label, c.cost.mean, value.mean, c.gap, c.combined_se));
    }
    table.write(&rep.file(sub, "verification.csv")?)?;

    let worst_endpoint_z = report.policies[random.len()..]
        .iter()
        .map(|c| c.gap / c.combined_se)
        .fold(f64::NEG_INFINITY, f64::max);
    rep.check(worst_endpoint_z > 5.0, format!("worst endpoint policy only {worst_endpoint_z:.2} se above the value"));

    let mut summary = Table::new(&["quantity", "value"]);
    summary.row(&[&"value", &value.mean]);
    summary.row(&[&"value_se", &value.se]);
    summary.row(&[&"closed_loop_cost", &cost.mean]);
    summary.row(&[&"closed_loop_se", &cost.se]);
    summary.row(&[&"frac_u_upper", &frac_upper]);
    summary.row(&[&"frac_u_lower", &frac_lower]);
    summary.row(&[&"worst_endpoint_gap_se", &worst_endpoint_z]);
    summary.row(&[&"flagged_paths", &closed.flagged.len()]);
    summary.write(&rep.file(sub, "control_summary.csv")?)?;
    rep.notes.push(format!("closed-loop cost {} (se {}), value {}", cost.mean, cost.se, value.mean));
    Ok(Optimized { value, cost, frac_upper, frac_lower, worst_endpoint_z })
}

pub fn consumption_example(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let mut c = cfg.clone();
    c.problem.name = "consumption".into();
    c.solver.method = Method::Both;
    if c.problem.state_sigma {
        bail!("the consumption bundle needs a constant sigma (problem.state_sigma = false)");
    }
    lift_check(&c, "lift_check", rep)?;
    let solved = solve(&c, "solve", rep)?;
    let s = &solved.scenario;
    let (j, band) = closed_form(&c, s).context("kernel has no closed-form integral")?;
    let vf = solved.picard.as_ref().expect("both methods ran");
    let sol = solved.lsmc.as_ref().expect("both methods ran");
    let opt = optimize_with(&c, "optimize", rep, s, vf, vf.value)?;

    let mut table = Table::new(&["quantity", "value", "se", "reference", "tolerance", "passed"]);
    agreement_row(&mut table, rep, "lsmc_value", sol.value, j, 3.0 * sol.value.se + band);
    agreement_row(&mut table, rep, "picard_value", vf.value, j, 3.0 * vf.value.se + band);
    agreement_row(&mut table, rep, "closed_loop_cost", opt.cost, j, 3.0 * opt.cost.se + band);
    let ok = opt.frac_upper >= 0.99;
    table.row(&[&"frac_c_bar", &opt.frac_upper, &"", &1.0, &0.99, &ok]);
    rep.check(ok, format!("feedback selects c_bar on only {:.4} of states", opt.frac_upper));
    let ok = opt.worst_endpoint_z > 5.0;
    table.row(&[&"worst_endpoint_gap_se", &opt.worst_endpoint_z, &"", &"", &5.0, &ok]);
    table.write(&rep.file("", "comparison.csv")?)?;
    rep.notes.push(format!("J* = {j}, band {band}"));
    Ok(())
}
