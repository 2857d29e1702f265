use std::path::Path;
use std::process::{Command, Output};

use vlift_cli::ExperimentConfig;

fn vlift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlift")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// Small problems so every command runs in well under a second.
const SMALL: &str = "[grid]\nn_steps = 16\nn_paths = 1000\n[checks]\nrandom_policies = 4\n";

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn print_config_round_trips_with_overrides() {
    let o = vlift(&["--print-config", "--seed", "7", "--paths", "123", "--steps", "8"]);
    assert_eq!(code(&o), 0);
    let cfg = ExperimentConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!((cfg.grid.seed, cfg.grid.n_paths, cfg.grid.n_steps), (7, 123, 8));
    let mut d = ExperimentConfig::default();
    d.grid.seed = 7;
    d.grid.n_paths = 123;
    d.grid.n_steps = 8;
    assert_eq!(cfg, d);
}

#[test]
fn config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    // empty grid
    assert_eq!(code(&vlift(&["--out", out, "--steps", "0", "lift-check"])), 1);
    // unknown key
    let bad = write_config(tmp.path(), "[grid]\nstep = 3\n");
    assert_eq!(code(&vlift(&["--config", &bad, "--out", out, "lift-check"])), 1);
    // missing file, unknown verb, no verb
    assert_eq!(code(&vlift(&["--config", "/nonexistent.toml", "lift-check"])), 1);
    assert_eq!(code(&vlift(&["frobnicate"])), 1);
    assert_eq!(code(&vlift(&["--out", out])), 1);
    // unknown problem and a laplace lift for the sqrt kernel
    let bad = write_config(tmp.path(), "[problem]\nname = \"nope\"\n");
    assert_eq!(code(&vlift(&["--config", &bad, "--out", out, "solve"])), 1);
    let bad = write_config(tmp.path(), "[lift]\nkind = \"laplace\"\n");
    assert_eq!(code(&vlift(&["--config", &bad, "--out", out, "lift-check"])), 1);
    assert_eq!(code(&vlift(&["--help"])), 0);
}

#[test]
fn lift_check_sqrt_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = vlift(&["--out", out.to_str().unwrap(), "--steps", "128", "lift-check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("lift_check.csv"));
    assert_eq!(rows.len(), 129);
    for r in &rows {
        let t: f64 = r[0].parse().unwrap();
        let k_hat: f64 = r[2].parse().unwrap();
        assert!((k_hat - t.sqrt()).abs() <= 1e-12, "{r:?}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = lift-check") && manifest.contains("status = pass"));
    assert!(manifest.contains("wall_time_s = ") && manifest.contains("[config]"));
    assert!(!out.join(".vlift.lock").exists());
}

#[test]
fn under_resolved_laplace_lift_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(
        tmp.path(),
        "[kernel]\nspec = \"laplace(eps=0.5)\"\n[lift]\nkind = \"laplace\"\nnodes = 8\n[checks]\nmax_rel_err = 1e-6\n",
    );
    let o = vlift(&["--config", &cfg, "--out", out.to_str().unwrap(), "lift-check"]);
    assert_eq!(code(&o), 2);
    assert!(std::fs::read_to_string(out.join("manifest.txt")).unwrap().contains("status = violation"));
    // 64 nodes meet the default bound
    let cfg = write_config(tmp.path(), "[kernel]\nspec = \"laplace(eps=0.5)\"\n[lift]\nkind = \"laplace\"\n");
    assert_eq!(code(&vlift(&["--config", &cfg, "--out", out.to_str().unwrap(), "lift-check"])), 0);
}

#[test]
fn simulate_equivalence_and_negative_control() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}[problem]\nstate_sigma = true\n"));
    assert_eq!(code(&vlift(&["--config", &cfg, "--out", out, "simulate"])), 0);
    let sup = csv_rows(&Path::new(out).join("equivalence.csv"))
        .iter()
        .map(|r| r[2].parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(sup <= 1e-10);
    let ens = vlift::forward_sim::io::read_binary(std::fs::File::open(Path::new(out).join("lifted.bin")).unwrap()).unwrap();
    assert_eq!((ens.n_paths(), ens.n_steps()), (1000, 16));

    // SMALL ends inside its [checks] table
    let forced = write_config(tmp.path(), &format!("{SMALL}force_seed_mismatch = true\n"));
    assert_eq!(code(&vlift(&["--config", &forced, "--out", out, "simulate"])), 2);

    let laplace = write_config(tmp.path(), "[kernel]\nspec = \"laplace(eps=0.5)\"\n[lift]\nkind = \"laplace\"\n[grid]\nn_steps = 16\nn_paths = 200\n");
    let o = vlift(&["--config", &laplace, "--out", out, "simulate"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: approximate lift"));
}

#[test]
fn busy_output_directory_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join(".vlift.lock"), "1\n").unwrap();
    let o = vlift(&["--out", tmp.path().to_str().unwrap(), "lift-check"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("in use"));
}

#[test]
fn solve_writes_bundles_that_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg_path = write_config(tmp.path(), SMALL);
    let o = vlift(&["--config", &cfg_path, "--out", out.to_str().unwrap(), "solve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = ExperimentConfig::load(Path::new(&cfg_path)).unwrap();
    let s = cfg.scenario().unwrap();
    for method in ["lsmc", "picard"] {
        let stored = vlift::persist::load_bundle(&out.join(method), &s.problem, &s.lift).unwrap();
        assert_eq!(stored.method(), method);
    }
    let rows = csv_rows(&out.join("agreement.csv"));
    assert_eq!(rows[0][0], "lsmc_minus_picard");
    assert!(rows.iter().all(|r| r[5] == "true"), "{rows:?}");
    assert!(!csv_rows(&out.join("picard_deltas.csv")).is_empty());
}

#[test]
fn optimize_lq_smooth_has_interior_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(tmp.path(), &format!("{SMALL}[problem]\nname = \"lq_smooth\"\n"));
    let o = vlift(&["--config", &cfg, "--out", out.to_str().unwrap(), "optimize"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // F = u², R = u on [−1, 1]: u = −q̃/2 stays strictly inside
    let trace = csv_rows(&out.join("policy_trace.csv"));
    assert_eq!(trace.len(), 8 * 17);
    for r in trace.iter().filter(|r| !r[4].is_empty()) {
        let u: f64 = r[4].parse().unwrap();
        assert!(u > -1.0 && u < 0.0, "{r:?}");
    }
    let verification = std::fs::read_to_string(out.join("verification.csv")).unwrap();
    assert_eq!(verification.lines().count(), 1 + 4 + 2 + 1);
}

fn quantity(path: &Path, name: &str) -> f64 {
    csv_rows(path).into_iter().find(|r| r[0] == name).unwrap()[1].parse().unwrap()
}

#[test]
fn consumption_example_variants() {
    let tmp = tempfile::tempdir().unwrap();
    // K(t) = 1/(t + ε) with its Laplace lift
    let out = tmp.path().join("eps");
    let cfg = write_config(
        tmp.path(),
        &format!("{SMALL}[kernel]\nspec = \"laplace(eps=0.5)\"\n[lift]\nkind = \"laplace\"\n").replace("n_paths = 1000", "n_paths = 4000"),
    );
    let o = vlift(&["--config", &cfg, "--out", out.to_str().unwrap(), "consumption-example"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(quantity(&out.join("comparison.csv"), "frac_c_bar"), 1.0);

    // a1 = 0: only the terminal term matters, which c̄ minimizes
    let out = tmp.path().join("a1");
    let cfg = write_config(tmp.path(), &format!("{SMALL}[problem]\na1 = 0.0\n").replace("n_paths = 1000", "n_paths = 4000"));
    let o = vlift(&["--config", &cfg, "--out", out.to_str().unwrap(), "consumption-example"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(quantity(&out.join("optimize/control_summary.csv"), "frac_u_upper"), 1.0);
    for r in csv_rows(&out.join("optimize/policy_trace.csv")).iter().filter(|r| !r[4].is_empty()) {
        assert_eq!(r[4], "1");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for verb in ["lift-check", "simulate", "solve", "optimize"] {
        let a = tmp.path().join(format!("{verb}-a"));
        let b = tmp.path().join(format!("{verb}-b"));
        assert_eq!(code(&vlift(&["--config", &cfg, "--out", a.to_str().unwrap(), verb])), 0);
        assert_eq!(code(&vlift(&["--config", &cfg, "--out", b.to_str().unwrap(), verb])), 0);
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            let (pa, pb) = (a.join(&name), b.join(&name));
            if pa.is_file() && name != "manifest.txt" {
                assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap(), "{verb}: {name:?}");
            }
        }
    }
}

#[test]
fn seed_override_changes_the_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&vlift(&["--config", &cfg, "--out", a.to_str().unwrap(), "simulate"])), 0);
    assert_eq!(code(&vlift(&["--config", &cfg, "--seed", "2", "--out", b.to_str().unwrap(), "simulate"])), 0);
    assert_ne!(std::fs::read(a.join("paths.csv")).unwrap(), std::fs::read(b.join("paths.csv")).unwrap());
    assert!(std::fs::read_to_string(b.join("manifest.txt")).unwrap().contains("seed = 2"));
}
