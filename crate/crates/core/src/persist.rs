//! Versioned CSV bundle for fitted value functions.
//!
//! A bundle is a directory with `manifest.txt` (`key = value` lines) and one
//! `step_XXXX.csv` per time step with rows `series,term,coefficient`. Series
//! are `p` and `q` for LSMC solutions and `w` for Picard fits.
//! Fit diagnostics are stored as pseudo-terms `@r2`, `@condition`, `@active`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bsde_solver::{Basis, BsdeSolution, LinearFit};
use crate::control_core::ControlProblem;
use crate::error::{Error, Result};
use crate::hjb_value::ValueFunction;
use crate::kernel_lift::DiscreteLift;
use crate::stats::MeanEstimate;

pub const BUNDLE_FORMAT: &str = "vlift-value-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// A reloaded bundle.
#[derive(Debug, Clone)]
pub enum StoredValue {
    Lsmc(BsdeSolution),
    Picard(ValueFunction),
}

impl StoredValue {
    pub fn method(&self) -> &'static str {
        match self {
            StoredValue::Lsmc(_) => "lsmc",
            StoredValue::Picard(_) => "picard",
        }
    }
}

struct Common<'a> {
    method: &'a str,
    problem: &'a ControlProblem,
    lift: &'a DiscreteLift,
    basis: &'a Basis,
    t0: f64,
    n_steps: usize,
    seed: u64,
    value: MeanEstimate,
}

fn manifest(c: &Common, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(s, "{k} = {v}").expect("string write");
    kv("format", &BUNDLE_FORMAT);
    kv("version", &BUNDLE_VERSION);
    kv("method", &c.method);
    kv("problem", &c.problem.name);
    kv("lift", &c.lift.label());
    kv("lift_dim", &c.lift.dim());
    kv("t0", &c.t0);
    kv("dt", &c.lift.dt());
    kv("n_steps", &c.n_steps);
    kv("seed", &c.seed);
    kv("basis", &c.basis.describe());
    kv("terms", &c.basis.terms().join(" "));
    kv("value", &c.value.mean);
    kv("se", &c.value.se);
    kv("n_paths", &c.value.n);
    for (k, v) in extra {
        kv(k, v);
    }
    s
}

fn push_fit(out: &mut String, series: &str, terms: &[String], f: &LinearFit) {
    for (t, c) in terms.iter().zip(&f.coefs) {
        writeln!(out, "{series},{t},{c}").expect("string write");
    }
    writeln!(out, "{series},@r2,{}", f.r2).expect("string write");
    writeln!(out, "{series},@condition,{}", f.condition).expect("string write");
    writeln!(out, "{series},@active,{}", f.active).expect("string write");
}

fn write_bundle(dir: &Path, manifest_text: &str, steps: Vec<String>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.txt"), manifest_text)?;
    for (k, body) in steps.into_iter().enumerate() {
        fs::write(dir.join(format!("step_{k:04}.csv")), format!("series,term,coefficient\n{body}"))?;
    }
    Ok(())
}

pub fn save_lsmc(sol: &BsdeSolution, dir: &Path) -> Result<()> {
    let c = Common {
        method: "lsmc",
        problem: &sol.problem,
        lift: &sol.lift,
        basis: &sol.basis,
        t0: sol.t0,
        n_steps: sol.n_steps,
        seed: sol.seed,
        value: sol.value,
    };
    let m = manifest(&c, &[("sup_p2", sol.sup_p2.to_string()), ("q_energy", sol.q_energy.to_string())]);
    let terms = sol.basis.terms();
    let steps = (0..sol.n_steps)
        .map(|k| {
            let mut s = String::new();
            push_fit(&mut s, "p", &terms, &sol.cond[k]);
            push_fit(&mut s, "q", &terms, &sol.q[k]);
            s
        })
        .collect();
    write_bundle(dir, &m, steps)
}

pub fn save_picard(vf: &ValueFunction, dir: &Path) -> Result<()> {
    let c = Common {
        method: "picard",
        problem: &vf.problem,
        lift: &vf.lift,
        basis: &vf.basis,
        t0: vf.t0,
        n_steps: vf.n_steps,
        seed: vf.seed,
        value: vf.value,
    };
    let deltas: Vec<String> = vf.deltas.iter().map(|d| d.to_string()).collect();
    let m = manifest(
        &c,
        &[
            ("rounds", vf.rounds.to_string()),
            ("converged", vf.converged.to_string()),
            ("deltas", deltas.join(" ")),
        ],
    );
    let terms = vf.basis.terms();
    let steps = (0..vf.n_steps)
        .map(|k| {
            let mut s = String::new();
            push_fit(&mut s, "w", &terms, &vf.fits[k]);
            s
        })
        .collect();
    write_bundle(dir, &m, steps)
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Format(format!("manifest line {}: expected `key = value`", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn field<'m>(m: &'m BTreeMap<String, String>, key: &str) -> Result<&'m str> {
    m.get(key).map(String::as_str).ok_or_else(|| Error::Format(format!("manifest lacks `{key}`")))
}

fn num<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = field(m, key)?;
    v.parse().map_err(|_| Error::Format(format!("manifest `{key}` = `{v}` does not parse")))
}

fn read_step(path: &Path, terms: &[String], series: &[&str]) -> Result<BTreeMap<String, LinearFit>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("series,term,coefficient") {
        return Err(Error::Format(format!("{}: bad header", path.display())));
    }
    let mut fits = BTreeMap::new();
    for s in series {
        fits.insert(
            s.to_string(),
            LinearFit { coefs: vec![f64::NAN; terms.len()], r2: f64::NAN, condition: f64::NAN, active: 0 },
        );
    }
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    for line in lines {
        let mut parts = line.splitn(3, ',');
        let (Some(s), Some(t), Some(v)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(format!("malformed row `{line}`")));
        };
        let value: f64 = v.parse().map_err(|_| bad(format!("bad number `{v}`")))?;
        let f = fits.get_mut(s).ok_or_else(|| bad(format!("unknown series `{s}`")))?;
        match t {
            "@r2" => f.r2 = value,
            "@condition" => f.condition = value,
            "@active" => f.active = value as usize,
            _ => {
                let j = terms.iter().position(|x| x == t).ok_or_else(|| bad(format!("unknown term `{t}`")))?;
                f.coefs[j] = value;
            }
        }
    }
    for (s, f) in &fits {
        if f.coefs.iter().any(|c| c.is_nan()) {
            return Err(bad(format!("series `{s}` is missing coefficients")));
        }
    }
    Ok(fits)
}

/// Reads a bundle written by [`save_lsmc`] or [`save_picard`].
///
/// Closures of the problem cannot be serialized, so the caller supplies the
/// problem and lift; their names must match the manifest.
pub fn load_bundle(dir: &Path, problem: &ControlProblem, lift: &DiscreteLift) -> Result<StoredValue> {
    let m = parse_manifest(&fs::read_to_string(dir.join("manifest.txt"))?)?;
    if field(&m, "format")? != BUNDLE_FORMAT {
        return Err(Error::Format("not a value bundle".into()));
    }
    let version: u32 = num(&m, "version")?;
    if version != BUNDLE_VERSION {
        return Err(Error::Format(format!("unsupported bundle version {version}")));
    }
    if field(&m, "problem")? != problem.name {
        return Err(Error::Invalid(format!("bundle is for problem `{}`, not `{}`", field(&m, "problem")?, problem.name)));
    }
    if field(&m, "lift")? != lift.label() {
        return Err(Error::Invalid(format!("bundle lift `{}` differs from `{}`", field(&m, "lift")?, lift.label())));
    }
    let basis = Basis::parse(field(&m, "basis")?)?;
    basis.validate(lift.dim())?;
    let terms = basis.terms();
    let n_steps: usize = num(&m, "n_steps")?;
    let t0: f64 = num(&m, "t0")?;
    let seed: u64 = num(&m, "seed")?;
    let value = MeanEstimate { mean: num(&m, "value")?, se: num(&m, "se")?, n: num(&m, "n_paths")? };
    let method = field(&m, "method")?;
    let series: &[&str] = match method {
        "lsmc" => &["p", "q"],
        "picard" => &["w"],
        other => return Err(Error::Format(format!("unknown method `{other}`"))),
    };
    let mut recs = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        recs.push(read_step(&dir.join(format!("step_{k:04}.csv")), &terms, series)?);
    }
    let mut take = |s: &str| -> Vec<LinearFit> { recs.iter_mut().map(|r| r.remove(s).expect("series present")).collect() };
    Ok(match method {
        "lsmc" => StoredValue::Lsmc(BsdeSolution {
            problem: problem.clone(),
            lift: lift.clone(),
            basis,
            t0,
            n_steps,
            seed,
            cond: take("p"),
            q: take("q"),
            value,
            diagnostics: Vec::new(),
            sup_p2: num(&m, "sup_p2")?,
            q_energy: num(&m, "q_energy")?,
        }),
        _ => {
            let deltas = field(&m, "deltas")?
                .split_whitespace()
                .map(|d| d.parse().map_err(|_| Error::Format(format!("bad delta `{d}`"))))
                .collect::<Result<Vec<f64>>>()?;
            StoredValue::Picard(ValueFunction {
                problem: problem.clone(),
                lift: lift.clone(),
                basis,
                t0,
                n_steps,
                seed,
                fits: take("w"),
                    value,
                deltas,
                rounds: num(&m, "rounds")?,
                converged: num(&m, "converged")?,
            })
        }
    })
}
