//! Experiment configuration (TOML) and the scenario it describes.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use vlift::bsde_solver::Basis;
use vlift::control_core::catalog::{consumption_problem, lq_smooth_problem, Scenario, ScenarioParams};
use vlift::control_core::DEFAULT_K_R;
use vlift::hjb_value::PicardConfig;
use vlift::kernel_lift::{build_laplace_lift, build_shift_lift, default_laplace_quadrature, DiscreteLift, Kernel, KernelKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelConfig,
    pub lift: LiftConfig,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub basis: BasisConfig,
    pub checks: ChecksConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// `sqrt`, `laplace(eps=0.5)` or `exp(lambda=2)`.
    pub spec: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftKind {
    Shift,
    Laplace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    pub kind: LiftKind,
    pub horizon: f64,
    /// Quadrature nodes of a Laplace lift.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// `consumption` or `lq_smooth`.
    pub name: String,
    pub a1: f64,
    pub a2: f64,
    pub c_bar: f64,
    pub sigma0: f64,
    pub x_bar: f64,
    pub k_r: f64,
    pub state_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// `T`; the step is `T / n_steps`.
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lsmc,
    Picard,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub picard_rounds: usize,
    pub picard_tol: f64,
    pub probe_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub x_degree: usize,
    pub forecast_degree: usize,
    pub cross: bool,
    pub coords: Vec<usize>,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    /// Bound on `|K − K̂|` at grid times for grid-exact lifts.
    pub max_abs_err: f64,
    /// Bound on `|K − K̂|/|K|` for approximate lifts, on `t ≥ check_from`.
    pub max_rel_err: f64,
    pub check_from: f64,
    /// Bound on `sup |X_direct − ⟨g,Z⟩|` for grid-exact lifts.
    pub equivalence_tol: f64,
    /// Negative control: simulate the direct scheme on a different seed.
    pub force_seed_mismatch: bool,
    /// Half constant, half affine.
    pub random_policies: usize,
    pub trace_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { spec: "sqrt".into() }
    }
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self { kind: LiftKind::Shift, horizon: 1.0, nodes: 64 }
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            name: "consumption".into(),
            a1: p.a1,
            a2: p.a2,
            c_bar: p.c_bar,
            sigma0: p.sigma0,
            x_bar: p.x_bar,
            k_r: DEFAULT_K_R,
            state_sigma: false,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { horizon: 1.0, n_steps: 64, n_paths: 10_000, seed: 1 }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PicardConfig::default();
        Self { method: Method::Both, picard_rounds: p.max_rounds, picard_tol: p.tol, probe_paths: p.probe_paths }
    }
}

impl Default for BasisConfig {
    fn default() -> Self {
        let b = Basis::default();
        Self { x_degree: b.x_degree, forecast_degree: b.forecast_degree, cross: b.cross, coords: b.coords, ridge: b.ridge }
    }
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            max_abs_err: 1e-12,
            max_rel_err: 1e-3,
            check_from: 0.1,
            equivalence_tol: 1e-10,
            force_seed_mismatch: false,
            random_policies: 20,
            trace_paths: 8,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dt(&self) -> f64 {
        self.grid.horizon / self.grid.n_steps as f64
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let g = &self.grid;
        if g.n_steps == 0 {
            bail!("grid.n_steps must be positive (empty grid)");
        }
        if g.n_paths == 0 {
            bail!("grid.n_paths must be positive");
        }
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            bail!("grid.horizon must be positive, got {}", g.horizon);
        }
        if g.horizon > self.lift.horizon * (1.0 + 1e-12) {
            bail!("grid.horizon {} exceeds lift.horizon {}", g.horizon, self.lift.horizon);
        }
        if !["consumption", "lq_smooth"].contains(&self.problem.name.as_str()) {
            bail!("unknown problem `{}` (known: consumption, lq_smooth)", self.problem.name);
        }
        if self.solver.picard_rounds == 0 {
            bail!("solver.picard_rounds must be positive");
        }
        if self.lift.kind == LiftKind::Laplace && self.lift.nodes == 0 {
            bail!("lift.nodes must be positive for a laplace lift");
        }
        self.basis().validate(usize::MAX).map_err(anyhow::Error::from)?;
        Ok(())
    }

    pub fn params(&self) -> ScenarioParams {
        let p = &self.problem;
        ScenarioParams {
            a1: p.a1,
            a2: p.a2,
            c_bar: p.c_bar,
            sigma0: p.sigma0,
            x_bar: p.x_bar,
            horizon: self.grid.horizon,
            k_r: p.k_r,
            state_sigma: p.state_sigma,
            ..ScenarioParams::default()
        }
    }

    pub fn basis(&self) -> Basis {
        let b = &self.basis;
        Basis {
            x_degree: b.x_degree,
            forecast_degree: b.forecast_degree,
            cross: b.cross,
            coords: b.coords.clone(),
            ridge: b.ridge,
        }
    }

    pub fn picard(&self) -> PicardConfig {
        PicardConfig {
            max_rounds: self.solver.picard_rounds,
            tol: self.solver.picard_tol,
            probe_paths: self.solver.probe_paths,
        }
    }

    pub fn kernel(&self) -> anyhow::Result<Kernel> {
        Ok(Kernel::from_name(&self.kernel.spec, self.lift.horizon)?)
    }

    pub fn build_lift(&self, kernel: &Kernel) -> anyhow::Result<DiscreteLift> {
        let dt = self.dt();
        Ok(match self.lift.kind {
            LiftKind::Shift => build_shift_lift(kernel, dt, self.lift.horizon)?,
            LiftKind::Laplace => {
                let (x, w) = match kernel.kind() {
                    KernelKind::Laplace { eps } => default_laplace_quadrature(*eps, self.lift.nodes)?,
                    KernelKind::Exponential { lambda } => (vec![*lambda], vec![1.0]),
                    _ => bail!("a laplace lift needs a laplace or exp kernel, got `{}`", kernel.name()),
                };
                build_laplace_lift(kernel, &x, &w, dt, None)?
            }
        })
    }

    /// Kernel, lift, problem and embedded initial state.
    pub fn scenario(&self) -> anyhow::Result<Scenario> {
        self.validate()?;
        let kernel = self.kernel()?;
        let dt = self.dt();
        let lift = self.build_lift(&kernel)?;
        let params = self.params();
        let mut problem = match self.problem.name.as_str() {
            "consumption" => consumption_problem(&params)?,
            _ => lq_smooth_problem(&params)?,
        };
        problem.name = self.problem.name.clone();
        let x0 = problem.coeffs.initial_curve(problem.t0, dt, self.grid.n_steps);
        let (zeta0, _) = lift.embed_initial_curve(&x0)?;
        Ok(Scenario { problem, kernel, lift, zeta0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_defaults_parse_back() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = ExperimentConfig::from_toml("[grid]\nn_steps = 8\n[solver]\nmethod = \"picard\"\n").unwrap();
        assert_eq!(cfg.grid.n_steps, 8);
        assert_eq!(cfg.grid.seed, 1);
        assert_eq!(cfg.solver.method, Method::Picard);
        assert!(ExperimentConfig::from_toml("[grid]\nsteps = 8\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.grid.n_steps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.grid.horizon = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.lift.kind = LiftKind::Laplace;
        assert!(cfg.scenario().is_err());
        cfg.kernel.spec = "laplace(eps=0.5)".into();
        assert_eq!(cfg.scenario().unwrap().lift.dim(), 64);
    }
}
