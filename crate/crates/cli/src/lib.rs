//! Config-driven experiments over the `vlift` library.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Command, Report};
pub use config::ExperimentConfig;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Exit code for a failed command. Library errors caused by bad input map
/// to 1; numerical breakdowns map to 2 along with tolerance violations.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    use vlift::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Domain { .. } | E::OffGrid { .. } | E::Dimension { .. } | E::Invalid(_) | E::Format(_) | E::Io(_) => EXIT_CONFIG,
                E::Singularity
                | E::Reconstruction { .. }
                | E::NonFinite(_)
                | E::EnsembleAborted { .. }
                | E::RankDeficient { .. }
                | E::Exploded { .. }
                | E::PicardDiverged { .. }
                | E::EmptyArgmin => EXIT_VIOLATION,
            };
        }
    }
    EXIT_CONFIG
}

#[derive(Debug, Parser)]
#[command(name = "vlift", version, about = "Lifted Volterra control experiments")]
pub struct Cli {
    /// Experiment config (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override `grid.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override `grid.n_paths`.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Override `grid.n_steps`.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Print the effective config with all defaults and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

impl Cli {
    /// Config file plus command-line overrides.
    pub fn effective_config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.grid.seed = s;
        }
        if let Some(p) = self.paths {
            cfg.grid.n_paths = p;
        }
        if let Some(n) = self.steps {
            cfg.grid.n_steps = n;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match cli.effective_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return EXIT_OK;
    }
    let Some(cmd) = cli.command else {
        eprintln!("error: no command given (see --help)");
        return EXIT_CONFIG;
    };
    match run(cmd, &cfg, std::path::Path::new(&cfg.output.dir)) {
        Ok(rep) => {
            for n in &rep.notes {
                println!("{}: {n}", cmd.name());
            }
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            for v in &rep.violations {
                eprintln!("violation: {v}");
            }
            if rep.passed() {
                EXIT_OK
            } else {
                EXIT_VIOLATION
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}
