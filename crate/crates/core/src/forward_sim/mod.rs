//! Forward simulation of the controlled Volterra equation, directly and on
//! a lift, plus tangent and noise-bump derivatives.

mod brownian;
mod coefficients;
pub mod io;
mod moments;
mod simulate;
mod tangent;

pub use brownian::{path_rng, BrownianGrid, Phase};
pub use coefficients::{CoefFn, Controller, Uncontrolled, VolterraCoefficients, FD_STEP};
pub use moments::{moment_diagnostic, MomentReport, MomentRow};
pub use simulate::{
    simulate_direct, simulate_lifted, simulate_path, LiftedRecord, PathEnsemble, RecordOptions,
    MAX_FLAGGED_FRACTION,
};
pub use tangent::{malliavin_bump_check, tangent_along, tangent_process, MalliavinReport, MALLIAVIN_BUMP};

