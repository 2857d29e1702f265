//! Convolution kernels, their lifts `K(t) = ⟨g, S_t* ν⟩`, and finite-dimensional
//! discretizations of those lifts.

mod kernel;
mod lift;
pub mod quadrature;

pub use kernel::{Generator, Kernel, KernelKind, LiftKind, LiftSpec, RealFn};
pub use lift::{
    build_laplace_lift, build_shift_lift, default_laplace_quadrature, DiscreteLift, Exactness, ReconstructionBound,
    StepOperator,
};

pub(crate) use lift::dot;
