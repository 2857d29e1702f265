//! Control problems, Hamiltonian minimization and policies.

pub mod catalog;
mod hamiltonian;
mod policy;
mod problem;

pub use hamiltonian::{gamma_select, hamiltonian, hamiltonian_at, scan, HamiltonianResult, SCAN_POINTS, U_TOL, VALUE_TOL};
pub use policy::{evaluate_cost, path_cost, random_policies, AffinePolicy, ConstantPolicy, Policy, ProblemController};
pub use problem::{lift_cost, ControlFn, ControlProblem, LiftedCost, QuadAffine, DEFAULT_K_R};
