//! Value function as the mild solution of the HJB equation, feedback
//! synthesis, closed loop and verification.

mod feedback;
mod picard;
mod verify;

pub use feedback::{closed_loop_simulate, feedback_control, FeedbackPolicy};
pub use picard::{picard_mild_solve, PicardConfig, ValueFunction};
pub use verify::{generator_residual, verify_value_inequality, PolicyCheck, ResidualReport, VerificationReport};
