//! The outer optimization over `z_T`, the guided-sampling baseline, the
//! out-of-distribution diagnostic and the convergence checks.

mod invert;
mod objective;
mod theory;

pub use invert::{
    dilo_invert, dps_baseline, ood_diagnostic, DpsResult, InversionConfig, InversionMode, InversionResult, OodCurve,
    TrajectoryDiagnostics, Tracking,
};
pub use objective::{Evaluation, LatentObjective};
pub use theory::{estimate_l, verify_convergence, ConvergenceReport, LipschitzEstimate};
