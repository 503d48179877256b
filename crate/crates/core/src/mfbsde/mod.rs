//! Backward solvers for mean-field BSDEs `dY = E'[h] dt + Z dmu`, `Y_T = F`.
//!
//! Conditional expectations are least-squares regressions on the forward
//! state and intensities; `Z` is read off by covariation with the noise
//! increments, slot by slot. The primed (independent copy) arguments come
//! from a second forward ensemble drawn from a disjoint seed block, and the
//! Picard map freezes them at the previous iterate.

mod driver;
mod picard;
mod sweep;

pub use driver::{
    eval_eprime, CoefPath, Driver, DriverArg, DriverCtx, DriverKind, FnDriver, LinearDriver,
    LinearSide, Side, StepSample,
};
pub use picard::{beta_norm_distance, picard_bsde, solve_linear, BsdeConfig, BsdeRun};
pub(crate) use sweep::ensemble_noise;
pub use sweep::{backward_sweep, BsdeSolution};
