//! Forward solvers for mean-field SDEs driven by the mixture noise.
//!
//! Coefficients read the law only through declared features `<g, Q_t>`.
//! The fixed-law Euler scheme, the Picard iteration on the law and the
//! interacting particle system all evaluate coefficients at the left knot
//! and consume per-particle noise sub-streams, so results do not depend on
//! the number of worker threads.

mod coefficients;
mod ensemble;
mod solver;

pub use coefficients::{
    central_partials, Coefficients, Feature, FnCoefficients, LinearMeanField, OrnsteinUhlenbeck,
    Partials, StatePoint, ZeroCoefficients, FD_STEP,
};
pub use ensemble::{
    moment_check, ControlPath, ControlSet, EnsembleConfig, IntensityPaths, ParticleEnsemble,
};
pub use solver::{
    euler_solve_fixed_law, interacting_particle_solve, picard_law_solve, PicardConfig,
    PicardDiagnostics, PicardOutcome,
};
