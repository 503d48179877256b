//! Time grids, intensity processes and the doubly stochastic mixture noise.
//!
//! The noise is a time-changed Gaussian field on slot 0 plus a centred
//! Poisson random measure on a finite mark grid. Conditionally on the
//! intensity path, increments over disjoint cells are independent, centred,
//! and have variance given by `lambda_measure`.

mod checks;
mod grid;
mod increments;
mod intensity;
mod levy;

pub use checks::{
    half_windows, isometry_check, window_moments, Integrand, IsometrySummary, WindowMoments,
    ZeroMeanStat,
};
pub use grid::{build_grid, TimeGrid};
pub use increments::{
    integrand_energy, integrate, lambda_measure, lambda_seminorm, sample_noise, seminorm_sq_slots,
    MarkFunction, MarkSet, NoiseIncrements, NoiseStream, Slot, StepNoise, Window,
};
pub use intensity::{
    sample_intensity, IntensityFn, IntensityModel, IntensityPath, SquareRootParams,
};
pub use levy::{discretize_levy, LevyGrid, LevySpec};
