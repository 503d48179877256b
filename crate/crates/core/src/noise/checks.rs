//! Monte Carlo checks of the isometry and of the conditional moments of the noise.

use rayon::prelude::*;
use serde::Serialize;

use super::grid::TimeGrid;
use super::increments::{
    integrand_energy, integrate, lambda_measure, sample_noise, MarkSet, NoiseIncrements, Slot,
    Window,
};
use super::intensity::{sample_intensity, IntensityModel};
use super::levy::LevyGrid;
use crate::error::{invalid, Result};
use crate::rng::particle_seed;

const NOISE_BLOCK: u64 = 0;
const INTENSITY_BLOCK: u64 = 1;

/// Built-in predictable integrands. Each reads only increments before its step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrand {
    /// `1` on every slot.
    Unit,
    /// `1` on the Gaussian slot, `0` on jumps.
    GaussianOnly,
    /// `z` on jump marks, `0` on the Gaussian slot.
    MarkIdentity,
    /// `1 + sin(2 pi t)` on the Gaussian slot, `cos(t) z` on marks.
    TimeVarying,
    /// `tanh` of the running noise sum; genuinely path dependent.
    PathDependent,
}

impl Integrand {
    pub const ALL: [Integrand; 5] = [
        Integrand::Unit,
        Integrand::GaussianOnly,
        Integrand::MarkIdentity,
        Integrand::TimeVarying,
        Integrand::PathDependent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Integrand::Unit => "unit",
            Integrand::GaussianOnly => "gaussian-only",
            Integrand::MarkIdentity => "mark-identity",
            Integrand::TimeVarying => "time-varying",
            Integrand::PathDependent => "path-dependent",
        }
    }

    pub fn eval(self, i: usize, slot: Slot, noise: &NoiseIncrements, levy: &LevyGrid) -> f64 {
        let t = noise.grid().knot(i);
        let mark = |k: usize| levy.marks()[k];
        match (self, slot) {
            (Integrand::Unit, _) => 1.0,
            (Integrand::GaussianOnly, Slot::Gaussian) => 1.0,
            (Integrand::GaussianOnly, Slot::Jump(_)) => 0.0,
            (Integrand::MarkIdentity, Slot::Gaussian) => 0.0,
            (Integrand::MarkIdentity, Slot::Jump(k)) => mark(k),
            (Integrand::TimeVarying, Slot::Gaussian) => {
                1.0 + (2.0 * std::f64::consts::PI * t).sin()
            }
            (Integrand::TimeVarying, Slot::Jump(k)) => t.cos() * mark(k),
            (Integrand::PathDependent, s) => {
                let past: f64 = (0..i)
                    .map(|j| {
                        noise.d_g(j) + (0..noise.n_marks()).map(|k| noise.d_j(j, k)).sum::<f64>()
                    })
                    .sum();
                let w = 1.0 + past.tanh();
                match s {
                    Slot::Gaussian => w,
                    Slot::Jump(_) => 0.5 * w,
                }
            }
        }
    }
}

/// Sample mean and standard error.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsometrySummary {
    pub integrand: Integrand,
    pub n_paths: usize,
    /// Mean of `I(phi)^2`.
    pub second_moment: f64,
    /// Mean of `int ||phi||^2_lambda dt`.
    pub energy: f64,
    pub ratio: f64,
    /// Delta-method standard error of `ratio`.
    pub ratio_se: f64,
}

impl IsometrySummary {
    /// `|ratio - 1| <= k se`.
    pub fn within(&self, k: f64) -> bool {
        (self.ratio - 1.0).abs() <= k * self.ratio_se
    }
}

fn paths<'a>(
    model: &'a IntensityModel,
    levy: &'a LevyGrid,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> impl IndexedParallelIterator<Item = Result<(super::intensity::IntensityPath, NoiseIncrements)>> + 'a
{
    let grid = grid.clone();
    (0..n_paths).into_par_iter().map(move |j| {
        let ip = sample_intensity(model, &grid, particle_seed(seed, INTENSITY_BLOCK, j as u64))?;
        let noise = sample_noise(&ip, levy, particle_seed(seed, NOISE_BLOCK, j as u64));
        Ok((ip, noise))
    })
}

/// Compares `E[I(phi)^2]` with `E[int ||phi||^2_lambda dt]` over `n_paths` seeds.
pub fn isometry_check(
    integrand: Integrand,
    model: &IntensityModel,
    levy: &LevyGrid,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<IsometrySummary> {
    if n_paths < 2 {
        return Err(invalid("isometry check needs at least two paths"));
    }
    let pairs: Vec<(f64, f64)> = paths(model, levy, grid, n_paths, seed)
        .map(|r| {
            let (ip, noise) = r?;
            let phi = |i: usize, s: Slot, nz: &NoiseIncrements| integrand.eval(i, s, nz, levy);
            Ok((
                integrate(phi, &noise).powi(2),
                integrand_energy(phi, &noise, &ip, levy),
            ))
        })
        .collect::<Result<_>>()?;
    let n = n_paths as f64;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (ma, _) = mean_se(&a);
    let (mb, _) = mean_se(&b);
    let ratio = ma / mb;
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        vaa += (x - ma).powi(2);
        vbb += (y - mb).powi(2);
        vab += (x - ma) * (y - mb);
    }
    let d = n - 1.0;
    let var = (vaa / d - 2.0 * ratio * vab / d + ratio * ratio * vbb / d) / (mb * mb);
    Ok(IsometrySummary {
        integrand,
        n_paths,
        second_moment: ma,
        energy: mb,
        ratio,
        ratio_se: (var.max(0.0) / n).sqrt(),
    })
}

/// A statistic that should vanish in expectation, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroMeanStat {
    pub mean: f64,
    pub std_error: f64,
}

impl ZeroMeanStat {
    fn of(v: &[f64]) -> Self {
        let (mean, std_error) = mean_se(v);
        Self { mean, std_error }
    }

    pub fn within(&self, k: f64) -> bool {
        self.mean.abs() <= k * self.std_error + 1e-14
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowMoments {
    /// `mu(first)`.
    pub centering: ZeroMeanStat,
    /// `mu(first) mu(second)` for the disjoint second window.
    pub orthogonality: ZeroMeanStat,
    /// `mu(first)^2 - Lambda(first)`, pathwise in the intensity.
    pub second_moment: ZeroMeanStat,
}

impl WindowMoments {
    pub fn within(&self, k: f64) -> bool {
        self.centering.within(k) && self.orthogonality.within(k) && self.second_moment.within(k)
    }
}

/// Moments of the noise on two windows over `n_paths` seeds; the windows must be disjoint.
pub fn window_moments(
    first: &Window,
    second: &Window,
    model: &IntensityModel,
    levy: &LevyGrid,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<WindowMoments> {
    let overlap_t = first.start < second.end && second.start < first.end;
    let overlap_m = (first.marks.gaussian && second.marks.gaussian)
        || first
            .marks
            .jumps
            .iter()
            .any(|k| second.marks.jumps.contains(k));
    if overlap_t && overlap_m {
        return Err(invalid("windows must be disjoint"));
    }
    let rows: Vec<[f64; 3]> = paths(model, levy, grid, n_paths, seed)
        .map(|r| {
            let (ip, noise) = r?;
            let a = noise.measure(first)?;
            let b = noise.measure(second)?;
            Ok([a, a * b, a * a - lambda_measure(first, &ip, levy)?])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    Ok(WindowMoments {
        centering: ZeroMeanStat::of(&col(0)),
        orthogonality: ZeroMeanStat::of(&col(1)),
        second_moment: ZeroMeanStat::of(&col(2)),
    })
}

/// Windows `(0, T/2]` and `(T/2, T]` over all marks.
pub fn half_windows(grid: &TimeGrid, levy: &LevyGrid) -> (Window, Window) {
    let h = grid.horizon();
    (
        Window::new(0.0, 0.5 * h, MarkSet::all(levy)),
        Window::new(0.5 * h, h, MarkSet::all(levy)),
    )
}
