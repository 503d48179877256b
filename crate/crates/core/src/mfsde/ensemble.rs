use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::measures::{empirical, LawFlow};
use crate::noise::{
    sample_intensity, sample_noise, IntensityModel, IntensityPath, LevyGrid, NoiseIncrements,
    TimeGrid,
};
use crate::rng::particle_seed;

/// Seed-block offset reserved for intensity paths.
const INTENSITY_BLOCK: u64 = 1 << 40;

/// How a batch of particles is simulated.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub grid: TimeGrid,
    pub n_particles: usize,
    pub master_seed: u64,
    /// Disjoint seed blocks give independent ensembles of the same law.
    pub block: u64,
    pub intensity: IntensityModel,
    pub levy: LevyGrid,
    /// One intensity path for all particles (default) or one per particle.
    pub shared_intensity: bool,
    /// Keep the per-particle noise increments (needed by backward solvers).
    pub keep_noise: bool,
}

impl EnsembleConfig {
    pub fn new(
        grid: TimeGrid,
        n_particles: usize,
        master_seed: u64,
        intensity: IntensityModel,
        levy: LevyGrid,
    ) -> Self {
        Self {
            grid,
            n_particles,
            master_seed,
            block: 0,
            intensity,
            levy,
            shared_intensity: true,
            keep_noise: false,
        }
    }

    pub fn with_block(&self, block: u64) -> Self {
        Self {
            block,
            ..self.clone()
        }
    }

    pub fn with_particles(&self, n_particles: usize) -> Self {
        Self {
            n_particles,
            ..self.clone()
        }
    }

    pub fn keeping_noise(&self, keep: bool) -> Self {
        Self {
            keep_noise: keep,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(invalid("ensemble needs at least one particle"));
        }
        self.intensity.validate()
    }

    pub fn particle_seed(&self, n: usize) -> u64 {
        particle_seed(self.master_seed, self.block, n as u64)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_particles)
            .map(|n| self.particle_seed(n))
            .collect()
    }

    pub fn sample_intensities(&self) -> Result<IntensityPaths> {
        let seed =
            |n: usize| particle_seed(self.master_seed, self.block | INTENSITY_BLOCK, n as u64);
        if self.shared_intensity || self.intensity.is_deterministic() {
            Ok(IntensityPaths::Shared(Arc::new(sample_intensity(
                &self.intensity,
                &self.grid,
                seed(0),
            )?)))
        } else {
            let paths = (0..self.n_particles)
                .into_par_iter()
                .map(|n| sample_intensity(&self.intensity, &self.grid, seed(n)))
                .collect::<Result<Vec<_>>>()?;
            Ok(IntensityPaths::PerParticle(paths))
        }
    }
}

#[derive(Debug, Clone)]
pub enum IntensityPaths {
    Shared(Arc<IntensityPath>),
    PerParticle(Vec<IntensityPath>),
}

impl IntensityPaths {
    pub fn get(&self, n: usize) -> &IntensityPath {
        match self {
            IntensityPaths::Shared(p) => p,
            IntensityPaths::PerParticle(v) => &v[n],
        }
    }

    /// Whether any path is a realisation of a random time change.
    pub fn is_stochastic(&self) -> bool {
        match self {
            IntensityPaths::Shared(p) => p.is_stochastic(),
            IntensityPaths::PerParticle(v) => v.iter().any(IntensityPath::is_stochastic),
        }
    }
}

/// Convex control set `U = [min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    pub min: f64,
    pub max: f64,
}

impl ControlSet {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(invalid(format!(
                "control set [{min}, {max}] is empty or unbounded"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn unbounded() -> Self {
        Self {
            min: f64::NEG_INFINITY,
            max: f64::INFINITY,
        }
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.min, self.max)
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.min && u <= self.max
    }

    /// `g` equally spaced points from `min` to `max`.
    pub fn grid(&self, g: usize) -> Vec<f64> {
        if g <= 1 || self.min == self.max {
            return vec![self.min];
        }
        (0..g)
            .map(|j| self.min + (self.max - self.min) * j as f64 / (g - 1) as f64)
            .collect()
    }
}

/// Control values per knot, either common to all particles or per particle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ControlPath {
    Constant(f64),
    Deterministic(Vec<f64>),
    /// `values[n][i]`.
    PerParticle(Vec<Vec<f64>>),
}

impl ControlPath {
    pub fn zero() -> Self {
        ControlPath::Constant(0.0)
    }

    pub fn value(&self, particle: usize, step: usize) -> f64 {
        match self {
            ControlPath::Constant(c) => *c,
            ControlPath::Deterministic(v) => v[step],
            ControlPath::PerParticle(v) => v[particle][step],
        }
    }

    pub fn clamped(&self, set: &ControlSet) -> Self {
        self.map(|u| set.clamp(u))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        match self {
            ControlPath::Constant(c) => ControlPath::Constant(f(*c)),
            ControlPath::Deterministic(v) => {
                ControlPath::Deterministic(v.iter().map(|&u| f(u)).collect())
            }
            ControlPath::PerParticle(v) => ControlPath::PerParticle(
                v.iter()
                    .map(|p| p.iter().map(|&u| f(u)).collect())
                    .collect(),
            ),
        }
    }

    /// `self + theta * direction`, pointwise.
    pub fn perturbed(
        &self,
        direction: &ControlPath,
        theta: f64,
        n_particles: usize,
        n_knots: usize,
    ) -> Self {
        match (self, direction) {
            (ControlPath::PerParticle(_), _) | (_, ControlPath::PerParticle(_)) => {
                ControlPath::PerParticle(
                    (0..n_particles)
                        .map(|n| {
                            (0..n_knots)
                                .map(|i| self.value(n, i) + theta * direction.value(n, i))
                                .collect()
                        })
                        .collect(),
                )
            }
            (ControlPath::Constant(a), ControlPath::Constant(b)) => {
                ControlPath::Constant(a + theta * b)
            }
            _ => ControlPath::Deterministic(
                (0..n_knots)
                    .map(|i| self.value(0, i) + theta * direction.value(0, i))
                    .collect(),
            ),
        }
    }

    pub fn is_admissible(&self, set: &ControlSet, n_particles: usize, n_knots: usize) -> bool {
        match self {
            ControlPath::Constant(c) => set.contains(*c),
            ControlPath::Deterministic(v) => {
                v.len() >= n_knots && v.iter().all(|&u| set.contains(u))
            }
            ControlPath::PerParticle(v) => {
                v.len() >= n_particles
                    && v.iter()
                        .all(|p| p.len() >= n_knots && p.iter().all(|&u| set.contains(u)))
            }
        }
    }

    /// Cross-sectional mean per knot.
    pub fn mean_path(&self, n_particles: usize, n_knots: usize) -> Vec<f64> {
        (0..n_knots)
            .map(|i| (0..n_particles).map(|n| self.value(n, i)).sum::<f64>() / n_particles as f64)
            .collect()
    }
}

/// `N` simulated paths on a shared grid.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub(crate) grid: TimeGrid,
    pub(crate) levy: LevyGrid,
    pub(crate) paths: Vec<Vec<f64>>,
    pub(crate) seeds: Vec<u64>,
    pub(crate) intensity: IntensityPaths,
    pub(crate) noise: Option<Vec<NoiseIncrements>>,
}

impl ParticleEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn levy(&self) -> &LevyGrid {
        &self.levy
    }

    pub fn n_particles(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[Vec<f64>] {
        &self.paths
    }

    pub fn path(&self, n: usize) -> &[f64] {
        &self.paths[n]
    }

    pub fn value(&self, n: usize, i: usize) -> f64 {
        self.paths[n][i]
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn intensities(&self) -> &IntensityPaths {
        &self.intensity
    }

    pub fn intensity(&self, n: usize) -> &IntensityPath {
        self.intensity.get(n)
    }

    pub fn has_noise(&self) -> bool {
        self.noise.is_some()
    }

    pub fn noise_slice(&self) -> Option<&[NoiseIncrements]> {
        self.noise.as_deref()
    }

    /// Stored increments of particle `n`, if the ensemble kept them.
    pub fn noise(&self, n: usize) -> Option<&NoiseIncrements> {
        self.noise.as_ref().map(|v| &v[n])
    }

    /// Increments of particle `n`, regenerated from its seed when not stored.
    pub fn noise_of(&self, n: usize) -> NoiseIncrements {
        match self.noise(n) {
            Some(inc) => inc.clone(),
            None => sample_noise(self.intensity(n), &self.levy, self.seeds[n]),
        }
    }

    /// Regenerate and store the increments of every particle.
    pub fn ensure_noise(&mut self) {
        if self.noise.is_none() {
            let noise = (0..self.n_particles())
                .into_par_iter()
                .map(|n| self.noise_of(n))
                .collect();
            self.noise = Some(noise);
        }
    }

    pub fn cross_section(&self, i: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[i]).collect()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.paths.iter().map(|p| p[i]).sum::<f64>() / self.paths.len() as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.grid.n_knots()).map(|i| self.mean(i)).collect()
    }

    /// Standard error of the cross-sectional mean at knot `i`.
    pub fn mean_std_error(&self, i: usize) -> f64 {
        let n = self.paths.len() as f64;
        let m = self.mean(i);
        let var = self.paths.iter().map(|p| (p[i] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (var / n).sqrt()
    }

    /// Empirical marginal law at every knot.
    pub fn law(&self) -> Result<LawFlow> {
        let marginals = (0..self.grid.n_knots())
            .into_par_iter()
            .map(|i| empirical(&self.cross_section(i)))
            .collect::<Result<Vec<_>>>()?;
        LawFlow::new(self.grid.clone(), marginals)
    }

    /// CSV with columns `particle,knot,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["particle", "knot", "value"])?;
        for (n, p) in self.paths.iter().enumerate() {
            for (i, v) in p.iter().enumerate() {
                wtr.write_record(&[n.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `mean_n sup_i |X^n_i|^2`, the empirical S_2 norm.
pub fn moment_check(e: &ParticleEnsemble) -> f64 {
    e.paths
        .iter()
        .map(|p| p.iter().map(|x| x * x).fold(0.0, f64::max))
        .sum::<f64>()
        / e.paths.len() as f64
}
