use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coefficients::{Coefficients, Feature, StatePoint};
use super::ensemble::{ControlPath, EnsembleConfig, IntensityPaths, ParticleEnsemble};
use crate::error::{invalid, Error, Result};
use crate::measures::{law_flow_distance, LawFlow};
use crate::noise::{LevyGrid, NoiseIncrements, NoiseStream, Slot, StepNoise};

/// Stopping rule of the Picard iteration on the law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("Picard iteration needs tol > 0 and max_iter >= 1"));
        }
        Ok(())
    }
}

/// Trace of the Picard iteration on the law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardDiagnostics {
    pub iterations: usize,
    /// `distances[m]` is the law-flow distance between iterates `m + 1` and `m`.
    pub distances: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
}

impl PicardDiagnostics {
    /// Ratios `d_{m+1} / d_m`, skipping pairs where `d_m` is at rounding level.
    pub fn ratios(&self) -> Vec<f64> {
        self.distances
            .windows(2)
            .filter(|w| w[0] > 1e-13)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn max_ratio_from(&self, start: usize) -> Option<f64> {
        let d = &self.distances;
        (start.max(1)..d.len())
            .filter(|&m| d[m - 1] > 1e-13)
            .map(|m| d[m] / d[m - 1])
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub law: LawFlow,
    pub ensemble: ParticleEnsemble,
    pub diagnostics: PicardDiagnostics,
}

fn feature_values(features: &[Feature], atoms: &[f64]) -> Vec<f64> {
    features.iter().map(|f| f.evaluate(atoms)).collect()
}

/// One Euler step from the left knot `p`.
#[inline]
fn increment<C: Coefficients + ?Sized>(
    c: &C,
    p: &StatePoint<'_>,
    noise: &StepNoise,
    levy: &LevyGrid,
    dt: f64,
) -> f64 {
    let mut dx = c.drift(p) * dt;
    if noise.d_g != 0.0 {
        dx += c.diffusion(p, Slot::Gaussian, 0.0) * noise.d_g;
    }
    for (k, &z) in levy.marks().iter().enumerate() {
        let dm = noise.compensated[k];
        if dm != 0.0 {
            dx += c.diffusion(p, Slot::Jump(k), z) * dm;
        }
    }
    dx
}

/// Outcome of one particle sweep: the path or the first bad step.
type ParticleRun = std::result::Result<(Vec<f64>, Option<NoiseIncrements>), usize>;

fn first_explosion(
    runs: Vec<ParticleRun>,
) -> Result<(Vec<Vec<f64>>, Option<Vec<NoiseIncrements>>)> {
    let mut paths = Vec::with_capacity(runs.len());
    let mut noise = Vec::new();
    for (n, run) in runs.into_iter().enumerate() {
        match run {
            Ok((p, inc)) => {
                paths.push(p);
                if let Some(inc) = inc {
                    noise.push(inc);
                }
            }
            Err(step) => return Err(Error::Explosion { particle: n, step }),
        }
    }
    let noise = if noise.is_empty() { None } else { Some(noise) };
    Ok((paths, noise))
}

/// Simulate every particle against precomputed feature values per knot.
fn euler_with_features<C: Coefficients + ?Sized>(
    c: &C,
    features: &[Vec<f64>],
    x0: f64,
    cfg: &EnsembleConfig,
    intensity: &IntensityPaths,
    u: &ControlPath,
) -> Result<ParticleEnsemble> {
    let grid = &cfg.grid;
    let levy = &cfg.levy;
    let dt = grid.dt();
    let seeds = cfg.seeds();
    let runs: Vec<ParticleRun> = (0..cfg.n_particles)
        .into_par_iter()
        .map(|n| {
            let ip = intensity.get(n);
            let mut stream = NoiseStream::new(seeds[n], levy.len());
            let mut step = StepNoise::new(levy.len());
            let mut kept = cfg
                .keep_noise
                .then(|| NoiseIncrements::with_capacity(grid.clone(), levy, seeds[n]));
            let mut path = Vec::with_capacity(grid.n_knots());
            let mut x = x0;
            path.push(x);
            for i in 0..grid.n_steps() {
                let (lam_b, lam_h) = ip.at(i);
                stream.next_step(lam_b, lam_h, dt, levy, &mut step);
                if let Some(k) = kept.as_mut() {
                    k.push(&step);
                }
                let p = StatePoint {
                    t: grid.knot(i),
                    step: i,
                    particle: n,
                    lam_b,
                    lam_h,
                    x,
                    features: &features[i],
                    u: u.value(n, i),
                };
                x += increment(c, &p, &step, levy, dt);
                if !x.is_finite() {
                    return Err(i);
                }
                path.push(x);
            }
            Ok((path, kept))
        })
        .collect();
    let (paths, noise) = first_explosion(runs)?;
    Ok(ParticleEnsemble {
        grid: grid.clone(),
        levy: levy.clone(),
        paths,
        seeds,
        intensity: intensity.clone(),
        noise,
    })
}

fn check_inputs(x0: f64, cfg: &EnsembleConfig) -> Result<()> {
    cfg.validate()?;
    if !x0.is_finite() {
        return Err(invalid("initial value must be finite"));
    }
    Ok(())
}

/// Euler scheme for the SDE whose law argument is frozen at `law`.
pub fn euler_solve_fixed_law<C: Coefficients + ?Sized>(
    c: &C,
    law: &LawFlow,
    x0: f64,
    cfg: &EnsembleConfig,
    u: &ControlPath,
) -> Result<ParticleEnsemble> {
    check_inputs(x0, cfg)?;
    if law.grid() != &cfg.grid {
        return Err(invalid("law flow and ensemble live on different grids"));
    }
    let intensity = cfg.sample_intensities()?;
    let feats = c.features();
    let features: Vec<Vec<f64>> = law
        .marginals()
        .iter()
        .map(|m| feature_values(&feats, m.atoms()))
        .collect();
    euler_with_features(c, &features, x0, cfg, &intensity, u)
}

/// Picard iteration `Q <- law(X^Q)` under common random numbers, started at
/// the Dirac flow in `x0`.
pub fn picard_law_solve<C: Coefficients + ?Sized>(
    c: &C,
    x0: f64,
    cfg: &EnsembleConfig,
    u: &ControlPath,
    picard: &PicardConfig,
) -> Result<PicardOutcome> {
    check_inputs(x0, cfg)?;
    picard.validate()?;
    let intensity = cfg.sample_intensities()?;
    let feats = c.features();
    let mut law = LawFlow::dirac(cfg.grid.clone(), x0, cfg.n_particles);
    let mut distances = Vec::new();
    loop {
        let features: Vec<Vec<f64>> = law
            .marginals()
            .iter()
            .map(|m| feature_values(&feats, m.atoms()))
            .collect();
        let ensemble = euler_with_features(c, &features, x0, cfg, &intensity, u)?;
        let next = ensemble.law()?;
        let d = law_flow_distance(&next, &law)?;
        distances.push(d);
        let converged = d <= picard.tol;
        if converged || distances.len() >= picard.max_iter {
            let diagnostics = PicardDiagnostics {
                iterations: distances.len(),
                distances,
                converged,
                tolerance: picard.tol,
            };
            return Ok(PicardOutcome {
                law: next,
                ensemble,
                diagnostics,
            });
        }
        law = next;
    }
}

/// Interacting particle system: at every step the law features are taken
/// from the current cross-section of the `N` particles.
pub fn interacting_particle_solve<C: Coefficients + ?Sized>(
    c: &C,
    x0: f64,
    cfg: &EnsembleConfig,
    u: &ControlPath,
) -> Result<ParticleEnsemble> {
    check_inputs(x0, cfg)?;
    if cfg.n_particles < 2 {
        return Err(invalid("interacting particle system needs N >= 2"));
    }
    let grid = &cfg.grid;
    let levy = &cfg.levy;
    let dt = grid.dt();
    let n = cfg.n_particles;
    let seeds = cfg.seeds();
    let intensity = cfg.sample_intensities()?;
    let feats = c.features();

    struct State {
        stream: NoiseStream,
        step: StepNoise,
        kept: Option<NoiseIncrements>,
        path: Vec<f64>,
    }
    let mut states: Vec<State> = seeds
        .iter()
        .map(|&s| State {
            stream: NoiseStream::new(s, levy.len()),
            step: StepNoise::new(levy.len()),
            kept: cfg
                .keep_noise
                .then(|| NoiseIncrements::with_capacity(grid.clone(), levy, s)),
            path: {
                let mut p = Vec::with_capacity(grid.n_knots());
                p.push(x0);
                p
            },
        })
        .collect();
    let mut current = vec![x0; n];
    for i in 0..grid.n_steps() {
        let features = feature_values(&feats, &current);
        let bad: Vec<Option<usize>> = states
            .par_iter_mut()
            .enumerate()
            .map(|(p_idx, st)| {
                let (lam_b, lam_h) = intensity.get(p_idx).at(i);
                st.stream.next_step(lam_b, lam_h, dt, levy, &mut st.step);
                if let Some(k) = st.kept.as_mut() {
                    k.push(&st.step);
                }
                let x = *st.path.last().expect("path starts at x0");
                let p = StatePoint {
                    t: grid.knot(i),
                    step: i,
                    particle: p_idx,
                    lam_b,
                    lam_h,
                    x,
                    features: &features,
                    u: u.value(p_idx, i),
                };
                let next = x + increment(c, &p, &st.step, levy, dt);
                st.path.push(next);
                (!next.is_finite()).then_some(p_idx)
            })
            .collect();
        if let Some(particle) = bad.into_iter().flatten().next() {
            return Err(Error::Explosion { particle, step: i });
        }
        for (x, st) in current.iter_mut().zip(&states) {
            *x = st.path[i + 1];
        }
    }
    let mut paths = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(if cfg.keep_noise { n } else { 0 });
    for st in states {
        paths.push(st.path);
        if let Some(k) = st.kept {
            noise.push(k);
        }
    }
    let noise = cfg.keep_noise.then_some(noise);
    Ok(ParticleEnsemble {
        grid: grid.clone(),
        levy: levy.clone(),
        paths,
        seeds,
        intensity,
        noise,
    })
}
