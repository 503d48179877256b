use serde::{Deserialize, Serialize};

use super::driver::{Driver, DriverArg, DriverCtx, LinearDriver, Side, StepSample};
use super::sweep::{ensemble_noise, intensities_at, squared_gaps, sweep, BsdeSolution};
use crate::error::{invalid, Result};
use crate::mfsde::ParticleEnsemble;
use crate::regression::RegressionBasis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsdeConfig {
    pub basis: RegressionBasis,
    /// Weight of the exponential norm; `None` selects `16 K^2 + 1`.
    pub beta: Option<f64>,
    /// Relative tolerance on successive beta-norm distances.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BsdeConfig {
    fn default() -> Self {
        Self {
            basis: RegressionBasis::default(),
            beta: None,
            tol: 1e-6,
            max_iter: 30,
        }
    }
}

impl BsdeConfig {
    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("BSDE iteration needs tol > 0 and max_iter >= 1"));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid(format!("beta must be positive, got {b}")));
            }
        }
        Ok(())
    }

    pub fn beta_for(&self, lipschitz: f64) -> f64 {
        self.beta.unwrap_or(16.0 * lipschitz * lipschitz + 1.0)
    }
}

/// Solutions on both coordinates of the product space.
#[derive(Debug, Clone)]
pub struct BsdeRun {
    pub solution: BsdeSolution,
    pub copy: BsdeSolution,
}

/// `(sum_i e^{beta t_i} mean_n(|dY_i|^2 + ||dZ_i||^2_lambda) dt)^{1/2}`.
pub fn beta_norm_distance(
    a: &BsdeSolution,
    b: &BsdeSolution,
    forward: &ParticleEnsemble,
    beta: f64,
) -> f64 {
    let grid = a.grid();
    let gaps = squared_gaps(a, b, forward);
    gaps.iter()
        .enumerate()
        .map(|(i, g)| (beta * grid.knot(i)).exp() * g * grid.dt())
        .sum::<f64>()
        .sqrt()
}

fn step_sample<'a>(
    sol: &'a BsdeSolution,
    lam: &'a (Vec<f64>, Vec<f64>),
    i: usize,
) -> StepSample<'a> {
    StepSample {
        lam_b: &lam.0,
        lam_h: &lam.1,
        y: sol.y_knot(i),
        z: sol.z_step(i),
        n_slots: sol.n_slots(),
    }
}

/// Picard iteration on the primed arguments: each sweep freezes `(Y', Z')`
/// at the other coordinate's previous iterate.
pub fn picard_bsde<D: Driver + ?Sized>(
    h: &D,
    terminal: &[f64],
    terminal_copy: &[f64],
    forward: &ParticleEnsemble,
    copy: &ParticleEnsemble,
    cfg: &BsdeConfig,
) -> Result<BsdeRun> {
    cfg.validate()?;
    if copy.n_particles() == 0 {
        return Err(invalid("independent copy is empty"));
    }
    if forward.grid() != copy.grid() || forward.levy() != copy.levy() {
        return Err(invalid(
            "forward and copy ensembles differ in grid or marks",
        ));
    }
    let beta = cfg.beta_for(h.lipschitz());
    let grid = forward.grid();
    let slots = forward.levy().n_slots();
    let noise_main = ensemble_noise(forward);
    let noise_copy = ensemble_noise(copy);
    let lam_main: Vec<_> = (0..grid.n_steps())
        .map(|i| intensities_at(forward, i))
        .collect();
    let lam_copy: Vec<_> = (0..grid.n_steps())
        .map(|i| intensities_at(copy, i))
        .collect();

    let mut main = BsdeSolution::zeros(grid.clone(), forward.n_particles(), slots);
    let mut other = BsdeSolution::zeros(grid.clone(), copy.n_particles(), slots);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let next_main = {
            let frozen = &other;
            let summaries: Vec<Option<Vec<f64>>> = (0..grid.n_steps())
                .map(|i| {
                    let ctx = DriverCtx {
                        side: Side::Main,
                        step: i,
                        t: grid.knot(i),
                        nu: forward.levy().weights(),
                    };
                    h.summarize(&ctx, &step_sample(frozen, &lam_copy[i], i))
                })
                .collect();
            let eff = |ctx: &DriverCtx<'_>, own: &DriverArg<'_>| {
                let c = step_sample(frozen, &lam_copy[ctx.step], ctx.step);
                h.eprime_with(ctx, own, &c, summaries[ctx.step].as_deref())
            };
            sweep(Side::Main, &eff, terminal, forward, &noise_main, &cfg.basis)?
        };
        let next_copy = {
            let frozen = &main;
            let summaries: Vec<Option<Vec<f64>>> = (0..grid.n_steps())
                .map(|i| {
                    let ctx = DriverCtx {
                        side: Side::Copy,
                        step: i,
                        t: grid.knot(i),
                        nu: copy.levy().weights(),
                    };
                    h.summarize(&ctx, &step_sample(frozen, &lam_main[i], i))
                })
                .collect();
            let eff = |ctx: &DriverCtx<'_>, own: &DriverArg<'_>| {
                let c = step_sample(frozen, &lam_main[ctx.step], ctx.step);
                h.eprime_with(ctx, own, &c, summaries[ctx.step].as_deref())
            };
            sweep(
                Side::Copy,
                &eff,
                terminal_copy,
                copy,
                &noise_copy,
                &cfg.basis,
            )?
        };
        let d = beta_norm_distance(&next_main, &main, forward, beta);
        let scale = beta_norm_distance(
            &next_main,
            &BsdeSolution::zeros(grid.clone(), forward.n_particles(), slots),
            forward,
            beta,
        );
        trace.push(d);
        main = next_main;
        other = next_copy;
        if d <= cfg.tol * (1.0 + scale) {
            converged = true;
            break;
        }
    }
    main.trace = trace.clone();
    main.converged = converged;
    main.beta = beta;
    other.trace = trace;
    other.converged = converged;
    other.beta = beta;
    Ok(BsdeRun {
        solution: main,
        copy: other,
    })
}

/// Linear mean-field BSDE `dY = E'[A + BY + CY' + D Z l + E Z' l'] dt + Z dmu`.
pub fn solve_linear(
    spec: &LinearDriver,
    terminal: &[f64],
    terminal_copy: &[f64],
    forward: &ParticleEnsemble,
    copy: &ParticleEnsemble,
    cfg: &BsdeConfig,
) -> Result<BsdeRun> {
    spec.validate(
        forward.grid().n_steps(),
        forward.n_particles(),
        copy.n_particles(),
    )?;
    if spec.n_slots != forward.levy().n_slots() {
        return Err(invalid("linear driver slot count does not match the noise"));
    }
    picard_bsde(spec, terminal, terminal_copy, forward, copy, cfg)
}
