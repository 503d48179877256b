use std::borrow::Cow;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::driver::{DriverArg, DriverCtx, Side};
use crate::error::{invalid, Result};
use crate::mfsde::ParticleEnsemble;
use crate::noise::{seminorm_sq_slots, NoiseIncrements, TimeGrid};
use crate::regression::{Design, RegressionBasis};

/// Monte Carlo solution `(Y, Z)` of a BSDE on a particle ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BsdeSolution {
    grid: TimeGrid,
    n_particles: usize,
    n_slots: usize,
    /// Knot-major `n_knots x N`.
    y: Vec<f64>,
    /// Step-major `n_steps x N x n_slots`.
    z: Vec<f64>,
    /// `max_n |Y_T - F|`.
    pub terminal_residual: f64,
    /// Successive beta-norm distances of the Picard iteration (empty for a single sweep).
    pub trace: Vec<f64>,
    pub converged: bool,
    pub beta: f64,
}

impl BsdeSolution {
    pub(crate) fn zeros(grid: TimeGrid, n_particles: usize, n_slots: usize) -> Self {
        let (nk, ns) = (grid.n_knots(), grid.n_steps());
        Self {
            grid,
            n_particles,
            n_slots,
            y: vec![0.0; nk * n_particles],
            z: vec![0.0; ns * n_particles * n_slots],
            terminal_residual: 0.0,
            trace: Vec::new(),
            converged: true,
            beta: 0.0,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn y(&self, i: usize, n: usize) -> f64 {
        self.y[i * self.n_particles + n]
    }

    /// `Y` at knot `i` for all particles.
    pub fn y_knot(&self, i: usize) -> &[f64] {
        &self.y[i * self.n_particles..(i + 1) * self.n_particles]
    }

    /// `Z` of particle `n` over step `i`, one value per slot.
    pub fn z(&self, i: usize, n: usize) -> &[f64] {
        let o = (i * self.n_particles + n) * self.n_slots;
        &self.z[o..o + self.n_slots]
    }

    /// `Z` at step `i`, row-major `N x n_slots`.
    pub fn z_step(&self, i: usize) -> &[f64] {
        let w = self.n_particles * self.n_slots;
        &self.z[i * w..(i + 1) * w]
    }

    pub fn z_slot(&self, i: usize, s: usize) -> Vec<f64> {
        (0..self.n_particles).map(|n| self.z(i, n)[s]).collect()
    }

    pub fn mean_y(&self, i: usize) -> f64 {
        self.y_knot(i).iter().sum::<f64>() / self.n_particles as f64
    }

    pub fn mean_z(&self, i: usize, s: usize) -> f64 {
        (0..self.n_particles).map(|n| self.z(i, n)[s]).sum::<f64>() / self.n_particles as f64
    }

    /// Contraction ratios of the Picard trace, skipping rounding-level steps.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.trace
            .windows(2)
            .filter(|w| w[0] > 1e-13)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub(crate) fn set_y_knot(&mut self, i: usize, values: &[f64]) {
        let n = self.n_particles;
        self.y[i * n..(i + 1) * n].copy_from_slice(values);
    }

    pub(crate) fn set_z_step(&mut self, i: usize, values: &[f64]) {
        let w = self.n_particles * self.n_slots;
        self.z[i * w..(i + 1) * w].copy_from_slice(values);
    }

    /// CSV with columns `particle,knot,Y,Z_0..Z_M`; `Z` is empty at the last knot.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["particle".to_string(), "knot".to_string(), "Y".to_string()];
        header.extend((0..self.n_slots).map(|s| format!("Z_{s}")));
        wtr.write_record(&header)?;
        let ns = self.grid.n_steps();
        for n in 0..self.n_particles {
            for i in 0..self.grid.n_knots() {
                let mut row = vec![n.to_string(), i.to_string(), self.y(i, n).to_string()];
                if i < ns {
                    row.extend(self.z(i, n).iter().map(|v| v.to_string()));
                } else {
                    row.extend(std::iter::repeat_n(String::new(), self.n_slots));
                }
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Noise of every particle, borrowed when the ensemble kept it.
pub(crate) fn ensemble_noise(e: &ParticleEnsemble) -> Cow<'_, [NoiseIncrements]> {
    if e.has_noise() {
        Cow::Borrowed(e.noise_slice().expect("noise present"))
    } else {
        Cow::Owned(
            (0..e.n_particles())
                .into_par_iter()
                .map(|n| e.noise_of(n))
                .collect(),
        )
    }
}

/// Per-particle intensities at step `i`.
pub(crate) fn intensities_at(e: &ParticleEnsemble, i: usize) -> (Vec<f64>, Vec<f64>) {
    (0..e.n_particles()).map(|n| e.intensity(n).at(i)).unzip()
}

/// Regressors `(X_i, lamB_i, lamH_i)` of the conditional expectations at step `i`.
pub(crate) fn design_at(e: &ParticleEnsemble, i: usize, basis: &RegressionBasis) -> Result<Design> {
    let x = e.cross_section(i);
    let (lb, lh) = intensities_at(e, i);
    Design::new(&[&x, &lb, &lh], basis, i)
}

/// `|dY|^2 + ||dZ||^2_lambda` averaged over particles at every step.
pub(crate) fn squared_gaps(a: &BsdeSolution, b: &BsdeSolution, e: &ParticleEnsemble) -> Vec<f64> {
    let levy = e.levy();
    let n = a.n_particles as f64;
    (0..a.grid.n_steps())
        .map(|i| {
            let mut s = 0.0;
            let mut dz = vec![0.0; a.n_slots];
            for p in 0..a.n_particles {
                let dy = a.y(i, p) - b.y(i, p);
                for (d, (za, zb)) in dz.iter_mut().zip(a.z(i, p).iter().zip(b.z(i, p))) {
                    *d = za - zb;
                }
                let (lb, lh) = e.intensity(p).at(i);
                s += dy * dy + seminorm_sq_slots(&dz, lb, lh, levy);
            }
            s / n
        })
        .collect()
}

/// Backward regression sweep for `dY = h(t, lambda, Y, Z) dt + Z dmu`,
/// `Y_T = F`, with `h` already averaged over any primed arguments.
pub fn backward_sweep<H>(
    h: H,
    terminal: &[f64],
    forward: &ParticleEnsemble,
    basis: &RegressionBasis,
) -> Result<BsdeSolution>
where
    H: Fn(&DriverCtx<'_>, &DriverArg<'_>) -> f64 + Sync,
{
    let noise = ensemble_noise(forward);
    sweep(Side::Main, &h, terminal, forward, &noise, basis)
}

pub(crate) fn sweep<H>(
    side: Side,
    h: &H,
    terminal: &[f64],
    forward: &ParticleEnsemble,
    noise: &[NoiseIncrements],
    basis: &RegressionBasis,
) -> Result<BsdeSolution>
where
    H: Fn(&DriverCtx<'_>, &DriverArg<'_>) -> f64 + Sync,
{
    let n = forward.n_particles();
    if terminal.len() != n {
        return Err(invalid(format!(
            "terminal has {} values for {n} particles",
            terminal.len()
        )));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(invalid("terminal condition is not finite"));
    }
    let grid = forward.grid().clone();
    let levy = forward.levy();
    let slots = levy.n_slots();
    let dt = grid.dt();
    let mut sol = BsdeSolution::zeros(grid.clone(), n, slots);
    sol.set_y_knot(grid.n_steps(), terminal);

    let mut next = terminal.to_vec();
    let mut z_step = vec![0.0; n * slots];
    for i in (0..grid.n_steps()).rev() {
        let design = design_at(forward, i, basis)?;
        let (lb, lh) = intensities_at(forward, i);
        let cond = design.fit(&next);
        let resid: Vec<f64> = next.iter().zip(&cond).map(|(a, b)| a - b).collect();

        for s in 0..slots {
            let target: Vec<f64> = (0..n)
                .map(|p| {
                    let density = if s == 0 {
                        lb[p]
                    } else {
                        lh[p] * levy.weights()[s - 1]
                    };
                    let mass = density * dt;
                    if mass > 0.0 {
                        resid[p] * noise[p].slot(i, s) / mass
                    } else {
                        0.0
                    }
                })
                .collect();
            let fitted = design.fit(&target);
            for p in 0..n {
                z_step[p * slots + s] = fitted[p];
            }
        }

        let ctx = DriverCtx {
            side,
            step: i,
            t: grid.knot(i),
            nu: levy.weights(),
        };
        let step_target = |y_arg: &[f64]| -> Vec<f64> {
            (0..n)
                .into_par_iter()
                .map(|p| {
                    let arg = DriverArg {
                        index: p,
                        lam_b: lb[p],
                        lam_h: lh[p],
                        y: y_arg[p],
                        z: &z_step[p * slots..(p + 1) * slots],
                    };
                    next[p] - h(&ctx, &arg) * dt
                })
                .collect()
        };
        let predictor = design.fit(&step_target(&next));
        let current = design.fit(&step_target(&predictor));
        if current.iter().any(|v| !v.is_finite()) {
            return Err(crate::error::Error::SingularRegression {
                step: i,
                reason: "non-finite fitted values".into(),
            });
        }
        sol.set_z_step(i, &z_step);
        sol.set_y_knot(i, &current);
        next = current;
    }
    sol.terminal_residual = terminal
        .iter()
        .zip(sol.y_knot(grid.n_steps()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(sol)
}
