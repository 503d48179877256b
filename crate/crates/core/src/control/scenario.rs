use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::costs::{CostPoint, Costs};
use crate::error::{invalid, Result};
use crate::mfbsde::BsdeConfig;
use crate::mfsde::{
    picard_law_solve, Coefficients, ControlPath, ControlSet, EnsembleConfig, ParticleEnsemble,
    PicardConfig, PicardOutcome,
};
use crate::regression::RegressionBasis;

/// A controlled mean-field problem: dynamics, rewards, control set and the
/// numerical settings used to evaluate it.
#[derive(Clone)]
pub struct Scenario {
    pub dynamics: Arc<dyn Coefficients>,
    pub costs: Arc<dyn Costs>,
    pub control_set: ControlSet,
    pub x0: f64,
    pub ensemble: EnsembleConfig,
    /// Seed block of the independent copy used by the adjoint equation.
    pub copy_block: u64,
    pub picard: PicardConfig,
    pub bsde: BsdeConfig,
    /// Basis of the conditional projections onto the observable filtration.
    pub projection: RegressionBasis,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("dynamics", &self.dynamics.name())
            .field("costs", &self.costs.name())
            .field("control_set", &self.control_set)
            .field("x0", &self.x0)
            .field("ensemble", &self.ensemble)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    pub fn new(
        dynamics: Arc<dyn Coefficients>,
        costs: Arc<dyn Costs>,
        control_set: ControlSet,
        x0: f64,
        ensemble: EnsembleConfig,
    ) -> Self {
        Self {
            dynamics,
            costs,
            control_set,
            x0,
            ensemble,
            copy_block: 1,
            picard: PicardConfig {
                tol: 1e-12,
                max_iter: 60,
            },
            bsde: BsdeConfig::default(),
            projection: RegressionBasis {
                degree: 1,
                ridge: 1e-8,
            },
        }
    }

    pub fn copy_ensemble(&self) -> EnsembleConfig {
        self.ensemble.with_block(self.copy_block)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.picard.validate()?;
        self.bsde.validate()?;
        if self.ensemble.block == self.copy_block {
            return Err(invalid(
                "the independent copy must use a different seed block",
            ));
        }
        Ok(())
    }

    /// Feature values `<g, Q_i>` of the dynamics on every knot of `e`.
    pub fn dynamics_features(&self, e: &ParticleEnsemble) -> Vec<Vec<f64>> {
        let feats = self.dynamics.features();
        (0..e.grid().n_knots())
            .map(|i| {
                let xs = e.cross_section(i);
                feats.iter().map(|f| f.evaluate(&xs)).collect()
            })
            .collect()
    }

    /// `E[phi(X_i)]` on every knot of `e`.
    pub fn phi_means(&self, e: &ParticleEnsemble) -> Vec<f64> {
        (0..e.grid().n_knots())
            .map(|i| {
                e.paths().iter().map(|p| self.costs.phi(p[i])).sum::<f64>() / e.n_particles() as f64
            })
            .collect()
    }

    /// `E[chi(X_T)]`.
    pub fn chi_mean(&self, e: &ParticleEnsemble) -> f64 {
        let last = e.grid().n_steps();
        e.paths()
            .iter()
            .map(|p| self.costs.chi(p[last]))
            .sum::<f64>()
            / e.n_particles() as f64
    }
}

/// Forward solve of the controlled dynamics under `u` on a given ensemble.
pub fn solve_controlled_forward_on(
    s: &Scenario,
    cfg: &EnsembleConfig,
    u: &ControlPath,
) -> Result<PicardOutcome> {
    if !u.is_admissible(&s.control_set, cfg.n_particles, cfg.grid.n_knots()) {
        return Err(invalid("control takes values outside the control set"));
    }
    picard_law_solve(s.dynamics.as_ref(), s.x0, cfg, u, &s.picard)
}

/// Forward solve of the controlled dynamics under an admissible `u`.
pub fn solve_controlled_forward(s: &Scenario, u: &ControlPath) -> Result<PicardOutcome> {
    solve_controlled_forward_on(s, &s.ensemble, u)
}

/// Same as `solve_controlled_forward` without the admissibility check, for
/// perturbed controls that may leave `U`.
pub(crate) fn solve_forward_unchecked(s: &Scenario, u: &ControlPath) -> Result<PicardOutcome> {
    picard_law_solve(s.dynamics.as_ref(), s.x0, &s.ensemble, u, &s.picard)
}

/// Monte Carlo estimate of the objective with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Per-particle payoffs `sum_i f(t_i, ...) dt + g(X_T, E[chi(X_T)])`.
pub fn particle_payoffs(s: &Scenario, e: &ParticleEnsemble, u: &ControlPath) -> Vec<f64> {
    let grid = e.grid();
    let dt = grid.dt();
    let y = s.phi_means(e);
    let yt = s.chi_mean(e);
    let last = grid.n_steps();
    (0..e.n_particles())
        .map(|n| {
            let ip = e.intensity(n);
            let path = e.path(n);
            let mut total = 0.0;
            for i in 0..last {
                let (lam_b, lam_h) = ip.at(i);
                let p = CostPoint {
                    t: grid.knot(i),
                    lam_b,
                    lam_h,
                    x: path[i],
                    y: y[i],
                    u: u.value(n, i),
                };
                total += s.costs.running(&p) * dt;
            }
            total + s.costs.terminal(path[last], yt)
        })
        .collect()
}

pub fn estimate_objective(
    s: &Scenario,
    e: &ParticleEnsemble,
    u: &ControlPath,
) -> ObjectiveEstimate {
    mean_and_se(&particle_payoffs(s, e, u))
}

pub(crate) fn mean_and_se(values: &[f64]) -> ObjectiveEstimate {
    ObjectiveEstimate::from_samples(values)
}

impl ObjectiveEstimate {
    /// Sample mean and its standard error.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        ObjectiveEstimate {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    }
}
