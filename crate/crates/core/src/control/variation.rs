use rayon::prelude::*;
use serde::Serialize;

use super::costs::CostPoint;
use super::scenario::{mean_and_se, particle_payoffs, solve_forward_unchecked, Scenario};
use crate::error::Result;
use crate::mfbsde::CoefPath;
use crate::mfsde::{
    interacting_particle_solve, Coefficients, ControlPath, Partials, ParticleEnsemble, StatePoint,
};
use crate::noise::Slot;

/// Linearised dynamics along a reference solution: drift
/// `b_x Z + b_y E[Z] + b_u v` and noise coefficients built the same way
/// from the partials of `kappa`.
#[derive(Debug, Clone)]
pub struct VariationCoefficients {
    b: [CoefPath; 3],
    /// Per slot, `[d_x, d_y, d_u]`.
    kappa: Vec<[CoefPath; 3]>,
    direction: ControlPath,
}

fn table(n: usize, rows: &[Vec<Partials>], pick: impl Fn(&Partials) -> f64) -> CoefPath {
    let values: Vec<f64> = rows.iter().flat_map(|r| r.iter().map(&pick)).collect();
    if values.iter().all(|&v| v == 0.0) {
        CoefPath::Zero
    } else {
        CoefPath::values(n, values)
    }
}

impl VariationCoefficients {
    /// Partials of `b` and `kappa` along `(X, E[X], u)` of the ensemble `e`.
    pub fn along(
        s: &Scenario,
        e: &ParticleEnsemble,
        u: &ControlPath,
        direction: ControlPath,
    ) -> Self {
        let grid = e.grid();
        let levy = e.levy();
        let n = e.n_particles();
        let slots = levy.n_slots();
        let feats = s.dynamics_features(e);
        // rows[i][p * (1 + slots) + k]: drift partials at k = 0, then kappa per slot.
        let rows: Vec<Vec<Partials>> = (0..grid.n_steps())
            .into_par_iter()
            .map(|i| {
                let mut row = Vec::with_capacity(n * (1 + slots));
                for p in 0..n {
                    let (lam_b, lam_h) = e.intensity(p).at(i);
                    let sp = StatePoint {
                        t: grid.knot(i),
                        step: i,
                        particle: p,
                        lam_b,
                        lam_h,
                        x: e.value(p, i),
                        features: &feats[i],
                        u: u.value(p, i),
                    };
                    row.push(s.dynamics.drift_partials(&sp));
                    for k in 0..slots {
                        let z = if k == 0 { 0.0 } else { levy.marks()[k - 1] };
                        row.push(s.dynamics.diffusion_partials(&sp, Slot::from_index(k), z));
                    }
                }
                row
            })
            .collect();
        let w = 1 + slots;
        let split = |k: usize| -> Vec<Vec<Partials>> {
            rows.iter()
                .map(|r| (0..n).map(|p| r[p * w + k]).collect())
                .collect()
        };
        let drift = split(0);
        let b = [
            table(n, &drift, |d| d.dx),
            table(n, &drift, |d| d.dy),
            table(n, &drift, |d| d.du),
        ];
        let kappa = (0..slots)
            .map(|k| {
                let r = split(1 + k);
                [
                    table(n, &r, |d| d.dx),
                    table(n, &r, |d| d.dy),
                    table(n, &r, |d| d.du),
                ]
            })
            .collect();
        Self {
            b,
            kappa,
            direction,
        }
    }
}

impl Coefficients for VariationCoefficients {
    fn name(&self) -> &str {
        "variation"
    }

    fn drift(&self, p: &StatePoint<'_>) -> f64 {
        let (i, n) = (p.step, p.particle);
        self.b[0].at(i, n) * p.x
            + self.b[1].at(i, n) * p.y()
            + self.b[2].at(i, n) * self.direction.value(n, i)
    }

    fn diffusion(&self, p: &StatePoint<'_>, slot: Slot, _z: f64) -> f64 {
        let (i, n) = (p.step, p.particle);
        let c = &self.kappa[slot.index()];
        c[0].at(i, n) * p.x + c[1].at(i, n) * p.y() + c[2].at(i, n) * self.direction.value(n, i)
    }

    fn drift_partials(&self, p: &StatePoint<'_>) -> Partials {
        let (i, n) = (p.step, p.particle);
        Partials {
            dx: self.b[0].at(i, n),
            dy: self.b[1].at(i, n),
            du: 0.0,
        }
    }

    fn diffusion_partials(&self, p: &StatePoint<'_>, slot: Slot, _z: f64) -> Partials {
        let (i, n) = (p.step, p.particle);
        let c = &self.kappa[slot.index()];
        Partials {
            dx: c[0].at(i, n),
            dy: c[1].at(i, n),
            du: 0.0,
        }
    }
}

/// Variation process along the reference ensemble `e` (solved under `u`),
/// driven by the same noise.
pub fn variation_along(
    s: &Scenario,
    e: &ParticleEnsemble,
    u: &ControlPath,
    v: &ControlPath,
) -> Result<ParticleEnsemble> {
    let coeffs = VariationCoefficients::along(s, e, u, v.clone());
    interacting_particle_solve(&coeffs, 0.0, &s.ensemble, &ControlPath::zero())
}

/// Variation process `Z` in direction `v` at the control `u`.
pub fn solve_variation(s: &Scenario, u: &ControlPath, v: &ControlPath) -> Result<ParticleEnsemble> {
    let forward = solve_forward_unchecked(s, u)?;
    variation_along(s, &forward.ensemble, u, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateauxEstimate {
    /// Directional derivative from the variation process.
    pub formula: f64,
    pub formula_se: f64,
    /// `(J(u + theta v) - J(u - theta v)) / (2 theta)` under common random numbers.
    pub finite_difference: f64,
    pub finite_difference_se: f64,
    pub theta: f64,
}

impl GateauxEstimate {
    pub fn gap(&self) -> f64 {
        (self.formula - self.finite_difference).abs()
    }
}

/// Per-particle terms of the directional derivative of the objective.
fn formula_terms(
    s: &Scenario,
    e: &ParticleEnsemble,
    z: &ParticleEnsemble,
    u: &ControlPath,
    v: &ControlPath,
) -> Vec<f64> {
    let grid = e.grid();
    let dt = grid.dt();
    let n = e.n_particles();
    let last = grid.n_steps();
    let y = s.phi_means(e);
    let yt = s.chi_mean(e);
    let mixed: Vec<f64> = (0..=last)
        .map(|i| {
            let phi = |p: usize| {
                if i == last {
                    s.costs.chi_dx(e.value(p, i))
                } else {
                    s.costs.phi_dx(e.value(p, i))
                }
            };
            (0..n).map(|p| phi(p) * z.value(p, i)).sum::<f64>() / n as f64
        })
        .collect();
    (0..n)
        .map(|p| {
            let ip = e.intensity(p);
            let mut total = 0.0;
            for i in 0..last {
                let (lam_b, lam_h) = ip.at(i);
                let cp = CostPoint {
                    t: grid.knot(i),
                    lam_b,
                    lam_h,
                    x: e.value(p, i),
                    y: y[i],
                    u: u.value(p, i),
                };
                let d = s.costs.running_partials(&cp);
                total += (d.dx * z.value(p, i) + d.dy * mixed[i] + d.du * v.value(p, i)) * dt;
            }
            let (gx, gy) = s.costs.terminal_partials(e.value(p, last), yt);
            total + gx * z.value(p, last) + gy * mixed[last]
        })
        .collect()
}

/// Directional derivative of the objective at `u` in direction `v`, by the
/// variation-process formula and by a central difference with step `theta`.
pub fn gateaux_derivative(
    s: &Scenario,
    u: &ControlPath,
    v: &ControlPath,
    theta: f64,
) -> Result<GateauxEstimate> {
    let (n, nk) = (s.ensemble.n_particles, s.ensemble.grid.n_knots());
    let base = solve_forward_unchecked(s, u)?;
    let z = variation_along(s, &base.ensemble, u, v)?;
    let formula = mean_and_se(&formula_terms(s, &base.ensemble, &z, u, v));

    let up = u.perturbed(v, theta, n, nk);
    let down = u.perturbed(v, -theta, n, nk);
    let e_up = solve_forward_unchecked(s, &up)?;
    let e_down = solve_forward_unchecked(s, &down)?;
    let j_up = particle_payoffs(s, &e_up.ensemble, &up);
    let j_down = particle_payoffs(s, &e_down.ensemble, &down);
    let quotient: Vec<f64> = j_up
        .iter()
        .zip(&j_down)
        .map(|(a, b)| (a - b) / (2.0 * theta))
        .collect();
    let fd = mean_and_se(&quotient);
    Ok(GateauxEstimate {
        formula: formula.value,
        formula_se: formula.std_error,
        finite_difference: fd.value,
        finite_difference_se: fd.std_error,
        theta,
    })
}

/// `mean_n sup_i |(X^{u + theta v} - X^u) / theta - Z|^2` for each `theta`.
pub fn difference_quotient_errors(
    s: &Scenario,
    u: &ControlPath,
    v: &ControlPath,
    thetas: &[f64],
) -> Result<Vec<f64>> {
    let (n, nk) = (s.ensemble.n_particles, s.ensemble.grid.n_knots());
    let base = solve_forward_unchecked(s, u)?;
    let z = variation_along(s, &base.ensemble, u, v)?;
    thetas
        .iter()
        .map(|&theta| {
            let moved = solve_forward_unchecked(s, &u.perturbed(v, theta, n, nk))?;
            let err = (0..n)
                .map(|p| {
                    (0..nk)
                        .map(|i| {
                            ((moved.ensemble.value(p, i) - base.ensemble.value(p, i)) / theta
                                - z.value(p, i))
                            .powi(2)
                        })
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / n as f64;
            Ok(err)
        })
        .collect()
}
