use rayon::prelude::*;
use serde::Serialize;

use super::costs::CostPoint;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::mfbsde::{
    ensemble_noise, solve_linear, BsdeRun, BsdeSolution, CoefPath, LinearDriver, LinearSide,
};
use crate::mfsde::{ControlPath, ParticleEnsemble, StatePoint};
use crate::noise::Slot;
use crate::regression::{Design, RegressionBasis};

/// Linear mean-field BSDE of the adjoint pair `(p, q)`.
///
/// `driver` holds the coefficients in the form
/// `dp = -E'[A + B p + C p' + D q l + E q' l'] dt + q dmu`; the solver
/// receives them negated.
#[derive(Debug, Clone, Serialize)]
pub struct AdjointSpec {
    pub driver: LinearDriver,
    pub terminal: Vec<f64>,
    pub terminal_copy: Vec<f64>,
}

/// Collapse a `(step, particle)` table to the cheapest equivalent path.
fn compress(n: usize, values: Vec<f64>) -> CoefPath {
    match values.first() {
        None => CoefPath::Zero,
        Some(&v0) if values.iter().all(|&v| v == v0) => {
            if v0 == 0.0 {
                CoefPath::Zero
            } else {
                CoefPath::Constant(v0)
            }
        }
        _ => CoefPath::values(n, values),
    }
}

fn check(v: f64, what: &str, step: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::MissingDerivative(format!(
            "{what} is not finite at step {step}"
        )))
    }
}

/// Coefficients of one side along `(X, E[X], u)`.
fn assemble_side(
    s: &Scenario,
    e: &ParticleEnsemble,
    u: &ControlPath,
) -> Result<(LinearSide, Vec<f64>)> {
    let grid = e.grid();
    let levy = e.levy();
    let slots = levy.n_slots();
    let n = e.n_particles();
    let feats = s.dynamics_features(e);
    let y1 = s.phi_means(e);
    // One row per step: [a_own, a_scale, a_primed, b, c, d_0.., e_0..] per particle.
    let width = 5 + 2 * slots;
    let rows: Vec<Vec<f64>> = (0..grid.n_steps())
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut row = vec![0.0; width * n];
            for p in 0..n {
                let (lam_b, lam_h) = e.intensity(p).at(i);
                let x = e.value(p, i);
                let uv = u.value(p, i);
                let sp = StatePoint {
                    t: grid.knot(i),
                    step: i,
                    particle: p,
                    lam_b,
                    lam_h,
                    x,
                    features: &feats[i],
                    u: uv,
                };
                let cp = CostPoint {
                    t: grid.knot(i),
                    lam_b,
                    lam_h,
                    x,
                    y: y1[i],
                    u: uv,
                };
                let fc = s.costs.running_partials(&cp);
                let bd = s.dynamics.drift_partials(&sp);
                let r = &mut row[p * width..(p + 1) * width];
                r[0] = check(fc.dx, "d_x f", i)?;
                r[1] = check(s.costs.phi_dx(x), "d_x phi", i)?;
                r[2] = check(fc.dy, "d_y f", i)?;
                r[3] = check(bd.dx, "d_x b", i)?;
                r[4] = check(bd.dy, "d_y b", i)?;
                for k in 0..slots {
                    let z = if k == 0 { 0.0 } else { levy.marks()[k - 1] };
                    let kd = s.dynamics.diffusion_partials(&sp, Slot::from_index(k), z);
                    r[5 + k] = check(kd.dx, "d_x kappa", i)?;
                    r[5 + slots + k] = check(kd.dy, "d_y kappa", i)?;
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let column = |c: usize| {
        compress(
            n,
            rows.iter()
                .flat_map(|r| (0..n).map(move |p| r[p * width + c]))
                .collect(),
        )
    };
    let side = LinearSide {
        a_own: column(0),
        a_scale: column(1),
        a_primed: column(2),
        b: column(3),
        c: column(4),
        d: (0..slots).map(|k| column(5 + k)).collect(),
        e: (0..slots).map(|k| column(5 + slots + k)).collect(),
    };

    let last = grid.n_steps();
    let chi = s.chi_mean(e);
    let partials: Vec<(f64, f64)> = (0..n)
        .map(|p| s.costs.terminal_partials(e.value(p, last), chi))
        .collect();
    let mean_gy = partials.iter().map(|g| g.1).sum::<f64>() / n as f64;
    let terminal = (0..n)
        .map(|p| {
            check(
                partials[p].0 + mean_gy * s.costs.chi_dx(e.value(p, last)),
                "terminal gradient",
                last,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((side, terminal))
}

/// Adjoint coefficients along the controlled paths of both coordinates.
pub fn assemble_adjoint(
    s: &Scenario,
    u: &ControlPath,
    u_copy: &ControlPath,
    e: &ParticleEnsemble,
    e_copy: &ParticleEnsemble,
) -> Result<AdjointSpec> {
    let (main, terminal) = assemble_side(s, e, u)?;
    let (copy, terminal_copy) = assemble_side(s, e_copy, u_copy)?;
    Ok(AdjointSpec {
        driver: LinearDriver {
            main,
            copy,
            n_slots: e.levy().n_slots(),
        },
        terminal,
        terminal_copy,
    })
}

/// Conditional projections of `(p, q)` onto the observable filtration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    n_particles: usize,
    n_slots: usize,
    /// Knot-major.
    p: Vec<f64>,
    /// Step-major, `N x n_slots` per step.
    q: Vec<f64>,
}

impl Projection {
    pub fn p(&self, i: usize, n: usize) -> f64 {
        self.p[i * self.n_particles + n]
    }

    pub fn q(&self, i: usize, n: usize) -> &[f64] {
        let o = (i * self.n_particles + n) * self.n_slots;
        &self.q[o..o + self.n_slots]
    }

    pub fn mean_p(&self, i: usize) -> f64 {
        self.p[i * self.n_particles..(i + 1) * self.n_particles]
            .iter()
            .sum::<f64>()
            / self.n_particles as f64
    }
}

/// Identity when the intensity is deterministic; otherwise a per-knot
/// regression on `(X_t, X_t^2, G_t)`, all observable without the clock.
pub fn project_to_f(
    sol: &BsdeSolution,
    e: &ParticleEnsemble,
    basis: &RegressionBasis,
) -> Result<Projection> {
    let n = sol.n_particles();
    let slots = sol.n_slots();
    let grid = sol.grid();
    let ns = grid.n_steps();
    if !e.intensities().is_stochastic() {
        let p = (0..=ns).flat_map(|i| sol.y_knot(i).to_vec()).collect();
        let q = (0..ns).flat_map(|i| sol.z_step(i).to_vec()).collect();
        return Ok(Projection {
            n_particles: n,
            n_slots: slots,
            p,
            q,
        });
    }
    let noise = ensemble_noise(e);
    let mut cum_g = vec![0.0; n];
    let mut p = Vec::with_capacity((ns + 1) * n);
    let mut q = vec![0.0; ns * n * slots];
    for i in 0..=ns {
        let x = e.cross_section(i);
        let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
        let design = Design::new(&[&x, &x2, &cum_g], basis, i)?;
        p.extend(design.fit(sol.y_knot(i)));
        if i < ns {
            for k in 0..slots {
                let fitted = design.fit(&sol.z_slot(i, k));
                for (m, v) in fitted.into_iter().enumerate() {
                    q[(i * n + m) * slots + k] = v;
                }
            }
            for (m, c) in cum_g.iter_mut().enumerate() {
                *c += noise[m].d_g(i);
            }
        }
    }
    Ok(Projection {
        n_particles: n,
        n_slots: slots,
        p,
        q,
    })
}

/// Adjoint pair on both coordinates plus the projections of the main one.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub run: BsdeRun,
    pub projected: Projection,
}

impl AdjointSolution {
    pub fn p(&self) -> &BsdeSolution {
        &self.run.solution
    }

    pub fn p_f(&self, i: usize, n: usize) -> f64 {
        self.projected.p(i, n)
    }

    pub fn q_f(&self, i: usize, n: usize) -> &[f64] {
        self.projected.q(i, n)
    }
}

pub fn solve_adjoint(
    s: &Scenario,
    spec: &AdjointSpec,
    e: &ParticleEnsemble,
    e_copy: &ParticleEnsemble,
) -> Result<AdjointSolution> {
    let run = solve_linear(
        &spec.driver.negated(),
        &spec.terminal,
        &spec.terminal_copy,
        e,
        e_copy,
        &s.bsde,
    )?;
    let projected = project_to_f(&run.solution, e, &s.projection)?;
    Ok(AdjointSolution { run, projected })
}
