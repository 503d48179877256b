use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adjoint::AdjointSolution;
use super::hamiltonian::{du_hamiltonian, f_hamiltonian, HamiltonianArgs};
use super::scenario::Scenario;
use crate::error::{invalid, Result};
use crate::mfsde::{ControlPath, ParticleEnsemble};
use crate::rng::{substream, StreamKind};

/// Tolerances and probe sizes of the maximum-principle checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    /// Points of the control grid, endpoints included.
    pub grid_points: usize,
    /// Stationarity is accepted within this many standard errors.
    pub se_multiplier: f64,
    pub abs_tol: f64,
    pub concavity_tol: f64,
    /// State pairs probed per sampled (knot, particle).
    pub probe_pairs: usize,
    /// Particles sampled per knot by the sufficient check.
    pub probe_particles: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            grid_points: 101,
            se_multiplier: 5.0,
            abs_tol: 1e-8,
            concavity_tol: 1e-9,
            probe_pairs: 8,
            probe_particles: 16,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnotStationarity {
    pub knot: usize,
    pub t: f64,
    /// Mean of `d_u H^F` over particles with an interior control.
    pub mean: f64,
    pub std_error: f64,
    pub interior: usize,
    /// `mean_n max_v [d_u H^F (v - u)]_+`.
    pub variational: f64,
    pub boundary_violations: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Verdicts {
    pub stationarity: Option<bool>,
    pub boundary: Option<bool>,
    pub maximization: Option<bool>,
    pub concavity: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxPrincipleReport {
    pub grid_points: usize,
    /// `sup_i mean_n max_v [d_u H^F (v - u)]_+`.
    pub variational_residual: f64,
    /// `sup_i |mean d_u H^F|` over interior controls.
    pub interior_stationarity: f64,
    /// `sup_i |mean| / se` over knots with interior controls; 0 at knots whose mean is within `abs_tol`.
    pub max_stationarity_score: f64,
    pub boundary_violations: usize,
    /// `sup (max_grid H^F - H^F(u))_+` over the sampled points.
    pub maximization_gap: Option<f64>,
    pub concavity_probes: Option<usize>,
    pub concavity_violations: Option<usize>,
    pub tolerances: CheckConfig,
    pub verdicts: Verdicts,
    pub per_knot: Vec<KnotStationarity>,
}

impl MaxPrincipleReport {
    fn empty(cfg: &CheckConfig) -> Self {
        Self {
            grid_points: cfg.grid_points,
            variational_residual: 0.0,
            interior_stationarity: 0.0,
            max_stationarity_score: 0.0,
            boundary_violations: 0,
            maximization_gap: None,
            concavity_probes: None,
            concavity_violations: None,
            tolerances: *cfg,
            verdicts: Verdicts::default(),
            per_knot: Vec::new(),
        }
    }

    /// All verdicts that were computed passed.
    pub fn passed(&self) -> bool {
        let v = self.verdicts;
        [v.stationarity, v.boundary, v.maximization, v.concavity]
            .iter()
            .all(|x| x.unwrap_or(true))
    }

    /// Fold the results of another check into this report.
    pub fn merge(mut self, other: MaxPrincipleReport) -> Self {
        if self.per_knot.is_empty() {
            self.per_knot = other.per_knot;
            self.variational_residual = other.variational_residual;
            self.interior_stationarity = other.interior_stationarity;
            self.max_stationarity_score = other.max_stationarity_score;
            self.boundary_violations = other.boundary_violations;
            self.verdicts.stationarity = other.verdicts.stationarity;
            self.verdicts.boundary = other.verdicts.boundary;
        }
        self.maximization_gap = self.maximization_gap.or(other.maximization_gap);
        self.concavity_probes = self.concavity_probes.or(other.concavity_probes);
        self.concavity_violations = self.concavity_violations.or(other.concavity_violations);
        self.verdicts.maximization = self.verdicts.maximization.or(other.verdicts.maximization);
        self.verdicts.concavity = self.verdicts.concavity.or(other.verdicts.concavity);
        self
    }

    /// CSV with columns `knot,t,mean_du_h,std_error,interior,variational`.
    pub fn write_du_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "knot",
            "t",
            "mean_du_h",
            "std_error",
            "interior",
            "variational",
        ])?;
        for k in &self.per_knot {
            wtr.write_record(&[
                k.knot.to_string(),
                k.t.to_string(),
                k.mean.to_string(),
                k.std_error.to_string(),
                k.interior.to_string(),
                k.variational.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Builds Hamiltonian arguments at `(knot, particle)` with projected adjoints.
struct Context<'a> {
    e: &'a ParticleEnsemble,
    adj: &'a AdjointSolution,
    features: Vec<Vec<f64>>,
    y1: Vec<f64>,
}

impl<'a> Context<'a> {
    fn new(s: &'a Scenario, e: &'a ParticleEnsemble, adj: &'a AdjointSolution) -> Result<Self> {
        if adj.p().n_particles() != e.n_particles() || adj.p().grid() != e.grid() {
            return Err(invalid("adjoint solution does not belong to this ensemble"));
        }
        Ok(Self {
            e,
            adj,
            features: s.dynamics_features(e),
            y1: s.phi_means(e),
        })
    }

    fn args(&self, i: usize, n: usize, u: f64) -> HamiltonianArgs<'_> {
        let (lam_b, lam_h) = self.e.intensity(n).at(i);
        HamiltonianArgs {
            t: self.e.grid().knot(i),
            step: i,
            particle: n,
            lam_b,
            lam_h,
            x: self.e.value(n, i),
            y1: self.y1[i],
            features: &self.features[i],
            u,
            p: self.adj.p_f(i, n),
            q: self.adj.q_f(i, n),
        }
    }
}

fn bounded(s: &Scenario) -> Result<()> {
    let set = s.control_set;
    if !(set.min.is_finite() && set.max.is_finite()) {
        return Err(invalid(
            "maximum-principle checks need a bounded control set",
        ));
    }
    Ok(())
}

/// First-order conditions: stationarity at interior controls, the sign
/// condition at the boundary and the variational inequality residual.
pub fn check_necessary(
    s: &Scenario,
    u: &ControlPath,
    e: &ParticleEnsemble,
    adj: &AdjointSolution,
    cfg: &CheckConfig,
) -> Result<MaxPrincipleReport> {
    bounded(s)?;
    let ctx = Context::new(s, e, adj)?;
    let set = s.control_set;
    let levy = e.levy();
    let width = set.max - set.min;
    let edge = 1e-12 * (1.0 + width);
    let per_knot: Vec<KnotStationarity> = (0..e.grid().n_steps())
        .into_par_iter()
        .map(|i| {
            let (mut sum, mut sq, mut interior, mut variational, mut violations) =
                (0.0, 0.0, 0usize, 0.0, 0usize);
            for n in 0..e.n_particles() {
                let uv = u.value(n, i);
                let d = du_hamiltonian(s, levy, &ctx.args(i, n, uv));
                variational += (d * (set.max - uv)).max(d * (set.min - uv)).max(0.0);
                if uv <= set.min + edge && set.max - uv > edge {
                    if d > cfg.abs_tol {
                        violations += 1;
                    }
                } else if uv >= set.max - edge && uv - set.min > edge {
                    if d < -cfg.abs_tol {
                        violations += 1;
                    }
                } else {
                    interior += 1;
                    sum += d;
                    sq += d * d;
                }
            }
            let m = if interior > 0 {
                sum / interior as f64
            } else {
                0.0
            };
            let se = if interior > 1 {
                let var = ((sq - interior as f64 * m * m) / (interior as f64 - 1.0)).max(0.0);
                (var / interior as f64).sqrt()
            } else {
                0.0
            };
            KnotStationarity {
                knot: i,
                t: e.grid().knot(i),
                mean: m,
                std_error: se,
                interior,
                variational: variational / e.n_particles() as f64,
                boundary_violations: violations,
            }
        })
        .collect();

    let mut report = MaxPrincipleReport::empty(cfg);
    let mut stationary = true;
    for k in &per_knot {
        report.variational_residual = report.variational_residual.max(k.variational);
        report.boundary_violations += k.boundary_violations;
        if k.interior > 0 {
            report.interior_stationarity = report.interior_stationarity.max(k.mean.abs());
            let score = if k.mean.abs() <= cfg.abs_tol {
                0.0
            } else if k.std_error > 0.0 {
                k.mean.abs() / k.std_error
            } else {
                f64::INFINITY
            };
            report.max_stationarity_score = report.max_stationarity_score.max(score);
            stationary &= k.mean.abs() <= cfg.se_multiplier * k.std_error + cfg.abs_tol;
        }
    }
    report.verdicts.stationarity = Some(stationary);
    report.verdicts.boundary = Some(report.boundary_violations == 0);
    report.per_knot = per_knot;
    Ok(report)
}

/// Grid maximum of `H^F` over the control set, ties broken toward the smallest control.
fn grid_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, |m, v| if v > m { v } else { m })
}

/// Sufficient conditions: `u` maximises `H^F` over the control grid, and
/// `h = max_U H^F` passes midpoint concavity probes in `(x, y1, y2)`.
pub fn check_sufficient(
    s: &Scenario,
    u: &ControlPath,
    e: &ParticleEnsemble,
    adj: &AdjointSolution,
    cfg: &CheckConfig,
) -> Result<MaxPrincipleReport> {
    bounded(s)?;
    let ctx = Context::new(s, e, adj)?;
    let levy = e.levy();
    let grid_u = s.control_set.grid(cfg.grid_points);
    let n = e.n_particles();
    let sample: Vec<usize> = if n <= cfg.probe_particles {
        (0..n).collect()
    } else {
        (0..cfg.probe_particles)
            .map(|j| j * n / cfg.probe_particles)
            .collect()
    };
    const ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];

    let results: Vec<(f64, usize, usize)> = (0..e.grid().n_steps())
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, StreamKind::Auxiliary, i as u64);
            let xs = e.cross_section(i);
            let (lo, hi) = xs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                    (a.min(x), b.max(x))
                });
            let spread = (hi - lo).max(1.0);
            let mid = 0.5 * (lo + hi);
            let (y1, y2) = (ctx.y1[i], ctx.features[i].first().copied().unwrap_or(0.0));
            let (mut gap, mut probes, mut violations) = (0.0f64, 0usize, 0usize);
            for &p in &sample {
                let base = ctx.args(i, p, u.value(p, i));
                let at_u = f_hamiltonian(s, levy, &base);
                let best = grid_max(
                    grid_u
                        .iter()
                        .map(|&v| f_hamiltonian(s, levy, &HamiltonianArgs { u: v, ..base })),
                );
                gap = gap.max(best - at_u);

                let h = |x: f64, a: f64, b: f64| {
                    let mut feats = ctx.features[i].clone();
                    if let Some(f0) = feats.first_mut() {
                        *f0 = b;
                    }
                    let args = HamiltonianArgs {
                        x,
                        y1: a,
                        features: &feats,
                        ..base
                    };
                    grid_max(
                        grid_u
                            .iter()
                            .map(|&v| f_hamiltonian(s, levy, &HamiltonianArgs { u: v, ..args })),
                    )
                };
                for _ in 0..cfg.probe_pairs {
                    let mut draw = || {
                        [
                            mid + spread * (rng.random::<f64>() - 0.5),
                            y1 + spread * (rng.random::<f64>() - 0.5),
                            y2 + spread * (rng.random::<f64>() - 0.5),
                        ]
                    };
                    let (a, b) = (draw(), draw());
                    let (ha, hb) = (h(a[0], a[1], a[2]), h(b[0], b[1], b[2]));
                    for alpha in ALPHAS {
                        let m: Vec<f64> = (0..3)
                            .map(|k| alpha * a[k] + (1.0 - alpha) * b[k])
                            .collect();
                        probes += 1;
                        if h(m[0], m[1], m[2]) < alpha * ha + (1.0 - alpha) * hb - cfg.concavity_tol
                        {
                            violations += 1;
                        }
                    }
                }
            }
            (gap.max(0.0), probes, violations)
        })
        .collect();

    let mut report = MaxPrincipleReport::empty(cfg);
    let gap = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let probes = results.iter().map(|r| r.1).sum();
    let violations = results.iter().map(|r| r.2).sum();
    report.maximization_gap = Some(gap);
    report.concavity_probes = Some(probes);
    report.concavity_violations = Some(violations);
    report.verdicts.maximization = Some(gap <= cfg.abs_tol);
    report.verdicts.concavity = Some(violations == 0);
    Ok(report)
}

/// Pointwise maximiser of `H^F` over the control set at every knot and
/// particle: the best grid point (ties toward the smaller control), refined
/// between its grid neighbours by bisection on `d/du H^F`, or by
/// golden-section search when the derivative does not bracket a root. The last knot reuses
/// the last step.
pub fn maximize_hamiltonian(
    s: &Scenario,
    e: &ParticleEnsemble,
    adj: &AdjointSolution,
    grid_points: usize,
) -> Result<ControlPath> {
    bounded(s)?;
    let ctx = Context::new(s, e, adj)?;
    let levy = e.levy();
    let grid_u = s.control_set.grid(grid_points);
    let last = e.grid().n_steps() - 1;
    let rows: Vec<Vec<f64>> = (0..e.n_particles())
        .into_par_iter()
        .map(|n| {
            (0..e.grid().n_knots())
                .map(|knot| {
                    let i = knot.min(last);
                    let h = |v: f64| f_hamiltonian(s, levy, &ctx.args(i, n, v));
                    let mut k = 0;
                    let mut best = f64::NEG_INFINITY;
                    for (j, &v) in grid_u.iter().enumerate() {
                        let hv = h(v);
                        if hv > best {
                            best = hv;
                            k = j;
                        }
                    }
                    if grid_u.len() < 3 {
                        return grid_u[k];
                    }
                    let (mut a, mut b) = (
                        grid_u[k.saturating_sub(1)],
                        grid_u[(k + 1).min(grid_u.len() - 1)],
                    );
                    let du = |v: f64| du_hamiltonian(s, levy, &ctx.args(i, n, v));
                    if du(a) > 0.0 && du(b) < 0.0 {
                        // Bisection on the sign of the derivative reaches full precision.
                        for _ in 0..100 {
                            let m = 0.5 * (a + b);
                            if m <= a || m >= b {
                                break;
                            }
                            if du(m) > 0.0 {
                                a = m;
                            } else {
                                b = m;
                            }
                        }
                    } else {
                        const INV_PHI: f64 = 0.618_033_988_749_894_9;
                        let mut c = b - INV_PHI * (b - a);
                        let mut d = a + INV_PHI * (b - a);
                        let (mut hc, mut hd) = (h(c), h(d));
                        for _ in 0..80 {
                            if hc >= hd {
                                b = d;
                                d = c;
                                hd = hc;
                                c = b - INV_PHI * (b - a);
                                hc = h(c);
                            } else {
                                a = c;
                                c = d;
                                hc = hd;
                                d = a + INV_PHI * (b - a);
                                hd = h(d);
                            }
                        }
                    }
                    let refined = 0.5 * (a + b);
                    if h(refined) >= best {
                        refined
                    } else {
                        grid_u[k]
                    }
                })
                .collect()
        })
        .collect();
    Ok(ControlPath::PerParticle(rows))
}
