//! Mean-field Vasicek model of an economy of `N` sectors whose average rate
//! is steered by a central bank, with a deterministic Riccati benchmark.
//!
//! Dynamics `dr = theta (E[r] - u - r) dt + sigma dmu`, reward
//! `-(u^2 + E[r]^2 + r^2)`, control set `[0, u_max]`. The candidate optimal
//! control is `-(theta / 2) pF` where `pF` is the projected adjoint.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    assemble_adjoint, check_necessary, check_sufficient, estimate_objective, particle_payoffs,
    solve_adjoint, solve_controlled_forward, solve_controlled_forward_on, CheckConfig,
    MaxPrincipleReport, ObjectiveEstimate, QuadraticCosts, Scenario,
};
use crate::error::{invalid, Result};
use crate::measures::{EmpiricalMeasure, LawFlow};
use crate::mfsde::{
    euler_solve_fixed_law, interacting_particle_solve, Coefficients, ControlPath, ControlSet,
    EnsembleConfig, Partials, ParticleEnsemble, PicardDiagnostics, StatePoint,
};
use crate::noise::{IntensityModel, LevyGrid, MarkFunction, Slot, TimeGrid};
use crate::rng::{substream, StreamKind};

/// Mean-reversion speed: a constant or one value per knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Constant(f64),
    Path(Vec<f64>),
}

impl Theta {
    fn on_grid(&self, n_knots: usize) -> Result<Vec<f64>> {
        let v = match self {
            Theta::Constant(c) => vec![*c; n_knots],
            Theta::Path(p) if p.len() == n_knots => p.clone(),
            Theta::Path(p) => {
                return Err(invalid(format!(
                    "theta path has {} values for {n_knots} knots",
                    p.len()
                )))
            }
        };
        if v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(invalid("theta must be finite and nonnegative"));
        }
        Ok(v)
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Theta::Constant(c) => Some(*c),
            Theta::Path(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VasicekScenario {
    pub theta: Theta,
    /// Noise loading per slot, constant in time.
    pub sigma: MarkFunction,
    pub r0: f64,
    pub intensity: IntensityModel,
    pub levy: LevyGrid,
    pub horizon: f64,
    pub n_steps: usize,
    /// Upper end of the control set; `None` selects `10 |r0| theta T`.
    pub u_max: Option<f64>,
    pub n_particles: usize,
    pub seed: u64,
    /// Average the N-agent system with `1/sqrt(N)` instead of `1/N`.
    pub paper_averaging: bool,
}

impl VasicekScenario {
    /// `theta = 1`, `r0 = 1`, `T = 1`, Gaussian noise with loading `sigma`.
    pub fn standard(sigma: f64, n_particles: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            theta: Theta::Constant(1.0),
            sigma: MarkFunction::constant(sigma, 0),
            r0: 1.0,
            intensity: IntensityModel::constant(1.0, 0.0),
            levy: LevyGrid::gaussian_only(),
            horizon: 1.0,
            n_steps,
            u_max: None,
            n_particles,
            seed,
            paper_averaging: false,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.n_steps)
    }

    pub fn theta_path(&self) -> Result<Vec<f64>> {
        self.theta.on_grid(self.n_steps + 1)
    }

    pub fn control_set(&self) -> Result<ControlSet> {
        let theta_max = self.theta_path()?.into_iter().fold(0.0, f64::max);
        let u_max = self
            .u_max
            .unwrap_or(10.0 * self.r0.abs() * theta_max * self.horizon);
        ControlSet::new(0.0, u_max)
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig> {
        Ok(EnsembleConfig::new(
            self.grid()?,
            self.n_particles,
            self.seed,
            self.intensity.clone(),
            self.levy.clone(),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.theta_path()?;
        if self.sigma.v.len() != self.levy.len() || !self.sigma.is_finite() {
            return Err(invalid("sigma must be finite with one value per jump mark"));
        }
        if !self.r0.is_finite() {
            return Err(invalid("r0 must be finite"));
        }
        self.intensity.validate()?;
        self.control_set()?;
        Ok(())
    }

    pub fn dynamics(&self) -> Result<VasicekDynamics> {
        Ok(VasicekDynamics {
            theta: self.theta_path()?,
            sigma: self.sigma.clone(),
            mean_scale: 1.0,
        })
    }
}

/// `b = theta (-x + s y - u)`, `kappa = sigma(z)`; `s = 1` in the mean-field model.
#[derive(Debug, Clone, PartialEq)]
pub struct VasicekDynamics {
    /// Per knot.
    pub theta: Vec<f64>,
    pub sigma: MarkFunction,
    /// Multiplies the cross-sectional mean; `sqrt(N)` reproduces a `1/sqrt(N)` sum.
    pub mean_scale: f64,
}

impl Coefficients for VasicekDynamics {
    fn name(&self) -> &str {
        "vasicek"
    }

    fn drift(&self, p: &StatePoint<'_>) -> f64 {
        self.theta[p.step] * (-p.x + self.mean_scale * p.y() - p.u)
    }

    fn diffusion(&self, _: &StatePoint<'_>, slot: Slot, _: f64) -> f64 {
        self.sigma.slot(slot.index())
    }

    fn lipschitz(&self) -> f64 {
        3.0 * self.bound()
    }

    fn bound(&self) -> f64 {
        self.theta.iter().fold(0.0_f64, |m, t| m.max(t.abs())) * self.mean_scale.max(1.0)
    }

    fn drift_partials(&self, p: &StatePoint<'_>) -> Partials {
        let th = self.theta[p.step];
        Partials {
            dx: -th,
            dy: th * self.mean_scale,
            du: -th,
        }
    }

    fn diffusion_partials(&self, _: &StatePoint<'_>, _: Slot, _: f64) -> Partials {
        Partials::default()
    }
}

/// Vasicek drift with a bounded nonlinear term and a control-dependent
/// Gaussian loading: `b + a sin(x + u)`, `kappa(0) = sigma(0) (1 + c cos u)`.
/// Used where the linear model makes difference quotients exact.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvedVasicek {
    pub base: VasicekDynamics,
    pub drift_bend: f64,
    pub loading_bend: f64,
}

impl Coefficients for CurvedVasicek {
    fn name(&self) -> &str {
        "vasicek-curved"
    }

    fn drift(&self, p: &StatePoint<'_>) -> f64 {
        self.base.drift(p) + self.drift_bend * (p.x + p.u).sin()
    }

    fn diffusion(&self, p: &StatePoint<'_>, slot: Slot, z: f64) -> f64 {
        let s = self.base.diffusion(p, slot, z);
        if slot.index() == 0 {
            s * (1.0 + self.loading_bend * p.u.cos())
        } else {
            s
        }
    }

    fn lipschitz(&self) -> f64 {
        self.base.lipschitz()
            + self.drift_bend.abs()
            + self.loading_bend.abs() * self.base.sigma.v0.abs()
    }

    fn bound(&self) -> f64 {
        self.base.bound() + self.drift_bend.abs()
    }

    fn drift_partials(&self, p: &StatePoint<'_>) -> Partials {
        let g = self.base.drift_partials(p);
        let c = self.drift_bend * (p.x + p.u).cos();
        Partials {
            dx: g.dx + c,
            dy: g.dy,
            du: g.du + c,
        }
    }

    fn diffusion_partials(&self, p: &StatePoint<'_>, slot: Slot, z: f64) -> Partials {
        if slot.index() == 0 {
            Partials {
                dx: 0.0,
                dy: 0.0,
                du: -self.base.diffusion(p, slot, z) * self.loading_bend * p.u.sin(),
            }
        } else {
            Partials::default()
        }
    }
}

/// Mean-field scenario with `CurvedVasicek` dynamics (bends 0.3 and 0.2).
pub fn build_curved_scenario(vs: &VasicekScenario) -> Result<Scenario> {
    let mut s = build_mean_field_scenario(vs)?;
    s.dynamics = Arc::new(CurvedVasicek {
        base: vs.dynamics()?,
        drift_bend: 0.3,
        loading_bend: 0.2,
    });
    Ok(s)
}

/// Control problem of the mean-field limit.
pub fn build_mean_field_scenario(vs: &VasicekScenario) -> Result<Scenario> {
    vs.validate()?;
    Ok(Scenario::new(
        Arc::new(vs.dynamics()?),
        Arc::new(QuadraticCosts::lq()),
        vs.control_set()?,
        vs.r0,
        vs.ensemble()?,
    ))
}

/// Deterministic linear-quadratic benchmark on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub t: Vec<f64>,
    pub k: Vec<f64>,
    /// Controlled mean `E[r]`.
    pub m: Vec<f64>,
    pub u_star: Vec<f64>,
}

impl RiccatiSolution {
    /// Optimal reduced cost `min int (u^2 + 2 m^2) dt = k_0 m_0^2`.
    pub fn value(&self) -> f64 {
        self.k[0] * self.m[0] * self.m[0]
    }
}

/// Mean-optimal deterministic control for constant `theta`: `k' = theta^2 k^2 - 2`,
/// `k_T = 0` backward, `m' = -theta^2 k m` forward, `u* = theta k m`, all by
/// explicit Euler on `grid`.
pub fn riccati_oracle(theta: f64, r0: f64, grid: &TimeGrid) -> RiccatiSolution {
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut k = vec![0.0; n + 1];
    for i in (0..n).rev() {
        k[i] = k[i + 1] - dt * (theta * theta * k[i + 1] * k[i + 1] - 2.0);
    }
    let mut m = vec![r0; n + 1];
    for i in 0..n {
        m[i + 1] = m[i] - dt * theta * theta * k[i] * m[i];
    }
    let u_star = k.iter().zip(&m).map(|(k, m)| theta * k * m).collect();
    RiccatiSolution {
        t: grid.knots().to_vec(),
        k,
        m,
        u_star,
    }
}

/// Reduced cost `int (u^2 + 2 m^2) dt` of a control held constant on each
/// grid step, with `m' = -theta u`, integrated exactly.
pub fn reduced_cost(theta: f64, r0: f64, grid: &TimeGrid, u: &[f64]) -> f64 {
    let h = grid.dt();
    let mut m = r0;
    let mut cost = 0.0;
    for &c in u.iter().take(grid.n_steps()) {
        let next = m - theta * c * h;
        cost += h * c * c + 2.0 * h * (m * m + m * next + next * next) / 3.0;
        m = next;
    }
    cost
}

/// Coupled `N`-agent system with independent noises.
pub fn n_agent_simulate(
    vs: &VasicekScenario,
    n: usize,
    u: &ControlPath,
    block: u64,
) -> Result<ParticleEnsemble> {
    vs.validate()?;
    if n < 2 {
        return Err(invalid("the N-agent system needs N >= 2"));
    }
    let mut dynamics = vs.dynamics()?;
    if vs.paper_averaging {
        dynamics.mean_scale = (n as f64).sqrt();
    }
    let cfg = vs.ensemble()?.with_particles(n).with_block(block);
    interacting_particle_solve(&dynamics, vs.r0, &cfg, u)
}

/// Exact mean of the mean-field Euler scheme under a deterministic control:
/// `m_{i+1} = m_i - theta_i u_i dt`.
pub fn mean_path(vs: &VasicekScenario, u: &ControlPath) -> Result<Vec<f64>> {
    let theta = vs.theta_path()?;
    let grid = vs.grid()?;
    let mut m = vec![vs.r0; grid.n_knots()];
    for i in 0..grid.n_steps() {
        m[i + 1] = m[i] - theta[i] * u.value(0, i) * grid.dt();
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VasicekRunConfig {
    pub check: CheckConfig,
    pub perturbations: usize,
    pub perturbation_size: f64,
    pub perturbation_segments: usize,
    pub seed: u64,
}

impl Default for VasicekRunConfig {
    fn default() -> Self {
        Self {
            check: CheckConfig::default(),
            perturbations: 40,
            perturbation_size: 0.1,
            perturbation_segments: 10,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveRow {
    pub control: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationSummary {
    pub trials: usize,
    /// Trials with `J(u_hat) + 5 se >= J(perturbed)`.
    pub dominated: usize,
    pub fraction: f64,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub knot: usize,
    pub t: f64,
    pub mean_r: f64,
    pub mean_u_hat: f64,
    pub u_star: Option<f64>,
    pub mean_p_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VasicekReport {
    pub objectives: Vec<ObjectiveRow>,
    /// Relative `L^2(grid)` distance between the mean of `u_hat` and `u*`.
    pub control_rel_l2_error: Option<f64>,
    pub riccati_value: Option<f64>,
    pub max_principle: MaxPrincipleReport,
    pub perturbations: Option<PerturbationSummary>,
    pub forward: PicardDiagnostics,
    pub adjoint_trace: Vec<f64>,
    pub adjoint_converged: bool,
    pub series: Vec<SeriesRow>,
}

impl VasicekReport {
    /// CSV with columns `knot,t,mean_r,mean_u_hat,u_star,mean_p_f`.
    pub fn write_series_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["knot", "t", "mean_r", "mean_u_hat", "u_star", "mean_p_f"])?;
        for r in &self.series {
            wtr.write_record(&[
                r.knot.to_string(),
                r.t.to_string(),
                r.mean_r.to_string(),
                r.mean_u_hat.to_string(),
                r.u_star.map(|v| v.to_string()).unwrap_or_default(),
                r.mean_p_f.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Everything `run_example` computes, for callers that need the raw objects.
#[derive(Debug, Clone)]
pub struct VasicekRun {
    pub report: VasicekReport,
    pub scenario: Scenario,
    pub reference_control: ControlPath,
    pub u_hat: ControlPath,
    pub ensemble: ParticleEnsemble,
    pub riccati: Option<RiccatiSolution>,
}

fn objective_row(name: &str, j: ObjectiveEstimate) -> ObjectiveRow {
    ObjectiveRow {
        control: name.into(),
        value: j.value,
        std_error: j.std_error,
    }
}

/// Random admissible perturbation of a deterministic path, piecewise constant on `segments` blocks.
fn perturb(
    base: &[f64],
    set: &ControlSet,
    size: f64,
    segments: usize,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n = base.len();
    let bumps: Vec<f64> = (0..segments.max(1))
        .map(|_| size * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    (0..n)
        .map(|i| set.clamp(base[i] + bumps[(i * bumps.len() / n).min(bumps.len() - 1)]))
        .collect()
}

/// Full pipeline: forward solve at the reference control (the Riccati
/// control when `theta` is constant, else `u = 0`), adjoint, candidate
/// `u_hat = clamp(-(theta/2) pF)`, maximum-principle checks and objective
/// comparisons.
pub fn run_example(vs: &VasicekScenario, cfg: &VasicekRunConfig) -> Result<VasicekRun> {
    let scenario = build_mean_field_scenario(vs)?;
    let grid = scenario.ensemble.grid.clone();
    let (n, nk) = (scenario.ensemble.n_particles, grid.n_knots());
    let theta = vs.theta_path()?;
    let set = scenario.control_set;
    let riccati = vs
        .theta
        .constant_value()
        .map(|th| riccati_oracle(th, vs.r0, &grid));
    let reference = match &riccati {
        Some(r) => ControlPath::Deterministic(r.u_star.iter().map(|&u| set.clamp(u)).collect()),
        None => ControlPath::zero(),
    };

    let main_cfg = scenario.ensemble.keeping_noise(true);
    let copy_cfg = scenario.copy_ensemble().keeping_noise(true);
    let forward = solve_controlled_forward_on(&scenario, &main_cfg, &reference)?;
    let copy = solve_controlled_forward_on(&scenario, &copy_cfg, &reference)?;
    let spec = assemble_adjoint(
        &scenario,
        &reference,
        &reference,
        &forward.ensemble,
        &copy.ensemble,
    )?;
    let adj = solve_adjoint(&scenario, &spec, &forward.ensemble, &copy.ensemble)?;

    let u_hat_values: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            (0..nk)
                .map(|i| {
                    let j = i.min(grid.n_steps() - 1);
                    set.clamp(-0.5 * theta[j] * adj.p_f(j, p))
                })
                .collect()
        })
        .collect();
    let u_hat = ControlPath::PerParticle(u_hat_values);

    let necessary = check_necessary(&scenario, &u_hat, &forward.ensemble, &adj, &cfg.check)?;
    let sufficient = check_sufficient(&scenario, &u_hat, &forward.ensemble, &adj, &cfg.check)?;
    let max_principle = necessary.merge(sufficient);

    let zero = ControlPath::zero();
    let at_zero = solve_controlled_forward(&scenario, &zero)?;
    let at_hat = solve_controlled_forward(&scenario, &u_hat)?;
    let j_hat = estimate_objective(&scenario, &at_hat.ensemble, &u_hat);
    let mut objectives = vec![
        objective_row(
            "zero",
            estimate_objective(&scenario, &at_zero.ensemble, &zero),
        ),
        objective_row(
            "reference",
            estimate_objective(&scenario, &forward.ensemble, &reference),
        ),
        objective_row("u_hat", j_hat),
    ];

    let mean_u_hat = u_hat.mean_path(n, nk);
    let control_rel_l2_error = riccati.as_ref().map(|r| {
        let steps = grid.n_steps();
        let num: f64 = (0..steps)
            .map(|i| (mean_u_hat[i] - r.u_star[i]).powi(2))
            .sum();
        let den: f64 = (0..steps).map(|i| r.u_star[i].powi(2)).sum();
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    });

    let perturbations = match (&riccati, cfg.perturbations) {
        (Some(r), trials) if trials > 0 => {
            let mut rng = substream(cfg.seed, StreamKind::Auxiliary, 0);
            let payoff_hat = particle_payoffs(&scenario, &at_hat.ensemble, &u_hat);
            let mut dominated = 0;
            let mut worst = f64::INFINITY;
            for _ in 0..trials {
                let path = ControlPath::Deterministic(perturb(
                    &r.u_star,
                    &set,
                    cfg.perturbation_size,
                    cfg.perturbation_segments,
                    &mut rng,
                ));
                let e = solve_controlled_forward(&scenario, &path)?;
                let payoff = particle_payoffs(&scenario, &e.ensemble, &path);
                let diff: Vec<f64> = payoff_hat.iter().zip(&payoff).map(|(a, b)| a - b).collect();
                let d = crate::control::ObjectiveEstimate::from_samples(&diff);
                let margin = d.value + 5.0 * d.std_error;
                worst = worst.min(margin);
                if margin >= 0.0 {
                    dominated += 1;
                }
            }
            Some(PerturbationSummary {
                trials,
                dominated,
                fraction: dominated as f64 / trials as f64,
                worst_margin: worst,
            })
        }
        _ => None,
    };
    if let Some(r) = &riccati {
        objectives.push(ObjectiveRow {
            control: "riccati_reduced".into(),
            value: -r.value(),
            std_error: 0.0,
        });
    }

    let means_hat = at_hat.ensemble.means();
    let series = (0..nk)
        .map(|i| SeriesRow {
            knot: i,
            t: grid.knot(i),
            mean_r: means_hat[i],
            mean_u_hat: mean_u_hat[i],
            u_star: riccati.as_ref().map(|r| r.u_star[i]),
            mean_p_f: adj.projected.mean_p(i),
        })
        .collect();

    let report = VasicekReport {
        objectives,
        control_rel_l2_error,
        riccati_value: riccati.as_ref().map(RiccatiSolution::value),
        max_principle,
        perturbations,
        forward: forward.diagnostics.clone(),
        adjoint_trace: adj.run.solution.trace.clone(),
        adjoint_converged: adj.run.solution.converged,
        series,
    };
    Ok(VasicekRun {
        report,
        scenario,
        reference_control: reference,
        u_hat,
        ensemble: forward.ensemble,
        riccati,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosRow {
    pub n: usize,
    /// Root mean square over replications of the coupling distance.
    pub distance: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosStudy {
    pub rows: Vec<ChaosRow>,
    /// Least-squares slope of `log distance` against `log N`; `None` with fewer than two sizes.
    pub slope: Option<f64>,
}

impl ChaosStudy {
    /// CSV with columns `n,distance,std_error`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["n", "distance", "std_error"])?;
        for r in &self.rows {
            wtr.write_record(&[
                r.n.to_string(),
                r.distance.to_string(),
                r.std_error.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Coupling distance between the tagged agent of the `N`-agent system and
/// the mean-field particle driven by the same noise:
/// `sup_i (mean_n |r^N_{n,i} - r_{n,i}|^2)^{1/2}`. This bounds the `W2`
/// distance between their marginal laws.
pub fn coupling_distance(
    vs: &VasicekScenario,
    n: usize,
    u: &ControlPath,
    block: u64,
) -> Result<f64> {
    let agents = n_agent_simulate(vs, n, u, block)?;
    let grid = vs.grid()?;
    // The mean-field particles read the exact mean through a one-atom law per knot.
    let exact = LawFlow::new(
        grid.clone(),
        mean_path(vs, u)?
            .into_iter()
            .map(|m| EmpiricalMeasure::dirac(m, 1))
            .collect(),
    )?;
    let cfg = vs.ensemble()?.with_particles(n).with_block(block);
    let limit = euler_solve_fixed_law(&vs.dynamics()?, &exact, vs.r0, &cfg, u)?;
    let d = (0..grid.n_knots())
        .map(|i| {
            (0..n)
                .map(|p| (agents.value(p, i) - limit.value(p, i)).powi(2))
                .sum::<f64>()
                / n as f64
        })
        .fold(0.0, f64::max);
    Ok(d.sqrt())
}

/// Propagation-of-chaos study over particle counts `n_list` with a
/// deterministic control.
pub fn chaos_study(
    vs: &VasicekScenario,
    n_list: &[usize],
    replications: usize,
    u: &ControlPath,
) -> Result<ChaosStudy> {
    if n_list.is_empty() || replications == 0 {
        return Err(invalid(
            "chaos study needs at least one N and one replication",
        ));
    }
    if matches!(u, ControlPath::PerParticle(_)) {
        return Err(invalid("chaos study needs a deterministic control"));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for (j, &n) in n_list.iter().enumerate() {
        let d: Vec<f64> = (0..replications)
            .map(|r| coupling_distance(vs, n, u, 1000 + (j * replications + r) as u64))
            .collect::<Result<_>>()?;
        let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
        let est = ObjectiveEstimate::from_samples(&sq);
        let distance = est.value.sqrt();
        let std_error = if distance > 0.0 {
            est.std_error / (2.0 * distance)
        } else {
            0.0
        };
        rows.push(ChaosRow {
            n,
            distance,
            std_error,
        });
    }
    let slope = (rows.len() >= 2).then(|| {
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.distance.ln()).collect();
        let k = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(ChaosStudy { rows, slope })
}
