//! One function per subcommand. Each writes its result files into the sink and
//! reports whether every iterative solver converged.

use std::path::PathBuf;
use std::str::FromStr;

use mfsmp_core::control::{
    assemble_adjoint, check_necessary, check_sufficient, maximize_hamiltonian, solve_adjoint,
    solve_controlled_forward_on, CheckConfig, MaxPrincipleReport, Scenario,
};
use mfsmp_core::mfbsde::{solve_linear, LinearDriver};
use mfsmp_core::mfsde::{picard_law_solve, ControlPath, PicardDiagnostics};
use mfsmp_core::noise::{isometry_check, sample_noise, Integrand, IsometrySummary};
use mfsmp_core::vasicek::{
    chaos_study, riccati_oracle, run_example, VasicekRunConfig, VasicekScenario,
};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::output::Sink;

/// Where the reference control comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSource {
    Zero,
    Constant(f64),
    /// Feedback-free optimum of the deterministic Vasicek problem.
    Riccati,
    /// JSON array with one value per knot.
    File(PathBuf),
}

impl FromStr for ControlSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "zero" => Ok(ControlSource::Zero),
            None if s == "riccati" => Ok(ControlSource::Riccati),
            Some(("constant", v)) => v
                .parse()
                .map(ControlSource::Constant)
                .map_err(|e| format!("bad constant: {e}")),
            Some(("file", p)) => Ok(ControlSource::File(p.into())),
            _ => Err(format!(
                "unknown control source '{s}' (zero | constant:C | riccati | file:PATH)"
            )),
        }
    }
}

impl ControlSource {
    pub fn resolve(&self, cfg: &ScenarioConfig) -> Result<ControlPath, CliError> {
        let grid = cfg.grid()?;
        let set = cfg.control_set()?;
        let u = match self {
            ControlSource::Zero => ControlPath::zero(),
            ControlSource::Constant(c) => ControlPath::Constant(*c),
            ControlSource::Riccati => {
                let vs = cfg.vasicek(false)?.ok_or_else(|| {
                    CliError::Config("riccati control needs vasicek coefficients".into())
                })?;
                let theta = vs
                    .theta
                    .constant_value()
                    .expect("constant theta from config");
                ControlPath::Deterministic(riccati_oracle(theta, vs.r0, &grid).u_star).clamped(&set)
            }
            ControlSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                let v: Vec<f64> = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("control file: {e}")))?;
                if v.len() != grid.n_knots() {
                    return Err(CliError::Config(format!(
                        "control file has {} values, grid has {} knots",
                        v.len(),
                        grid.n_knots()
                    )));
                }
                ControlPath::Deterministic(v)
            }
        };
        if !u.is_admissible(&set, 1, grid.n_knots()) {
            return Err(CliError::Config(
                "reference control leaves the control set".into(),
            ));
        }
        Ok(u)
    }
}

#[derive(Serialize)]
struct IsometryReport<'a> {
    n_paths: usize,
    /// Acceptance band in standard errors.
    band: f64,
    all_within: bool,
    integrands: &'a [IsometrySummary],
}

pub fn simulate_noise(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<bool, CliError> {
    let ens = cfg.ensemble()?;
    let noise = sink.stage("sample", || {
        let ip = ens.sample_intensities()?;
        Ok(sample_noise(ip.get(0), &ens.levy, ens.particle_seed(0)))
    })?;
    sink.csv("noise.csv", |w| noise.write_csv(w))?;

    let n_paths = cfg.solver.n_particles.max(2);
    let model = cfg.intensity_model();
    let summaries = sink.stage("isometry", || {
        Integrand::ALL
            .iter()
            .map(|&f| {
                Ok(isometry_check(
                    f,
                    &model,
                    &ens.levy,
                    &ens.grid,
                    n_paths,
                    cfg.seeds.master,
                )?)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let report = IsometryReport {
        n_paths,
        band: 5.0,
        all_within: summaries.iter().all(|s| s.within(5.0)),
        integrands: &summaries,
    };
    sink.json("isometry.json", &report)?;
    Ok(true)
}

pub fn solve_mfsde(
    cfg: &ScenarioConfig,
    control: &ControlSource,
    sink: &mut Sink,
) -> Result<bool, CliError> {
    let u = control.resolve(cfg)?;
    let dynamics = cfg.dynamics()?;
    let ens = cfg.ensemble()?;
    let out = sink.stage("picard", || {
        Ok(picard_law_solve(
            dynamics.as_ref(),
            cfg.x0,
            &ens,
            &u,
            &cfg.picard(),
        )?)
    })?;
    sink.csv("law.csv", |w| out.law.write_csv(w))?;
    sink.csv("ensemble.csv", |w| out.ensemble.write_csv(w))?;
    #[derive(Serialize)]
    struct Trace<'a> {
        #[serde(flatten)]
        diagnostics: &'a PicardDiagnostics,
        ratios: Vec<f64>,
        mean: Vec<f64>,
    }
    let trace = Trace {
        diagnostics: &out.diagnostics,
        ratios: out.diagnostics.ratios(),
        mean: out.ensemble.means(),
    };
    sink.json("picard.json", &trace)?;
    Ok(out.diagnostics.converged)
}

pub fn solve_mfbsde(
    cfg: &ScenarioConfig,
    control: &ControlSource,
    sink: &mut Sink,
) -> Result<bool, CliError> {
    let spec = cfg
        .bsde
        .clone()
        .ok_or_else(|| CliError::Config("solve-mfbsde needs a `bsde` section".into()))?;
    let s = cfg.scenario()?;
    let u = control.resolve(cfg)?;
    let (main, copy) = sink.stage("forward", || forward_pair(&s, &u))?;
    let last = main.ensemble.grid().n_steps();
    let terminal = |e: &mfsmp_core::mfsde::ParticleEnsemble| -> Vec<f64> {
        (0..e.n_particles())
            .map(|n| spec.terminal.eval(e.value(n, last)))
            .collect()
    };
    let driver = LinearDriver::constant(spec.a, spec.b, spec.c, main.ensemble.levy().n_slots());
    let run = sink.stage("backward", || {
        Ok(solve_linear(
            &driver,
            &terminal(&main.ensemble),
            &terminal(&copy.ensemble),
            &main.ensemble,
            &copy.ensemble,
            &s.bsde,
        )?)
    })?;
    let sol = &run.solution;
    sink.csv("bsde.csv", |w| sol.write_csv(w))?;
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        converged: bool,
        beta_norm_trace: Vec<f64>,
        contraction_ratios: Vec<f64>,
        terminal_residual: f64,
        mean_y: Vec<f64>,
    }
    let summary = Summary {
        beta: sol.beta,
        converged: sol.converged,
        beta_norm_trace: sol.trace.clone(),
        contraction_ratios: sol.contraction_ratios(),
        terminal_residual: sol.terminal_residual,
        mean_y: (0..sol.grid().n_knots()).map(|i| sol.mean_y(i)).collect(),
    };
    sink.json("bsde.json", &summary)?;
    Ok(sol.converged)
}

fn forward_pair(
    s: &Scenario,
    u: &ControlPath,
) -> Result<
    (
        mfsmp_core::mfsde::PicardOutcome,
        mfsmp_core::mfsde::PicardOutcome,
    ),
    CliError,
> {
    let main = solve_controlled_forward_on(s, &s.ensemble.keeping_noise(true), u)?;
    let copy = solve_controlled_forward_on(s, &s.copy_ensemble().keeping_noise(true), u)?;
    Ok((main, copy))
}

#[derive(Serialize)]
struct MaxPrincipleOutput<'a> {
    passed: bool,
    /// Shift added to the Hamiltonian maximiser before checking.
    perturbation: f64,
    mean_candidate: Vec<f64>,
    forward_converged: bool,
    adjoint_converged: bool,
    report: &'a MaxPrincipleReport,
}

pub fn check_maxprinciple(
    cfg: &ScenarioConfig,
    control: &ControlSource,
    perturb: f64,
    sink: &mut Sink,
) -> Result<bool, CliError> {
    let s = cfg.scenario()?;
    let reference = control.resolve(cfg)?;
    let (main, copy) = sink.stage("forward", || forward_pair(&s, &reference))?;
    let adj = sink.stage("adjoint", || {
        let spec = assemble_adjoint(&s, &reference, &reference, &main.ensemble, &copy.ensemble)?;
        Ok(solve_adjoint(&s, &spec, &main.ensemble, &copy.ensemble)?)
    })?;
    let check = CheckConfig {
        seed: cfg.seeds.master,
        ..CheckConfig::default()
    };
    let set = s.control_set;
    let candidate = sink.stage("maximise", || {
        Ok(
            maximize_hamiltonian(&s, &main.ensemble, &adj, check.grid_points)?
                .map(|u| set.clamp(u + perturb)),
        )
    })?;
    let report = sink.stage("checks", || {
        let nec = check_necessary(&s, &candidate, &main.ensemble, &adj, &check)?;
        let suf = check_sufficient(&s, &candidate, &main.ensemble, &adj, &check)?;
        Ok(nec.merge(suf))
    })?;
    sink.csv("du_hamiltonian.csv", |w| report.write_du_csv(w))?;
    let (n, nk) = (main.ensemble.n_particles(), main.ensemble.grid().n_knots());
    let out = MaxPrincipleOutput {
        passed: report.passed(),
        perturbation: perturb,
        mean_candidate: candidate.mean_path(n, nk),
        forward_converged: main.diagnostics.converged && copy.diagnostics.converged,
        adjoint_converged: adj.run.solution.converged,
        report: &report,
    };
    sink.json("maxprinciple.json", &out)?;
    println!(
        "maximum principle: {}",
        if out.passed { "PASS" } else { "FAIL" }
    );
    Ok(out.forward_converged && out.adjoint_converged)
}

fn vasicek(cfg: &ScenarioConfig, paper_averaging: bool) -> Result<VasicekScenario, CliError> {
    cfg.vasicek(paper_averaging)?
        .ok_or_else(|| CliError::Config("this command needs vasicek coefficients".into()))
}

pub fn run_vasicek(
    cfg: &ScenarioConfig,
    paper_averaging: bool,
    sink: &mut Sink,
) -> Result<bool, CliError> {
    let vs = vasicek(cfg, paper_averaging)?;
    let run_cfg = VasicekRunConfig {
        seed: cfg.seeds.master,
        ..VasicekRunConfig::default()
    };
    let run = sink.stage("pipeline", || Ok(run_example(&vs, &run_cfg)?))?;
    let report = &run.report;
    sink.csv("vasicek_series.csv", |w| report.write_series_csv(w))?;
    sink.json("vasicek_report.json", report)?;
    for o in &report.objectives {
        println!("J({}) = {:.6} +- {:.6}", o.control, o.value, o.std_error);
    }
    println!(
        "maximum principle: {}",
        if report.max_principle.passed() {
            "PASS"
        } else {
            "FAIL"
        }
    );
    Ok(report.forward.converged && report.adjoint_converged)
}

pub fn chaos(
    cfg: &ScenarioConfig,
    paper_averaging: bool,
    n_list: &[usize],
    replications: usize,
    control: &ControlSource,
    sink: &mut Sink,
) -> Result<bool, CliError> {
    if n_list.is_empty() || n_list.contains(&0) || replications == 0 {
        return Err(CliError::Config(
            "chaos study needs positive sizes and at least one replication".into(),
        ));
    }
    let vs = vasicek(cfg, paper_averaging)?;
    let u = control.resolve(cfg)?;
    let study = sink.stage("chaos", || Ok(chaos_study(&vs, n_list, replications, &u)?))?;
    sink.csv("chaos.csv", |w| study.write_csv(w))?;
    #[derive(Serialize)]
    struct Out<'a> {
        replications: usize,
        #[serde(flatten)]
        study: &'a mfsmp_core::vasicek::ChaosStudy,
    }
    sink.json(
        "chaos.json",
        &Out {
            replications,
            study: &study,
        },
    )?;
    if let Some(s) = study.slope {
        println!("log-log slope = {s:.4}");
    }
    Ok(true)
}
