//! Scenario files: a strict JSON schema and its translation into solver objects.

use std::path::PathBuf;
use std::sync::Arc;

use mfsmp_core::control::{ControlSet, Costs, QuadraticCosts, Scenario, ZeroCosts};
use mfsmp_core::mfbsde::BsdeConfig;
use mfsmp_core::mfsde::{
    Coefficients, EnsembleConfig, LinearMeanField, OrnsteinUhlenbeck, PicardConfig,
    ZeroCoefficients,
};
use mfsmp_core::noise::{
    discretize_levy, IntensityModel, LevyGrid, LevySpec, MarkFunction, SquareRootParams, TimeGrid,
};
use mfsmp_core::regression::RegressionBasis;
use mfsmp_core::vasicek::{Theta, VasicekScenario};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub intensity: IntensityConfig,
    #[serde(default)]
    pub levy: LevyConfig,
    pub coefficients: CoefficientsConfig,
    #[serde(default)]
    pub costs: Option<CostsConfig>,
    #[serde(default)]
    pub control: Option<ControlConfig>,
    /// Initial state of every particle (`r0` for the Vasicek model).
    #[serde(default = "one")]
    pub x0: f64,
    pub solver: SolverConfig,
    pub seeds: SeedsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub bsde: Option<BsdeSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareRootConfig {
    pub init: f64,
    pub mean_reversion: f64,
    pub level: f64,
    pub vol: f64,
}

impl From<SquareRootConfig> for SquareRootParams {
    fn from(c: SquareRootConfig) -> Self {
        SquareRootParams {
            init: c.init,
            mean_reversion: c.mean_reversion,
            level: c.level,
            vol: c.vol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "kebab-case",
    deny_unknown_fields
)]
pub enum IntensityConfig {
    Constant {
        lam_b: f64,
        lam_h: f64,
    },
    /// `lambda(t) = a + b t` per component, given as `[a, b]`.
    Linear {
        lam_b: [f64; 2],
        lam_h: [f64; 2],
    },
    SquareRoot {
        b: SquareRootConfig,
        h: SquareRootConfig,
        /// One intensity path per particle instead of a shared one.
        #[serde(default)]
        per_particle: bool,
    },
}

impl Default for IntensityConfig {
    fn default() -> Self {
        IntensityConfig::Constant {
            lam_b: 1.0,
            lam_h: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "family",
    content = "params",
    rename_all = "kebab-case",
    deny_unknown_fields
)]
pub enum LevyFamily {
    None,
    FiniteAtoms { marks: Vec<f64>, weights: Vec<f64> },
    Uniform { density: f64, a: f64 },
    ExponentialTails { c: f64, alpha: f64, z_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    #[serde(flatten)]
    pub family: LevyFamily,
    #[serde(rename = "M", default = "one_cell")]
    pub cells: usize,
    #[serde(default)]
    pub eps: f64,
}

fn one_cell() -> usize {
    1
}

impl Default for LevyConfig {
    fn default() -> Self {
        Self {
            family: LevyFamily::None,
            cells: 1,
            eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "name",
    content = "params",
    rename_all = "kebab-case",
    deny_unknown_fields
)]
pub enum CoefficientsConfig {
    Vasicek {
        theta: f64,
        sigma: f64,
        /// Loading on every jump mark.
        #[serde(default)]
        jump_sigma: f64,
    },
    LinearTest {
        a: f64,
        c: f64,
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        jump_scale: f64,
    },
    OuTest {
        rev: f64,
        level: f64,
        sigma: f64,
        #[serde(default)]
        jump_scale: f64,
    },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "name",
    content = "params",
    rename_all = "kebab-case",
    deny_unknown_fields
)]
pub enum CostsConfig {
    Zero,
    /// `f = -x^2 - y^2 - u^2`, `g = 0`.
    Lq,
    Quadratic {
        qx: f64,
        qy: f64,
        qu: f64,
        lx: f64,
        gx: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub u_min: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(rename = "N")]
    pub n_particles: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_degree")]
    pub basis_degree: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    50
}

fn default_degree() -> usize {
    2
}

fn default_ridge() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsConfig {
    pub master: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            formats: all_formats(),
        }
    }
}

/// Linear driver `h = a + b y + c E[y']` and a terminal condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeSpec {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    pub terminal: TerminalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminalSpec {
    Constant {
        value: f64,
    },
    /// `scale * X_T`.
    State {
        scale: f64,
    },
    /// `sin(X_T)`.
    Sine,
}

impl TerminalSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TerminalSpec::Constant { value } => *value,
            TerminalSpec::State { scale } => scale * x,
            TerminalSpec::Sine => x.sin(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("grid.T", self.grid.horizon)?;
        if self.grid.n_steps == 0 {
            return Err(CliError::Config("grid.n_steps must be at least 1".into()));
        }
        if self.solver.n_particles == 0 {
            return Err(CliError::Config("solver.N must be at least 1".into()));
        }
        positive("solver.tol", self.solver.tol)?;
        if self.solver.ridge < 0.0 {
            return Err(CliError::Config("solver.ridge must be nonnegative".into()));
        }
        if let Some(b) = self.solver.beta {
            positive("solver.beta", b)?;
        }
        if self.solver.max_iter == 0 {
            return Err(CliError::Config(
                "solver.max_iter must be at least 1".into(),
            ));
        }
        if !self.x0.is_finite() {
            return Err(CliError::Config("x0 must be finite".into()));
        }
        self.intensity_model().validate()?;
        self.levy_grid()?;
        if let Some(c) = self.control {
            ControlSet::new(c.u_min, c.u_max)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.grid.horizon, self.grid.n_steps)?)
    }

    pub fn intensity_model(&self) -> IntensityModel {
        match &self.intensity {
            IntensityConfig::Constant { lam_b, lam_h } => IntensityModel::constant(*lam_b, *lam_h),
            IntensityConfig::Linear { lam_b, lam_h } => {
                let (b, h) = (*lam_b, *lam_h);
                IntensityModel::function(move |t| (b[0] + b[1] * t, h[0] + h[1] * t))
            }
            IntensityConfig::SquareRoot { b, h, .. } => IntensityModel::SquareRoot {
                b: (*b).into(),
                h: (*h).into(),
            },
        }
    }

    pub fn levy_grid(&self) -> Result<LevyGrid, CliError> {
        let spec = match &self.levy.family {
            LevyFamily::None => LevySpec::None,
            LevyFamily::FiniteAtoms { marks, weights } => LevySpec::FiniteAtoms {
                marks: marks.clone(),
                weights: weights.clone(),
            },
            LevyFamily::Uniform { density, a } => LevySpec::Uniform {
                density: *density,
                a: *a,
            },
            LevyFamily::ExponentialTails { c, alpha, z_max } => LevySpec::ExponentialTails {
                c: *c,
                alpha: *alpha,
                z_max: *z_max,
            },
        };
        Ok(discretize_levy(&spec, self.levy.cells, self.levy.eps)?)
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig, CliError> {
        let mut e = EnsembleConfig::new(
            self.grid()?,
            self.solver.n_particles,
            self.seeds.master,
            self.intensity_model(),
            self.levy_grid()?,
        );
        if let IntensityConfig::SquareRoot {
            per_particle: true, ..
        } = self.intensity
        {
            e.shared_intensity = false;
        }
        Ok(e)
    }

    pub fn picard(&self) -> PicardConfig {
        PicardConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn bsde_config(&self) -> BsdeConfig {
        BsdeConfig {
            basis: RegressionBasis {
                degree: self.solver.basis_degree,
                ridge: self.solver.ridge,
            },
            beta: self.solver.beta,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    /// The Vasicek parameters, when the coefficients are the Vasicek model.
    pub fn vasicek(&self, paper_averaging: bool) -> Result<Option<VasicekScenario>, CliError> {
        let CoefficientsConfig::Vasicek {
            theta,
            sigma,
            jump_sigma,
        } = self.coefficients
        else {
            return Ok(None);
        };
        let levy = self.levy_grid()?;
        let u_max = match self.control {
            Some(c) if c.u_min != 0.0 => {
                return Err(CliError::Config(
                    "the Vasicek control set must start at 0".into(),
                ))
            }
            Some(c) => Some(c.u_max),
            None => None,
        };
        let vs = VasicekScenario {
            theta: Theta::Constant(theta),
            sigma: MarkFunction::new(sigma, vec![jump_sigma; levy.len()]),
            r0: self.x0,
            intensity: self.intensity_model(),
            levy,
            horizon: self.grid.horizon,
            n_steps: self.grid.n_steps,
            u_max,
            n_particles: self.solver.n_particles,
            seed: self.seeds.master,
            paper_averaging,
        };
        vs.validate()?;
        Ok(Some(vs))
    }

    pub fn dynamics(&self) -> Result<Arc<dyn Coefficients>, CliError> {
        Ok(match self.coefficients {
            CoefficientsConfig::Vasicek { .. } => {
                Arc::new(self.vasicek(false)?.expect("vasicek").dynamics()?)
            }
            CoefficientsConfig::LinearTest {
                a,
                c,
                sigma,
                jump_scale,
            } => {
                let mut l = LinearMeanField::new(a, c);
                l.sigma = sigma;
                l.jump_scale = jump_scale;
                Arc::new(l)
            }
            CoefficientsConfig::OuTest {
                rev,
                level,
                sigma,
                jump_scale,
            } => Arc::new(OrnsteinUhlenbeck {
                rev,
                level,
                sigma,
                jump_scale,
            }),
            CoefficientsConfig::Zero => Arc::new(ZeroCoefficients),
        })
    }

    fn costs(&self) -> Arc<dyn Costs> {
        let default = match self.coefficients {
            CoefficientsConfig::Vasicek { .. } => CostsConfig::Lq,
            _ => CostsConfig::Zero,
        };
        match self.costs.clone().unwrap_or(default) {
            CostsConfig::Zero => Arc::new(ZeroCosts),
            CostsConfig::Lq => Arc::new(QuadraticCosts::lq()),
            CostsConfig::Quadratic { qx, qy, qu, lx, gx } => {
                Arc::new(QuadraticCosts { qx, qy, qu, lx, gx })
            }
        }
    }

    pub fn control_set(&self) -> Result<ControlSet, CliError> {
        if let Some(vs) = self.vasicek(false)? {
            return Ok(vs.control_set()?);
        }
        Ok(match self.control {
            Some(c) => ControlSet::new(c.u_min, c.u_max)?,
            None => ControlSet::unbounded(),
        })
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = Scenario::new(
            self.dynamics()?,
            self.costs(),
            self.control_set()?,
            self.x0,
            self.ensemble()?,
        );
        s.picard = self.picard();
        s.bsde = self.bsde_config();
        s.validate()?;
        Ok(s)
    }
}
