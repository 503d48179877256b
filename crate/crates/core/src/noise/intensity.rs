use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{invalid, Result};
use crate::rng::{substream, StreamKind};

/// Parameters of one square-root (CIR-type) intensity component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareRootParams {
    pub init: f64,
    pub mean_reversion: f64,
    pub level: f64,
    pub vol: f64,
}

impl SquareRootParams {
    fn validate(&self, name: &str) -> Result<()> {
        let all = [self.init, self.mean_reversion, self.level, self.vol];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid(format!(
                "square-root {name} parameters must be finite and nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

pub type IntensityFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Law of the time-change rates `(lambda^B, lambda^H)`.
#[derive(Clone)]
pub enum IntensityModel {
    Constant {
        lam_b: f64,
        lam_h: f64,
    },
    /// Deterministic `t -> (lambda^B_t, lambda^H_t)`.
    Function(IntensityFn),
    /// Independent square-root diffusions, full truncation at zero.
    SquareRoot {
        b: SquareRootParams,
        h: SquareRootParams,
    },
}

impl fmt::Debug for IntensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { lam_b, lam_h } => {
                write!(f, "Constant {{ lam_b: {lam_b}, lam_h: {lam_h} }}")
            }
            Self::Function(_) => write!(f, "Function(..)"),
            Self::SquareRoot { b, h } => write!(f, "SquareRoot {{ b: {b:?}, h: {h:?} }}"),
        }
    }
}

impl IntensityModel {
    pub fn constant(lam_b: f64, lam_h: f64) -> Self {
        Self::Constant { lam_b, lam_h }
    }

    pub fn function(f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Self::SquareRoot { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { lam_b, lam_h } => {
                if !(lam_b.is_finite() && lam_h.is_finite() && *lam_b >= 0.0 && *lam_h >= 0.0) {
                    return Err(invalid(format!(
                        "constant intensity must be nonnegative, got ({lam_b}, {lam_h})"
                    )));
                }
                Ok(())
            }
            Self::Function(_) => Ok(()),
            Self::SquareRoot { b, h } => {
                b.validate("lambda^B")?;
                h.validate("lambda^H")
            }
        }
    }
}

/// Sampled trajectory of `(lambda^B, lambda^H)` on the knots of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityPath {
    grid: TimeGrid,
    lam_b: Vec<f64>,
    lam_h: Vec<f64>,
    stochastic: bool,
}

impl IntensityPath {
    pub fn new(grid: TimeGrid, lam_b: Vec<f64>, lam_h: Vec<f64>, stochastic: bool) -> Result<Self> {
        if lam_b.len() != grid.n_knots() || lam_h.len() != grid.n_knots() {
            return Err(invalid("intensity path length does not match grid"));
        }
        if let Some(v) = lam_b
            .iter()
            .chain(&lam_h)
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(invalid(format!(
                "intensity must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self {
            grid,
            lam_b,
            lam_h,
            stochastic,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn lam_b(&self) -> &[f64] {
        &self.lam_b
    }

    pub fn lam_h(&self) -> &[f64] {
        &self.lam_h
    }

    pub fn at(&self, i: usize) -> (f64, f64) {
        (self.lam_b[i], self.lam_h[i])
    }

    /// Whether the path is a realisation of a random time change.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    /// Left-point integral `sum_i (lamB_i + lamH_i) dt`.
    pub fn total_mass(&self) -> f64 {
        let dt = self.grid.dt();
        (0..self.grid.n_steps())
            .map(|i| (self.lam_b[i] + self.lam_h[i]) * dt)
            .sum()
    }
}

fn square_root_path(p: &SquareRootParams, grid: &TimeGrid, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = substream(seed, StreamKind::Intensity, index);
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut v = p.init;
    let mut out = Vec::with_capacity(grid.n_knots());
    out.push(v.max(0.0));
    for _ in 0..grid.n_steps() {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let vp = v.max(0.0);
        v += p.mean_reversion * (p.level - vp) * dt + p.vol * vp.sqrt() * sqrt_dt * xi;
        out.push(v.max(0.0));
    }
    out
}

pub fn sample_intensity(
    model: &IntensityModel,
    grid: &TimeGrid,
    seed: u64,
) -> Result<IntensityPath> {
    model.validate()?;
    let n = grid.n_knots();
    match model {
        IntensityModel::Constant { lam_b, lam_h } => {
            IntensityPath::new(grid.clone(), vec![*lam_b; n], vec![*lam_h; n], false)
        }
        IntensityModel::Function(f) => {
            let (b, h): (Vec<f64>, Vec<f64>) = grid.knots().iter().map(|&t| f(t)).unzip();
            IntensityPath::new(grid.clone(), b, h, false)
        }
        IntensityModel::SquareRoot { b, h } => {
            let lb = square_root_path(b, grid, seed, 0);
            let lh = square_root_path(h, grid, seed, 1);
            IntensityPath::new(grid.clone(), lb, lh, true)
        }
    }
}
