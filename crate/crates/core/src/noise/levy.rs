use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Finite mark grid standing in for the Lévy measure `nu`.
///
/// `weights[k]` is the `nu`-mass of the cell represented by `marks[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyGrid {
    marks: Vec<f64>,
    weights: Vec<f64>,
    truncation: f64,
}

impl LevyGrid {
    pub fn new(marks: Vec<f64>, weights: Vec<f64>, truncation: f64) -> Result<Self> {
        if marks.len() != weights.len() {
            return Err(invalid("marks and weights must have the same length"));
        }
        if !(truncation.is_finite() && truncation >= 0.0) {
            return Err(invalid(format!(
                "truncation must be nonnegative, got {truncation}"
            )));
        }
        for (&z, &w) in marks.iter().zip(&weights) {
            if !z.is_finite() || z == 0.0 || z.abs() < truncation {
                return Err(invalid(format!(
                    "mark {z} is zero or below the truncation {truncation}"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid(format!("mark weight must be positive, got {w}")));
            }
        }
        Ok(Self {
            marks,
            weights,
            truncation,
        })
    }

    /// No jump marks: pure (time-changed) Gaussian noise.
    pub fn gaussian_only() -> Self {
        Self {
            marks: Vec::new(),
            weights: Vec::new(),
            truncation: 0.0,
        }
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// Number of noise slots: the Gaussian slot plus one per mark.
    pub fn n_slots(&self) -> usize {
        1 + self.marks.len()
    }

    pub fn second_moment(&self) -> f64 {
        self.marks
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| z * z * w)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Named families of Lévy measures that can be put on a mark grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LevySpec {
    /// No jumps at all.
    None,
    FiniteAtoms {
        marks: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Symmetric density `c e^{-|z|} / |z|^{1+alpha}` on `eps <= |z| <= z_max`.
    ExponentialTails {
        c: f64,
        alpha: f64,
        z_max: f64,
    },
    /// Density `density` on `[-a, -eps] U [eps, a]`.
    Uniform {
        density: f64,
        a: f64,
    },
}

const SUBCELLS: usize = 2048;

/// Composite midpoint rule in `s = ln z` for `(int nu, int z^2 nu)` over `[lo, hi]`.
fn cell_moments(density: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / SUBCELLS as f64;
    let mut mass = 0.0;
    let mut second = 0.0;
    for j in 0..SUBCELLS {
        let z = (a + (j as f64 + 0.5) * h).exp();
        let w = density(z) * z * h;
        mass += w;
        second += z * z * w;
    }
    (mass, second)
}

/// Symmetric grid from positive-side cell edges. Each cell becomes one mark
/// carrying the cell's `nu`-mass, placed at `sqrt(int z^2 nu / int nu)` so
/// that the grid reproduces the truncated second moment.
fn symmetric_grid(edges: &[f64], density: &dyn Fn(f64) -> f64, eps: f64) -> Result<LevyGrid> {
    let mut pos = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (mass, second) = cell_moments(density, w[0], w[1]);
        if mass > 0.0 {
            pos.push(((second / mass).sqrt(), mass));
        }
    }
    if pos.is_empty() {
        return Err(invalid("Lévy measure has no mass on the truncated support"));
    }
    let mut marks: Vec<f64> = pos.iter().rev().map(|(z, _)| -z).collect();
    let mut weights: Vec<f64> = pos.iter().rev().map(|(_, m)| *m).collect();
    marks.extend(pos.iter().map(|(z, _)| *z));
    weights.extend(pos.iter().map(|(_, m)| *m));
    LevyGrid::new(marks, weights, eps)
}

/// Put a Lévy measure on a grid of `m` cells per side, dropping `|z| < eps`.
pub fn discretize_levy(spec: &LevySpec, m: usize, eps: f64) -> Result<LevyGrid> {
    match spec {
        LevySpec::None => Ok(LevyGrid::gaussian_only()),
        LevySpec::FiniteAtoms { marks, weights } => {
            LevyGrid::new(marks.clone(), weights.clone(), eps.max(0.0))
        }
        LevySpec::Uniform { density, a } => {
            if m == 0 {
                return Err(invalid("need at least one cell per side"));
            }
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(invalid(format!(
                    "truncation must be nonnegative, got {eps}"
                )));
            }
            if !(density.is_finite() && *density > 0.0) {
                return Err(invalid("uniform density must be positive"));
            }
            if !(eps < *a) {
                return Err(invalid(format!("empty support: eps = {eps} >= a = {a}")));
            }
            // Closed-form cell moments; the density is flat.
            let edges: Vec<f64> = (0..=m)
                .map(|j| eps + (a - eps) * j as f64 / m as f64)
                .collect();
            let pos: Vec<(f64, f64)> = edges
                .windows(2)
                .map(|w| {
                    let mass = density * (w[1] - w[0]);
                    let second = density * (w[1].powi(3) - w[0].powi(3)) / 3.0;
                    ((second / mass).sqrt(), mass)
                })
                .collect();
            let mut marks: Vec<f64> = pos.iter().rev().map(|(z, _)| -z).collect();
            let mut weights: Vec<f64> = pos.iter().rev().map(|(_, w)| *w).collect();
            marks.extend(pos.iter().map(|(z, _)| *z));
            weights.extend(pos.iter().map(|(_, w)| *w));
            LevyGrid::new(marks, weights, eps)
        }
        LevySpec::ExponentialTails { c, alpha, z_max } => {
            if m == 0 {
                return Err(invalid("need at least one cell per side"));
            }
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(invalid(format!(
                    "infinite-activity family needs eps > 0, got {eps}"
                )));
            }
            if !(*c > 0.0 && (0.0..2.0).contains(alpha)) {
                return Err(invalid(format!(
                    "need c > 0 and alpha in [0, 2), got c = {c}, alpha = {alpha}"
                )));
            }
            if !(eps < *z_max) {
                return Err(invalid(format!(
                    "empty support: eps = {eps} >= z_max = {z_max}"
                )));
            }
            let ratio = (z_max / eps).ln();
            let edges: Vec<f64> = (0..=m)
                .map(|j| eps * (ratio * j as f64 / m as f64).exp())
                .collect();
            let (c, alpha) = (*c, *alpha);
            let density = move |z: f64| c * (-z).exp() / z.powf(1.0 + alpha);
            symmetric_grid(&edges, &density, eps)
        }
    }
}
