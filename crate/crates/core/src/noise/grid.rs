use serde::Serialize;

use crate::error::{invalid, Result};

/// Uniform partition `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    dt: f64,
    knots: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(invalid("grid needs at least one step"));
        }
        let dt = horizon / n_steps as f64;
        let mut knots: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
        knots[n_steps] = horizon;
        Ok(Self {
            horizon,
            n_steps,
            dt,
            knots,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_knots(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn knot(&self, i: usize) -> f64 {
        self.knots[i]
    }

    /// Steps `i` whose cell `(t_i, t_{i+1}]` lies inside `(start, end]`.
    pub(crate) fn steps_within(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.dt;
        let first = self
            .knots
            .iter()
            .position(|&t| t >= start - eps)
            .unwrap_or(self.n_steps);
        let last = (0..self.n_steps)
            .rev()
            .find(|&i| self.knots[i + 1] <= end + eps)
            .map(|i| i + 1)
            .unwrap_or(0);
        first..last.max(first)
    }
}

pub fn build_grid(horizon: f64, n_steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, n_steps)
}
