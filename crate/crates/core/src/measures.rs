//! Empirical measures on the real line and the quadratic Wasserstein metric.
//!
//! In one dimension the optimal coupling of two equal-size empirical
//! measures pairs order statistics, so `wasserstein2` is a sort and a sum.
//! `law_flow_distance` is the sup over knots of marginal distances; it
//! lower-bounds the path-space metric and is what the Picard solver monitors.

use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::noise::TimeGrid;

/// Equal-weight atoms, stored sorted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dirac(x: f64, copies: usize) -> Self {
        Self {
            atoms: vec![x; copies.max(1)],
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().sum::<f64>() / self.atoms.len() as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|x| x * x).sum::<f64>() / self.atoms.len() as f64
    }

    /// Left-continuous inverse of the empirical CDF at `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.atoms.len();
        let idx = ((p * n as f64).floor() as usize).min(n - 1);
        self.atoms[idx]
    }

    /// Quantile resampling to `n` equal-weight atoms.
    pub fn resample(&self, n: usize) -> Self {
        if n == self.atoms.len() {
            return self.clone();
        }
        let atoms = (0..n)
            .map(|j| self.quantile((j as f64 + 0.5) / n as f64))
            .collect();
        Self { atoms }
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|x| x + c).collect(),
        }
    }
}

pub fn empirical(values: &[f64]) -> Result<EmpiricalMeasure> {
    if values.is_empty() {
        return Err(invalid("empirical measure needs at least one atom"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite atom {v}")));
    }
    let mut atoms = values.to_vec();
    atoms.sort_by(f64::total_cmp);
    Ok(EmpiricalMeasure { atoms })
}

/// `d_R(P, Q)` via the sorted coupling; unequal sizes are resampled to the larger.
pub fn wasserstein2(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> f64 {
    let n = p.len().max(q.len());
    let (pr, qr);
    let (a, b) = if p.len() == q.len() {
        (p, q)
    } else {
        pr = p.resample(n);
        qr = q.resample(n);
        (&pr, &qr)
    };
    let s: f64 = a
        .atoms
        .iter()
        .zip(&b.atoms)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (s / n as f64).sqrt()
}

/// `<g, P> = (1/N) sum g(atom)`.
pub fn mean_functional(p: &EmpiricalMeasure, g: impl Fn(f64) -> f64) -> f64 {
    p.atoms.iter().map(|&x| g(x)).sum::<f64>() / p.len() as f64
}

/// One empirical marginal per knot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawFlow {
    grid: TimeGrid,
    marginals: Vec<EmpiricalMeasure>,
}

impl LawFlow {
    pub fn new(grid: TimeGrid, marginals: Vec<EmpiricalMeasure>) -> Result<Self> {
        if marginals.len() != grid.n_knots() {
            return Err(invalid("law flow needs one marginal per knot"));
        }
        let n = marginals[0].len();
        if marginals.iter().any(|m| m.len() != n) {
            return Err(invalid(
                "all marginals of a law flow must have the same size",
            ));
        }
        Ok(Self { grid, marginals })
    }

    /// The flow `s -> delta_x` with `copies` atoms per knot.
    pub fn dirac(grid: TimeGrid, x: f64, copies: usize) -> Self {
        let marginals = vec![EmpiricalMeasure::dirac(x, copies); grid.n_knots()];
        Self { grid, marginals }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn marginals(&self) -> &[EmpiricalMeasure] {
        &self.marginals
    }

    pub fn at(&self, i: usize) -> &EmpiricalMeasure {
        &self.marginals[i]
    }

    /// Marginal in force at time `t`: piecewise constant on `[t_i, t_{i+1})`.
    pub fn at_time(&self, t: f64) -> &EmpiricalMeasure {
        let i = ((t / self.grid.dt()).floor().max(0.0) as usize).min(self.grid.n_steps());
        &self.marginals[i]
    }

    pub fn atoms_per_knot(&self) -> usize {
        self.marginals[0].len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.marginals.iter().map(EmpiricalMeasure::mean).collect()
    }

    /// CSV: `knot,t,q10,...,q90` deciles per knot.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["knot".to_string(), "t".to_string()];
        header.extend((1..10).map(|d| format!("q{}", d * 10)));
        wtr.write_record(&header)?;
        for (i, m) in self.marginals.iter().enumerate() {
            let mut row = vec![i.to_string(), self.grid.knot(i).to_string()];
            row.extend((1..10).map(|d| m.quantile(d as f64 / 10.0).to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `sup_s d_R(Q1_s, Q2_s)`.
pub fn law_flow_distance(q1: &LawFlow, q2: &LawFlow) -> Result<f64> {
    if q1.grid != q2.grid {
        return Err(invalid("law flows live on different grids"));
    }
    Ok(q1
        .marginals
        .iter()
        .zip(&q2.marginals)
        .map(|(a, b)| wasserstein2(a, b))
        .fold(0.0, f64::max))
}
