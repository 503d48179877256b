//! Least-squares conditional expectations on a polynomial basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Polynomial features up to total degree `degree` in the standardised
/// regressors, with a ridge penalty on the non-constant coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub degree: usize,
    pub ridge: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self {
            degree: 2,
            ridge: 1e-8,
        }
    }
}

impl RegressionBasis {
    pub fn new(degree: usize, ridge: f64) -> Result<Self> {
        let b = Self { degree, ridge };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(invalid(format!(
                "ridge must be a finite nonnegative number, got {}",
                self.ridge
            )));
        }
        Ok(())
    }

    /// Number of basis functions (intercept included) for `k` regressors.
    pub fn n_features(&self, k: usize) -> usize {
        // C(k + d, d)
        let mut c = 1usize;
        for j in 1..=self.degree {
            c = c * (k + j) / j;
        }
        c
    }
}

/// Exponent tuples of all monomials of degree 1..=d in `k` variables.
fn monomials(k: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0; k];
    fn rec(var: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if var == current.len() {
            if current.iter().any(|&e| e > 0) {
                out.push(current.clone());
            }
            return;
        }
        for e in 0..=left {
            current[var] = e;
            rec(var + 1, left - e, current, out);
        }
        current[var] = 0;
    }
    if k > 0 {
        rec(0, d, &mut current, &mut out);
    }
    out.sort_by_key(|m| (m.iter().sum::<usize>(), std::cmp::Reverse(m.clone())));
    out
}

/// A factorised design matrix; fitting a new target reuses the factor.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    /// Centred feature columns.
    columns: Vec<Vec<f64>>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Design {
    /// Builds the design from regressor columns (each of length `N`).
    /// Regressors that are constant on the sample are dropped.
    pub fn new(regressors: &[&[f64]], basis: &RegressionBasis, step: usize) -> Result<Self> {
        basis.validate()?;
        let n = regressors.first().map_or(0, |r| r.len());
        if n == 0 {
            return Err(invalid("regression needs at least one sample"));
        }
        if regressors.iter().any(|r| r.len() != n) {
            return Err(invalid("regressor columns differ in length"));
        }
        let mut standardised: Vec<Vec<f64>> = Vec::new();
        for r in regressors {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularRegression {
                    step,
                    reason: "non-finite regressor".into(),
                });
            }
            let mean = r.iter().sum::<f64>() / n as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let scale = var.sqrt();
            if scale > 1e-12 * (1.0 + mean.abs()) {
                standardised.push(r.iter().map(|v| (v - mean) / scale).collect());
            }
        }
        let monos = monomials(standardised.len(), basis.degree);
        let p = monos.len();
        if n < 10 * (p + 1) {
            return Err(invalid(format!(
                "regression with {} basis functions needs at least {} samples, got {n}",
                p + 1,
                10 * (p + 1)
            )));
        }
        let mut columns = Vec::with_capacity(p);
        for m in &monos {
            let mut col = vec![1.0; n];
            for (v, &e) in standardised.iter().zip(m) {
                for _ in 0..e {
                    for (c, x) in col.iter_mut().zip(v) {
                        *c *= x;
                    }
                }
            }
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter_mut().for_each(|c| *c -= mean);
            columns.push(col);
        }
        if p == 0 {
            return Ok(Self {
                n,
                columns,
                chol: None,
            });
        }
        let mut gram = DMatrix::<f64>::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let s: f64 = columns[a]
                    .iter()
                    .zip(&columns[b])
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    / n as f64;
                gram[(a, b)] = s;
                gram[(b, a)] = s;
            }
        }
        let mut ridge = basis.ridge;
        for _ in 0..4 {
            let mut g = gram.clone();
            for a in 0..p {
                g[(a, a)] += ridge;
            }
            if let Some(chol) = g.cholesky() {
                return Ok(Self {
                    n,
                    columns,
                    chol: Some(chol),
                });
            }
            ridge = if ridge == 0.0 { 1e-10 } else { ridge * 1e3 };
        }
        Err(Error::SingularRegression {
            step,
            reason: format!("Gram matrix of {p} features not positive definite"),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// Number of basis functions including the intercept.
    pub fn n_features(&self) -> usize {
        self.columns.len() + 1
    }

    /// Fitted values `E[target | basis]` at every sample point.
    pub fn fit(&self, target: &[f64]) -> Vec<f64> {
        assert_eq!(
            target.len(),
            self.n,
            "target length does not match the design"
        );
        let first = target[0];
        if target.iter().all(|&v| v == first) {
            return target.to_vec();
        }
        let mean = target.iter().sum::<f64>() / self.n as f64;
        let Some(chol) = &self.chol else {
            return vec![mean; self.n];
        };
        let rhs = DVector::from_iterator(
            self.columns.len(),
            self.columns.iter().map(|c| {
                c.iter()
                    .zip(target)
                    .map(|(x, y)| x * (y - mean))
                    .sum::<f64>()
                    / self.n as f64
            }),
        );
        let beta = chol.solve(&rhs);
        let mut out = vec![mean; self.n];
        for (col, b) in self.columns.iter().zip(beta.iter()) {
            for (o, x) in out.iter_mut().zip(col) {
                *o += b * x;
            }
        }
        out
    }
}
