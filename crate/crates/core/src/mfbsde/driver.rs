use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Result};

/// Which of the two product coordinates a particle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Main,
    Copy,
}

impl Side {
    pub fn other(self) -> Self {
        match self {
            Side::Main => Side::Copy,
            Side::Copy => Side::Main,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DriverCtx<'a> {
    /// Side of the unprimed argument.
    pub side: Side,
    pub step: usize,
    pub t: f64,
    /// Jump mark weights `nu_k`.
    pub nu: &'a [f64],
}

impl DriverCtx<'_> {
    /// Variance density of slot `s`: `lamB` on the Gaussian slot, `lamH nu_k` on mark `k`.
    pub fn slot_density(&self, s: usize, lam_b: f64, lam_h: f64) -> f64 {
        if s == 0 {
            lam_b
        } else {
            lam_h * self.nu[s - 1]
        }
    }
}

/// One particle's arguments `(lambda, y, z)` at a step.
#[derive(Debug, Clone, Copy)]
pub struct DriverArg<'a> {
    pub index: usize,
    pub lam_b: f64,
    pub lam_h: f64,
    pub y: f64,
    /// `z` per slot, Gaussian slot first.
    pub z: &'a [f64],
}

/// Cross-section of `(lambda, y, z)` over one side at one step.
#[derive(Debug, Clone, Copy)]
pub struct StepSample<'a> {
    pub lam_b: &'a [f64],
    pub lam_h: &'a [f64],
    pub y: &'a [f64],
    /// Row-major `N x n_slots`.
    pub z: &'a [f64],
    pub n_slots: usize,
}

impl<'a> StepSample<'a> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn arg(&self, m: usize) -> DriverArg<'a> {
        DriverArg {
            index: m,
            lam_b: self.lam_b[m],
            lam_h: self.lam_h[m],
            y: self.y[m],
            z: &self.z[m * self.n_slots..(m + 1) * self.n_slots],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DriverKind {
    General,
    Linear,
}

/// Driver `h(t, l, l', y, y', z, z')` of a mean-field BSDE `dY = E'[h] dt + Z dmu`.
pub trait Driver: Send + Sync {
    fn eval(&self, ctx: &DriverCtx<'_>, own: &DriverArg<'_>, primed: &DriverArg<'_>) -> f64;

    /// Lipschitz constant `K`.
    fn lipschitz(&self) -> f64;

    fn kind(&self) -> DriverKind {
        DriverKind::General
    }

    /// `false` when `h` ignores the primed arguments.
    fn uses_primed(&self) -> bool {
        true
    }

    /// Sufficient statistics of the copy cross-section, if `E'[h]` factors
    /// through them. `None` selects the direct average.
    fn summarize(&self, _ctx: &DriverCtx<'_>, _copy: &StepSample<'_>) -> Option<Vec<f64>> {
        None
    }

    /// `E'[h]` for one particle. The default averages over the copy in order.
    fn eprime_with(
        &self,
        ctx: &DriverCtx<'_>,
        own: &DriverArg<'_>,
        copy: &StepSample<'_>,
        _summary: Option<&[f64]>,
    ) -> f64 {
        let n = copy.len();
        (0..n)
            .map(|m| self.eval(ctx, own, &copy.arg(m)))
            .sum::<f64>()
            / n as f64
    }
}

/// `E'[h]` for every particle of `sample`, averaging over `copy`.
pub fn eval_eprime<D: Driver + ?Sized>(
    h: &D,
    ctx: &DriverCtx<'_>,
    sample: &StepSample<'_>,
    copy: &StepSample<'_>,
) -> Result<Vec<f64>> {
    if copy.is_empty() {
        return Err(invalid("independent copy is empty"));
    }
    let summary = h.summarize(ctx, copy);
    Ok((0..sample.len())
        .map(|n| h.eprime_with(ctx, &sample.arg(n), copy, summary.as_deref()))
        .collect())
}

type DriverFn = dyn Fn(&DriverCtx<'_>, &DriverArg<'_>, &DriverArg<'_>) -> f64 + Send + Sync;

/// Driver from a closure.
#[derive(Clone)]
pub struct FnDriver {
    f: Arc<DriverFn>,
    lipschitz: f64,
    uses_primed: bool,
}

impl FnDriver {
    pub fn new(
        lipschitz: f64,
        f: impl Fn(&DriverCtx<'_>, &DriverArg<'_>, &DriverArg<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            lipschitz,
            uses_primed: true,
        }
    }

    /// Marks the driver as independent of the primed arguments.
    pub fn without_primed(mut self) -> Self {
        self.uses_primed = false;
        self
    }
}

impl Driver for FnDriver {
    fn eval(&self, ctx: &DriverCtx<'_>, own: &DriverArg<'_>, primed: &DriverArg<'_>) -> f64 {
        (self.f)(ctx, own, primed)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn uses_primed(&self) -> bool {
        self.uses_primed
    }

    fn eprime_with(
        &self,
        ctx: &DriverCtx<'_>,
        own: &DriverArg<'_>,
        copy: &StepSample<'_>,
        _: Option<&[f64]>,
    ) -> f64 {
        if !self.uses_primed {
            return self.eval(ctx, own, &copy.arg(0));
        }
        let n = copy.len();
        (0..n)
            .map(|m| self.eval(ctx, own, &copy.arg(m)))
            .sum::<f64>()
            / n as f64
    }
}

/// Coefficient path indexed by `(step, particle)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CoefPath {
    Zero,
    Constant(f64),
    /// Row-major `n_steps x N`.
    Values {
        n_particles: usize,
        values: Vec<f64>,
    },
}

impl CoefPath {
    pub fn values(n_particles: usize, values: Vec<f64>) -> Self {
        CoefPath::Values {
            n_particles,
            values,
        }
    }

    #[inline]
    pub fn at(&self, step: usize, n: usize) -> f64 {
        match self {
            CoefPath::Zero => 0.0,
            CoefPath::Constant(c) => *c,
            CoefPath::Values {
                n_particles,
                values,
            } => values[step * n_particles + n],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CoefPath::Zero => true,
            CoefPath::Constant(c) => *c == 0.0,
            CoefPath::Values { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            CoefPath::Zero => 0.0,
            CoefPath::Constant(c) => c.abs(),
            CoefPath::Values { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            CoefPath::Zero => true,
            CoefPath::Constant(c) => c.is_finite(),
            CoefPath::Values { values, .. } => values.iter().all(|v| v.is_finite()),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            CoefPath::Zero => CoefPath::Zero,
            CoefPath::Constant(c) => CoefPath::Constant(s * c),
            CoefPath::Values {
                n_particles,
                values,
            } => CoefPath::Values {
                n_particles: *n_particles,
                values: values.iter().map(|v| s * v).collect(),
            },
        }
    }

    fn check_shape(&self, n_steps: usize, n: usize) -> Result<()> {
        match self {
            CoefPath::Values {
                n_particles,
                values,
            } if *n_particles != n || values.len() < n_steps * n => Err(invalid(format!(
                "coefficient path has shape {}x{n_particles}, expected {n_steps}x{n}",
                values.len() / (*n_particles).max(1)
            ))),
            _ => Ok(()),
        }
    }
}

/// Coefficient paths of one side of a linear driver.
///
/// For a particle `n` of this side in the unprimed role and a particle `m`
/// of the other side in the primed role,
/// `h = a_own[n] + a_scale[n] a_primed'[m] + b[n] y + c'[m] y'
///    + sum_s d_s[n] z(s) l(s) + sum_s e_s'[m] z'(s) l'(s)`
/// where primes read the other side's paths and `l(0) = lamB`,
/// `l(k) = lamH nu_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSide {
    pub a_own: CoefPath,
    pub a_scale: CoefPath,
    pub a_primed: CoefPath,
    pub b: CoefPath,
    pub c: CoefPath,
    /// Per slot.
    pub d: Vec<CoefPath>,
    /// Per slot.
    pub e: Vec<CoefPath>,
}

impl LinearSide {
    pub fn zero(n_slots: usize) -> Self {
        Self {
            a_own: CoefPath::Zero,
            a_scale: CoefPath::Zero,
            a_primed: CoefPath::Zero,
            b: CoefPath::Zero,
            c: CoefPath::Zero,
            d: vec![CoefPath::Zero; n_slots],
            e: vec![CoefPath::Zero; n_slots],
        }
    }

    fn all(&self) -> impl Iterator<Item = &CoefPath> {
        [&self.a_own, &self.a_scale, &self.a_primed, &self.b, &self.c]
            .into_iter()
            .chain(&self.d)
            .chain(&self.e)
    }

    pub fn negated(&self) -> Self {
        // Only the additive terms flip; `a_scale * a_primed` flips through `a_primed`.
        Self {
            a_own: self.a_own.scaled(-1.0),
            a_scale: self.a_scale.clone(),
            a_primed: self.a_primed.scaled(-1.0),
            b: self.b.scaled(-1.0),
            c: self.c.scaled(-1.0),
            d: self.d.iter().map(|p| p.scaled(-1.0)).collect(),
            e: self.e.iter().map(|p| p.scaled(-1.0)).collect(),
        }
    }
}

/// Linear mean-field driver with coefficient paths for both sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearDriver {
    pub main: LinearSide,
    pub copy: LinearSide,
    pub n_slots: usize,
}

impl LinearDriver {
    /// Driver whose coefficients are the same constants on both sides.
    pub fn constant(a: f64, b: f64, c: f64, n_slots: usize) -> Self {
        let side = LinearSide {
            a_own: CoefPath::Constant(a),
            b: CoefPath::Constant(b),
            c: CoefPath::Constant(c),
            ..LinearSide::zero(n_slots)
        };
        Self {
            main: side.clone(),
            copy: side,
            n_slots,
        }
    }

    pub fn side(&self, side: Side) -> &LinearSide {
        match side {
            Side::Main => &self.main,
            Side::Copy => &self.copy,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            main: self.main.negated(),
            copy: self.copy.negated(),
            n_slots: self.n_slots,
        }
    }

    /// Shape and finiteness checks against `n_steps` steps and the side sizes.
    pub fn validate(&self, n_steps: usize, n_main: usize, n_copy: usize) -> Result<()> {
        for (side, n) in [(&self.main, n_main), (&self.copy, n_copy)] {
            if side.d.len() != self.n_slots || side.e.len() != self.n_slots {
                return Err(invalid("linear driver slot count mismatch"));
            }
            for p in side.all() {
                p.check_shape(n_steps, n)?;
                if !p.is_finite() {
                    return Err(invalid("linear driver coefficient is not finite"));
                }
            }
        }
        Ok(())
    }
}

impl Driver for LinearDriver {
    fn eval(&self, ctx: &DriverCtx<'_>, own: &DriverArg<'_>, primed: &DriverArg<'_>) -> f64 {
        let (me, other) = (self.side(ctx.side), self.side(ctx.side.other()));
        let (i, n, m) = (ctx.step, own.index, primed.index);
        let mut h = me.a_own.at(i, n)
            + me.a_scale.at(i, n) * other.a_primed.at(i, m)
            + me.b.at(i, n) * own.y
            + other.c.at(i, m) * primed.y;
        for s in 0..self.n_slots {
            h += me.d[s].at(i, n) * own.z[s] * ctx.slot_density(s, own.lam_b, own.lam_h);
            h +=
                other.e[s].at(i, m) * primed.z[s] * ctx.slot_density(s, primed.lam_b, primed.lam_h);
        }
        h
    }

    fn lipschitz(&self) -> f64 {
        [&self.main, &self.copy]
            .iter()
            .flat_map(|s| [&s.b, &s.c].into_iter().chain(&s.d).chain(&s.e))
            .map(CoefPath::sup_abs)
            .fold(0.0, f64::max)
    }

    fn kind(&self) -> DriverKind {
        DriverKind::Linear
    }

    fn uses_primed(&self) -> bool {
        let other = [&self.main, &self.copy];
        other
            .iter()
            .any(|s| !s.a_primed.is_zero() || !s.c.is_zero() || s.e.iter().any(|e| !e.is_zero()))
    }

    /// `[mean a_primed, mean c y', mean sum_s e_s z'(s) l'(s)]` over the copy.
    fn summarize(&self, ctx: &DriverCtx<'_>, copy: &StepSample<'_>) -> Option<Vec<f64>> {
        let other = self.side(ctx.side.other());
        let i = ctx.step;
        let n = copy.len() as f64;
        let (mut sa, mut sc, mut se) = (0.0, 0.0, 0.0);
        for m in 0..copy.len() {
            let arg = copy.arg(m);
            sa += other.a_primed.at(i, m);
            sc += other.c.at(i, m) * arg.y;
            for s in 0..self.n_slots {
                se += other.e[s].at(i, m) * arg.z[s] * ctx.slot_density(s, arg.lam_b, arg.lam_h);
            }
        }
        Some(vec![sa / n, sc / n, se / n])
    }

    fn eprime_with(
        &self,
        ctx: &DriverCtx<'_>,
        own: &DriverArg<'_>,
        copy: &StepSample<'_>,
        summary: Option<&[f64]>,
    ) -> f64 {
        let computed;
        let s = match summary {
            Some(s) => s,
            None => {
                computed = self
                    .summarize(ctx, copy)
                    .expect("linear driver always summarises");
                &computed
            }
        };
        let me = self.side(ctx.side);
        let (i, n) = (ctx.step, own.index);
        let mut h =
            me.a_own.at(i, n) + me.a_scale.at(i, n) * s[0] + me.b.at(i, n) * own.y + s[1] + s[2];
        for k in 0..self.n_slots {
            h += me.d[k].at(i, n) * own.z[k] * ctx.slot_density(k, own.lam_b, own.lam_h);
        }
        h
    }
}
