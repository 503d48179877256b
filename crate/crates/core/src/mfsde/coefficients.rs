use std::fmt;
use std::sync::Arc;

use crate::measures::EmpiricalMeasure;
use crate::noise::Slot;

/// Step size of the central differences used when no analytic partial exists.
pub const FD_STEP: f64 = 1e-5;

/// A functional `<g, Q>` of the current marginal law consumed by coefficients.
#[derive(Clone)]
pub enum Feature {
    Mean,
    Functional(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Mean => write!(f, "Mean"),
            Feature::Functional(_) => write!(f, "Functional(..)"),
        }
    }
}

impl Feature {
    pub fn functional(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Feature::Functional(Arc::new(g))
    }

    /// Ordered average over `atoms`.
    pub fn evaluate(&self, atoms: &[f64]) -> f64 {
        let n = atoms.len() as f64;
        match self {
            Feature::Mean => atoms.iter().sum::<f64>() / n,
            Feature::Functional(g) => atoms.iter().map(|&x| g(x)).sum::<f64>() / n,
        }
    }

    pub fn on_measure(&self, m: &EmpiricalMeasure) -> f64 {
        self.evaluate(m.atoms())
    }
}

/// Arguments of the coefficients at a left knot.
///
/// `features[0]` plays the role of the mean-field argument `y` wherever a
/// scalar `y` is needed (partials, Hamiltonians).
#[derive(Debug, Clone, Copy)]
pub struct StatePoint<'a> {
    pub t: f64,
    pub step: usize,
    pub particle: usize,
    pub lam_b: f64,
    pub lam_h: f64,
    pub x: f64,
    pub features: &'a [f64],
    pub u: f64,
}

impl StatePoint<'_> {
    pub fn y(&self) -> f64 {
        self.features.first().copied().unwrap_or(0.0)
    }
}

/// Partial derivatives in `(x, y, u)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Partials {
    pub dx: f64,
    pub dy: f64,
    pub du: f64,
}

/// Drift `b` and noise coefficient `kappa` of a (controlled) mean-field SDE.
pub trait Coefficients: Send + Sync {
    fn name(&self) -> &str;

    /// Law functionals the coefficients read, in order.
    fn features(&self) -> Vec<Feature> {
        vec![Feature::Mean]
    }

    fn drift(&self, p: &StatePoint<'_>) -> f64;

    /// `kappa(t, z, ...)`; `z = 0` on the Gaussian slot.
    fn diffusion(&self, p: &StatePoint<'_>, slot: Slot, z: f64) -> f64;

    /// Declared Lipschitz constant `C`.
    fn lipschitz(&self) -> f64 {
        f64::INFINITY
    }

    /// Declared bound `K` on the partial derivatives.
    fn bound(&self) -> f64 {
        f64::INFINITY
    }

    fn drift_partials(&self, p: &StatePoint<'_>) -> Partials {
        central_partials(p, |q| self.drift(q))
    }

    fn diffusion_partials(&self, p: &StatePoint<'_>, slot: Slot, z: f64) -> Partials {
        central_partials(p, |q| self.diffusion(q, slot, z))
    }
}

/// Central differences of `f` in `x`, `features[0]` and `u`.
pub fn central_partials(p: &StatePoint<'_>, f: impl Fn(&StatePoint<'_>) -> f64) -> Partials {
    let h = FD_STEP;
    let dx = {
        let (a, b) = (
            StatePoint { x: p.x + h, ..*p },
            StatePoint { x: p.x - h, ..*p },
        );
        (f(&a) - f(&b)) / (2.0 * h)
    };
    let du = {
        let (a, b) = (
            StatePoint { u: p.u + h, ..*p },
            StatePoint { u: p.u - h, ..*p },
        );
        (f(&a) - f(&b)) / (2.0 * h)
    };
    let dy = if p.features.is_empty() {
        0.0
    } else {
        let mut up = p.features.to_vec();
        let mut dn = p.features.to_vec();
        up[0] += h;
        dn[0] -= h;
        (f(&StatePoint {
            features: &up,
            ..*p
        }) - f(&StatePoint {
            features: &dn,
            ..*p
        })) / (2.0 * h)
    };
    Partials { dx, dy, du }
}

/// `b = 0`, `kappa = 0`.
#[derive(Debug, Clone, Default)]
pub struct ZeroCoefficients;

impl Coefficients for ZeroCoefficients {
    fn name(&self) -> &str {
        "zero"
    }

    fn features(&self) -> Vec<Feature> {
        Vec::new()
    }

    fn drift(&self, _: &StatePoint<'_>) -> f64 {
        0.0
    }

    fn diffusion(&self, _: &StatePoint<'_>, _: Slot, _: f64) -> f64 {
        0.0
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn bound(&self) -> f64 {
        0.0
    }

    fn drift_partials(&self, _: &StatePoint<'_>) -> Partials {
        Partials::default()
    }

    fn diffusion_partials(&self, _: &StatePoint<'_>, _: Slot, _: f64) -> Partials {
        Partials::default()
    }
}

/// `b = a x + c E[X] + d u`, `kappa(0) = sigma`, `kappa(z) = jump_scale * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMeanField {
    pub a: f64,
    pub c: f64,
    pub d: f64,
    pub sigma: f64,
    pub jump_scale: f64,
}

impl LinearMeanField {
    pub fn new(a: f64, c: f64) -> Self {
        Self {
            a,
            c,
            d: 0.0,
            sigma: 0.0,
            jump_scale: 0.0,
        }
    }
}

impl Coefficients for LinearMeanField {
    fn name(&self) -> &str {
        "linear-test"
    }

    fn drift(&self, p: &StatePoint<'_>) -> f64 {
        self.a * p.x + self.c * p.y() + self.d * p.u
    }

    fn diffusion(&self, _: &StatePoint<'_>, slot: Slot, z: f64) -> f64 {
        match slot {
            Slot::Gaussian => self.sigma,
            Slot::Jump(_) => self.jump_scale * z,
        }
    }

    fn lipschitz(&self) -> f64 {
        self.a.abs() + self.c.abs() + self.d.abs()
    }

    fn bound(&self) -> f64 {
        self.a.abs().max(self.c.abs()).max(self.d.abs())
    }

    fn drift_partials(&self, _: &StatePoint<'_>) -> Partials {
        Partials {
            dx: self.a,
            dy: self.c,
            du: self.d,
        }
    }

    fn diffusion_partials(&self, _: &StatePoint<'_>, _: Slot, _: f64) -> Partials {
        Partials::default()
    }
}

/// Law-free Ornstein-Uhlenbeck: `b = rev (level - x) + u`, `kappa(0) = sigma`,
/// `kappa(z) = jump_scale * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrnsteinUhlenbeck {
    pub rev: f64,
    pub level: f64,
    pub sigma: f64,
    pub jump_scale: f64,
}

impl Coefficients for OrnsteinUhlenbeck {
    fn name(&self) -> &str {
        "ou-test"
    }

    fn features(&self) -> Vec<Feature> {
        Vec::new()
    }

    fn drift(&self, p: &StatePoint<'_>) -> f64 {
        self.rev * (self.level - p.x) + p.u
    }

    fn diffusion(&self, _: &StatePoint<'_>, slot: Slot, z: f64) -> f64 {
        match slot {
            Slot::Gaussian => self.sigma,
            Slot::Jump(_) => self.jump_scale * z,
        }
    }

    fn lipschitz(&self) -> f64 {
        self.rev.abs() + 1.0
    }

    fn bound(&self) -> f64 {
        self.rev.abs().max(1.0)
    }

    fn drift_partials(&self, _: &StatePoint<'_>) -> Partials {
        Partials {
            dx: -self.rev,
            dy: 0.0,
            du: 1.0,
        }
    }

    fn diffusion_partials(&self, _: &StatePoint<'_>, _: Slot, _: f64) -> Partials {
        Partials::default()
    }
}

type DriftFn = dyn Fn(&StatePoint<'_>) -> f64 + Send + Sync;
type DiffusionFn = dyn Fn(&StatePoint<'_>, Slot, f64) -> f64 + Send + Sync;

/// Coefficients from closures; partials fall back to central differences.
#[derive(Clone)]
pub struct FnCoefficients {
    name: String,
    features: Vec<Feature>,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
}

impl FnCoefficients {
    pub fn new(
        name: impl Into<String>,
        features: Vec<Feature>,
        drift: impl Fn(&StatePoint<'_>) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(&StatePoint<'_>, Slot, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            features,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
        }
    }
}

impl Coefficients for FnCoefficients {
    fn name(&self) -> &str {
        &self.name
    }

    fn features(&self) -> Vec<Feature> {
        self.features.clone()
    }

    fn drift(&self, p: &StatePoint<'_>) -> f64 {
        (self.drift)(p)
    }

    fn diffusion(&self, p: &StatePoint<'_>, slot: Slot, z: f64) -> f64 {
        (self.diffusion)(p, slot, z)
    }
}
