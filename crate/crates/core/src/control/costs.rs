use std::sync::Arc;

use crate::mfsde::FD_STEP;

/// Arguments of the running cost at a left knot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPoint {
    pub t: f64,
    pub lam_b: f64,
    pub lam_h: f64,
    pub x: f64,
    /// `E[phi(X_t)]`.
    pub y: f64,
    pub u: f64,
}

/// Gradient of the running cost in `(x, y, u)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostPartials {
    pub dx: f64,
    pub dy: f64,
    pub du: f64,
}

/// Running reward `f`, terminal reward `g` and the law functionals `phi`, `chi`
/// they read through `E[phi(X_t)]` and `E[chi(X_T)]`. The objective is maximised.
pub trait Costs: Send + Sync {
    fn name(&self) -> &str;

    fn running(&self, p: &CostPoint) -> f64;

    fn terminal(&self, x: f64, y: f64) -> f64;

    fn phi(&self, x: f64) -> f64 {
        x
    }

    fn chi(&self, _x: f64) -> f64 {
        0.0
    }

    fn running_partials(&self, p: &CostPoint) -> CostPartials {
        let h = FD_STEP;
        let diff = |a: CostPoint, b: CostPoint| (self.running(&a) - self.running(&b)) / (2.0 * h);
        CostPartials {
            dx: diff(
                CostPoint { x: p.x + h, ..*p },
                CostPoint { x: p.x - h, ..*p },
            ),
            dy: diff(
                CostPoint { y: p.y + h, ..*p },
                CostPoint { y: p.y - h, ..*p },
            ),
            du: diff(
                CostPoint { u: p.u + h, ..*p },
                CostPoint { u: p.u - h, ..*p },
            ),
        }
    }

    /// `(d_x g, d_y g)`.
    fn terminal_partials(&self, x: f64, y: f64) -> (f64, f64) {
        let h = FD_STEP;
        (
            (self.terminal(x + h, y) - self.terminal(x - h, y)) / (2.0 * h),
            (self.terminal(x, y + h) - self.terminal(x, y - h)) / (2.0 * h),
        )
    }

    fn phi_dx(&self, x: f64) -> f64 {
        (self.phi(x + FD_STEP) - self.phi(x - FD_STEP)) / (2.0 * FD_STEP)
    }

    fn chi_dx(&self, x: f64) -> f64 {
        (self.chi(x + FD_STEP) - self.chi(x - FD_STEP)) / (2.0 * FD_STEP)
    }
}

/// `f = 0`, `g = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCosts;

impl Costs for ZeroCosts {
    fn name(&self) -> &str {
        "zero"
    }

    fn running(&self, _: &CostPoint) -> f64 {
        0.0
    }

    fn terminal(&self, _: f64, _: f64) -> f64 {
        0.0
    }

    fn running_partials(&self, _: &CostPoint) -> CostPartials {
        CostPartials::default()
    }

    fn terminal_partials(&self, _: f64, _: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn phi_dx(&self, _: f64) -> f64 {
        1.0
    }

    fn chi_dx(&self, _: f64) -> f64 {
        0.0
    }
}

/// `f = -qx x^2 - qy y^2 - qu u^2 + lx x`, `g = gx x`, `phi = id`, `chi = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCosts {
    pub qx: f64,
    pub qy: f64,
    pub qu: f64,
    pub lx: f64,
    pub gx: f64,
}

impl QuadraticCosts {
    /// `f = -x^2 - y^2 - u^2`, `g = 0`.
    pub fn lq() -> Self {
        Self {
            qx: 1.0,
            qy: 1.0,
            qu: 1.0,
            lx: 0.0,
            gx: 0.0,
        }
    }
}

impl Costs for QuadraticCosts {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn running(&self, p: &CostPoint) -> f64 {
        -self.qx * p.x * p.x - self.qy * p.y * p.y - self.qu * p.u * p.u + self.lx * p.x
    }

    fn terminal(&self, x: f64, _: f64) -> f64 {
        self.gx * x
    }

    fn running_partials(&self, p: &CostPoint) -> CostPartials {
        CostPartials {
            dx: -2.0 * self.qx * p.x + self.lx,
            dy: -2.0 * self.qy * p.y,
            du: -2.0 * self.qu * p.u,
        }
    }

    fn terminal_partials(&self, _: f64, _: f64) -> (f64, f64) {
        (self.gx, 0.0)
    }

    fn phi_dx(&self, _: f64) -> f64 {
        1.0
    }

    fn chi_dx(&self, _: f64) -> f64 {
        0.0
    }
}

type RunningFn = dyn Fn(&CostPoint) -> f64 + Send + Sync;
type TerminalFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Costs from closures; all partials by central differences.
#[derive(Clone)]
pub struct FnCosts {
    name: String,
    running: Arc<RunningFn>,
    terminal: Arc<TerminalFn>,
    phi: Arc<ScalarFn>,
    chi: Arc<ScalarFn>,
}

impl FnCosts {
    pub fn new(
        name: impl Into<String>,
        running: impl Fn(&CostPoint) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            running: Arc::new(running),
            terminal: Arc::new(terminal),
            phi: Arc::new(|x| x),
            chi: Arc::new(|_| 0.0),
        }
    }

    pub fn with_phi(mut self, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.phi = Arc::new(phi);
        self
    }

    pub fn with_chi(mut self, chi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.chi = Arc::new(chi);
        self
    }
}

impl Costs for FnCosts {
    fn name(&self) -> &str {
        &self.name
    }

    fn running(&self, p: &CostPoint) -> f64 {
        (self.running)(p)
    }

    fn terminal(&self, x: f64, y: f64) -> f64 {
        (self.terminal)(x, y)
    }

    fn phi(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    fn chi(&self, x: f64) -> f64 {
        (self.chi)(x)
    }
}
