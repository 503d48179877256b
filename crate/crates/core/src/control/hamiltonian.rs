use super::costs::CostPoint;
use super::scenario::Scenario;
use crate::mfsde::StatePoint;
use crate::noise::{LevyGrid, Slot};

/// Arguments of the Hamiltonian at one knot.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianArgs<'a> {
    pub t: f64,
    pub step: usize,
    pub particle: usize,
    pub lam_b: f64,
    pub lam_h: f64,
    pub x: f64,
    /// `E[phi(X_t)]`, read by the running reward.
    pub y1: f64,
    /// Law features of the dynamics; `features[0]` is `E[X_t]`.
    pub features: &'a [f64],
    pub u: f64,
    pub p: f64,
    /// Adjoint `q` per slot.
    pub q: &'a [f64],
}

impl HamiltonianArgs<'_> {
    fn state(&self) -> StatePoint<'_> {
        StatePoint {
            t: self.t,
            step: self.step,
            particle: self.particle,
            lam_b: self.lam_b,
            lam_h: self.lam_h,
            x: self.x,
            features: self.features,
            u: self.u,
        }
    }

    fn cost(&self) -> CostPoint {
        CostPoint {
            t: self.t,
            lam_b: self.lam_b,
            lam_h: self.lam_h,
            x: self.x,
            y: self.y1,
            u: self.u,
        }
    }
}

fn slot_weight(levy: &LevyGrid, s: usize, lam_b: f64, lam_h: f64) -> (f64, f64) {
    if s == 0 {
        (0.0, lam_b)
    } else {
        (levy.marks()[s - 1], lam_h * levy.weights()[s - 1])
    }
}

/// `f + b p + kappa(0) q(0) lamB + sum_k kappa(z_k) q(z_k) lamH nu_k`.
pub fn hamiltonian(s: &Scenario, levy: &LevyGrid, a: &HamiltonianArgs<'_>) -> f64 {
    let sp = a.state();
    let mut h = s.costs.running(&a.cost()) + s.dynamics.drift(&sp) * a.p;
    for (k, &q) in a.q.iter().enumerate() {
        let (z, w) = slot_weight(levy, k, a.lam_b, a.lam_h);
        if q != 0.0 && w != 0.0 {
            h += s.dynamics.diffusion(&sp, Slot::from_index(k), z) * q * w;
        }
    }
    h
}

/// The Hamiltonian evaluated at projected adjoint values `(pF, qF)`.
pub fn f_hamiltonian(s: &Scenario, levy: &LevyGrid, projected: &HamiltonianArgs<'_>) -> f64 {
    hamiltonian(s, levy, projected)
}

/// `d_u` of the Hamiltonian from the partials of `f`, `b` and `kappa`.
pub fn du_hamiltonian(s: &Scenario, levy: &LevyGrid, a: &HamiltonianArgs<'_>) -> f64 {
    let sp = a.state();
    let mut d = s.costs.running_partials(&a.cost()).du + s.dynamics.drift_partials(&sp).du * a.p;
    for (k, &q) in a.q.iter().enumerate() {
        let (z, w) = slot_weight(levy, k, a.lam_b, a.lam_h);
        if q != 0.0 && w != 0.0 {
            d += s
                .dynamics
                .diffusion_partials(&sp, Slot::from_index(k), z)
                .du
                * q
                * w;
        }
    }
    d
}
