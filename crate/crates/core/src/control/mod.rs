//! Controlled mean-field dynamics, the objective, the adjoint equation,
//! Hamiltonians, the variation process and maximum-principle checks.
//!
//! Objectives are maximised. The adjoint pair `(p, q)` is solved on the
//! product of the main and an independent copy ensemble; decisions use
//! its projection onto the filtration generated by the noise alone.

mod adjoint;
mod checks;
mod costs;
mod hamiltonian;
mod scenario;
mod variation;

pub use crate::mfsde::{ControlPath, ControlSet};
pub use adjoint::{
    assemble_adjoint, project_to_f, solve_adjoint, AdjointSolution, AdjointSpec, Projection,
};
pub use checks::{
    check_necessary, check_sufficient, maximize_hamiltonian, CheckConfig, KnotStationarity,
    MaxPrincipleReport, Verdicts,
};
pub use costs::{CostPartials, CostPoint, Costs, FnCosts, QuadraticCosts, ZeroCosts};
pub use hamiltonian::{du_hamiltonian, f_hamiltonian, hamiltonian, HamiltonianArgs};
pub use scenario::{
    estimate_objective, particle_payoffs, solve_controlled_forward, solve_controlled_forward_on,
    ObjectiveEstimate, Scenario,
};
pub use variation::{
    difference_quotient_errors, gateaux_derivative, solve_variation, variation_along,
    GateauxEstimate, VariationCoefficients,
};
