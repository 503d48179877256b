//! Numerical toolkit for mean-field forward-backward systems driven by
//! time-changed Gaussian and Poisson noise, with stochastic maximum
//! principle checks and a mean-field Vasicek example.

pub mod control;
pub mod error;
pub mod measures;
pub mod mfbsde;
pub mod mfsde;
pub mod noise;
pub mod regression;
pub mod rng;
pub mod vasicek;

pub use error::{Error, Result};
