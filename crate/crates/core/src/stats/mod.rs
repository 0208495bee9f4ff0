//! Poissonian Monte Carlo error propagation and least-squares fitting.

mod bootstrap;
mod fit;

pub use bootstrap::{
    poisson_bootstrap, poisson_bootstrap_slice, poisson_resample, sigma_violation, BootstrapConfig,
    BootstrapResult, CLASSICAL_FIDELITY_BOUND,
};
pub use fit::{initial_guess, least_squares, FitModel, FitOptions, FitResult};
