//! Simulation and analysis toolkit for a fiber-based time-bin quantum
//! teleportation link.
//!
//! The crate covers the closed-form link model ([`model`]), decoy-state
//! single-photon bounds ([`decoy`]), qubit tomography ([`tomography`]), HOM
//! and fringe analysis ([`interference`]), pair-source characterization
//! ([`pairs`]) and a pulse-level Monte Carlo of the whole link ([`sim`]) that
//! serves as an independent check on the closed form.

pub mod decoy;
pub mod domain;
pub mod error;
pub mod interference;
pub mod io;
pub mod model;
pub mod pairs;
pub mod sim;
pub mod stats;
pub mod tomography;

pub use domain::{
    db_to_linear, expected_output_state, linear_to_db, qubit_from_label, CountRecord, Estimate,
    FidelitySummary, StateLabel, SystemParams, TimeBinQubit,
};
pub use error::{Error, Result};
