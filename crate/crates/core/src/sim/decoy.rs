use serde::{Deserialize, Serialize};

use super::{derive_seed, run, SimConfig, SimResult};
use crate::decoy::DecoyDataset;
use crate::domain::{StateLabel, SystemParams};
use crate::error::{Error, Result};

/// Mean photon numbers of Alice's weak coherent pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoyIntensities {
    pub signal: f64,
    pub decoy: f64,
    #[serde(default)]
    pub vacuum: f64,
}

impl DecoyIntensities {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal > self.decoy && self.decoy >= 0.0) || !self.signal.is_finite() {
            return Err(Error::input(format!(
                "need signal > decoy >= 0, got {} and {}",
                self.signal, self.decoy
            )));
        }
        if self.vacuum != 0.0 {
            return Err(Error::input(format!(
                "vacuum intensity must be 0, got {}",
                self.vacuum
            )));
        }
        Ok(())
    }
}

/// Simulated decoy measurement of one input state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyRun {
    pub state: StateLabel,
    /// Runs at signal, decoy and vacuum intensity.
    pub runs: [SimResult; 3],
    /// Gains in Hz.
    pub dataset: DecoyDataset,
}

/// Runs the link at the three intensities for each input state. `base`
/// supplies everything except the input state and seed, which are set per
/// sub-run.
pub fn decoy_experiment(
    p: &SystemParams,
    intensities: &DecoyIntensities,
    states: &[StateLabel],
    base: &SimConfig,
) -> Result<Vec<DecoyRun>> {
    intensities.validate()?;
    let mus = [intensities.signal, intensities.decoy, intensities.vacuum];
    let mut out = Vec::with_capacity(states.len());
    for (si, &state) in states.iter().enumerate() {
        let mut runs = Vec::with_capacity(3);
        for (k, &mu) in mus.iter().enumerate() {
            let params = SystemParams { mu_a: mu, ..*p };
            let cfg = SimConfig {
                input_state: state.qubit(),
                seed: derive_seed(base.seed, (si * 3 + k) as u64),
                ..*base
            };
            runs.push(run(&params, &cfg)?);
        }
        let gain = |r: &SimResult| r.gain.value * p.rep_rate;
        let error = |r: &SimResult| r.fidelity.map_or(0.0, |f| 1.0 - f.value);
        let runs: [SimResult; 3] = runs.try_into().expect("three intensities");
        let dataset = DecoyDataset {
            state_label: state.as_str().to_string(),
            mu_signal: mus[0],
            mu_decoy: mus[1],
            mu_vacuum: 0.0,
            gain_signal: gain(&runs[0]),
            gain_decoy: gain(&runs[1]),
            gain_vacuum: gain(&runs[2]),
            error_signal: error(&runs[0]),
            error_decoy: error(&runs[1]),
            error_vacuum: error(&runs[2]),
        };
        out.push(DecoyRun { state, runs, dataset });
    }
    Ok(out)
}
