//! Pulse-level Monte Carlo of the teleportation link.
//!
//! The physical picture is semi-classical: every photon is assigned a time
//! bin and a BSM detector independently, and two-photon interference enters
//! only through the probability that a teleported signal photon leaves the
//! analyser through the "correct" port. A three-fold event is a psi-minus
//! click pattern at the BSM (one click per detector, different bins) together
//! with exactly one click at the signal analyser.

mod decoy;
mod drift;
mod engine;
mod hom;

pub use decoy::{decoy_experiment, DecoyIntensities, DecoyRun};
pub use drift::{run_with_drift, DriftConfig, DriftSample, DriftSeries};
pub use engine::{run, run_reference, Link, Outcome, Pedigree};
pub use hom::{run_hom_scan, HomScanConfig};

use serde::{Deserialize, Serialize};

use crate::domain::{Estimate, TimeBinQubit};
use crate::error::{Error, Result};

/// Photon-number statistics of the SPDC source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatistics {
    Poissonian,
    /// Single-mode thermal (geometric) pair number. This is the statistics
    /// whose two-pair probability `mu^2` the closed-form model carries.
    #[default]
    Thermal,
}

/// Which detected signal photons carry the teleported state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalAttribution {
    /// Only the partner of the idler photon that clicked at the BSM.
    #[default]
    PartnerOnly,
    /// Any signal photon accompanying a one-Alice/one-idler BSM event, which
    /// is how the closed-form model books its `(1,1,2)` term.
    AnySignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_pulses: u64,
    #[serde(default)]
    pub seed: u64,
    pub input_state: TimeBinQubit,
    /// Dark click probability per detector and time-bin window.
    #[serde(default)]
    pub dark_count_prob: f64,
    #[serde(default)]
    pub pair_statistics: PairStatistics,
    /// Analysis phase of the equatorial projector at Bob. `None` analyses
    /// along the expected output state.
    #[serde(default)]
    pub umzi2_phase: Option<f64>,
    /// Arbitrary projector at Bob, e.g. the time-of-arrival basis for
    /// tomography. Mutually exclusive with `umzi2_phase`.
    #[serde(default)]
    pub analysis_state: Option<TimeBinQubit>,
    #[serde(default)]
    pub signal_attribution: SignalAttribution,
}

impl SimConfig {
    pub fn new(n_pulses: u64, seed: u64, input_state: TimeBinQubit) -> Self {
        SimConfig {
            n_pulses,
            seed,
            input_state,
            dark_count_prob: 0.0,
            pair_statistics: PairStatistics::default(),
            umzi2_phase: None,
            analysis_state: None,
            signal_attribution: SignalAttribution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(Error::input("n_pulses must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dark_count_prob) {
            return Err(Error::input(format!(
                "dark_count_prob must lie in [0, 1), got {}",
                self.dark_count_prob
            )));
        }
        if let Some(phi) = self.umzi2_phase {
            if !phi.is_finite() {
                return Err(Error::input("umzi2_phase must be finite"));
            }
            if self.analysis_state.is_some() {
                return Err(Error::input("set at most one of umzi2_phase and analysis_state"));
            }
        }
        Ok(())
    }
}

/// Accepted three-fold events by photon origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tallies {
    /// One Alice photon and one idler at the BSM, the idler's partner signal
    /// detected.
    pub p111: u64,
    /// One Alice photon and one idler at the BSM, a signal from another pair
    /// detected.
    pub p112: u64,
    /// Two idlers at the BSM.
    pub p022: u64,
    /// Two Alice photons at the BSM.
    pub p201: u64,
    /// More than two BSM photons or more than one detected signal.
    pub higher: u64,
    /// Any dark click involved.
    pub dark: u64,
}

impl Tallies {
    pub fn total(&self) -> u64 {
        self.p111 + self.p112 + self.p022 + self.p201 + self.higher + self.dark
    }

    fn add(&mut self, o: &Tallies) {
        self.p111 += o.p111;
        self.p112 += o.p112;
        self.p022 += o.p022;
        self.p201 += o.p201;
        self.higher += o.higher;
        self.dark += o.dark;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n_pulses: u64,
    /// Three-fold events at the analyser port projecting on the target state.
    pub threefold_counts_max: u64,
    /// Three-fold events at the orthogonal port.
    pub threefold_counts_min: u64,
    /// Pulses that produced at least two BSM click sources.
    pub candidates: u64,
    /// Accepted events per pulse, with its Poisson error.
    pub gain: Estimate,
    /// `max / (max + min)` with binomial error; `None` without events.
    pub fidelity: Option<Estimate>,
    pub tallies: Tallies,
}

impl SimResult {
    pub(crate) fn from_counts(n_pulses: u64, max: u64, min: u64, candidates: u64, tallies: Tallies) -> Self {
        let accepted = max + min;
        let n = n_pulses as f64;
        let fidelity = (accepted > 0).then(|| {
            let f = max as f64 / accepted as f64;
            Estimate::new(f, (f * (1.0 - f) / accepted as f64).sqrt())
        });
        SimResult {
            n_pulses,
            threefold_counts_max: max,
            threefold_counts_min: min,
            candidates,
            gain: Estimate::new(accepted as f64 / n, (accepted as f64).sqrt() / n),
            fidelity,
            tallies,
        }
    }

    pub fn accepted(&self) -> u64 {
        self.threefold_counts_max + self.threefold_counts_min
    }
}

/// Seed for the `index`-th sub-run of a composite experiment, drawn from its
/// own ChaCha stream.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - index);
    rng.next_u64()
}
