//! Domain types shared across the toolkit: time-bin qubits, link parameters,
//! raw count records and unit conversions.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;
const ZERO_AMP: f64 = 1e-12;

/// Wraps a phase into `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// A single photon in a superposition of an early and a late time bin,
/// `amp_early |e> + amp_late e^{i phase} |l>`.
///
/// Values are kept in a canonical global-phase gauge: the early amplitude is
/// real and non-negative, and a phase is only carried when both amplitudes
/// are non-zero. Two physically identical states therefore compare equal
/// field by field (up to rounding).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QubitRepr", into = "QubitRepr")]
pub struct TimeBinQubit {
    amp_early: f64,
    amp_late: f64,
    phase: f64,
}

impl TimeBinQubit {
    pub const EARLY: TimeBinQubit = TimeBinQubit {
        amp_early: 1.0,
        amp_late: 0.0,
        phase: 0.0,
    };
    pub const LATE: TimeBinQubit = TimeBinQubit {
        amp_early: 0.0,
        amp_late: 1.0,
        phase: 0.0,
    };

    pub fn new(amp_early: f64, amp_late: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&amp_early) || !(0.0..=1.0).contains(&amp_late) {
            return Err(Error::input(format!(
                "qubit amplitudes must lie in [0, 1], got ({amp_early}, {amp_late})"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::input("qubit phase must be finite"));
        }
        let norm = amp_early * amp_early + amp_late * amp_late;
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::input(format!(
                "qubit is not normalized: |a_e|^2 + |a_l|^2 = {norm}"
            )));
        }
        Ok(Self::canonical(amp_early, amp_late, phase))
    }

    /// Builds a state from arbitrary complex amplitudes, normalizing and
    /// stripping the global phase.
    pub fn from_amplitudes(early: Complex64, late: Complex64) -> Result<Self> {
        let norm = (early.norm_sqr() + late.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::input("amplitude vector has zero or non-finite norm"));
        }
        let (e, l) = (early / norm, late / norm);
        let phase = if e.norm() > ZERO_AMP && l.norm() > ZERO_AMP {
            l.arg() - e.arg()
        } else {
            0.0
        };
        Ok(Self::canonical(e.norm(), l.norm(), phase))
    }

    /// Equatorial state `(|e> + e^{i phase}|l>)/sqrt(2)`.
    pub fn equatorial(phase: f64) -> Self {
        Self::canonical(FRAC_1_SQRT_2, FRAC_1_SQRT_2, phase)
    }

    fn canonical(amp_early: f64, amp_late: f64, phase: f64) -> Self {
        if amp_early <= ZERO_AMP {
            Self::LATE
        } else if amp_late <= ZERO_AMP {
            Self::EARLY
        } else {
            TimeBinQubit {
                amp_early,
                amp_late,
                phase: wrap_phase(phase),
            }
        }
    }

    pub fn amp_early(&self) -> f64 {
        self.amp_early
    }

    pub fn amp_late(&self) -> f64 {
        self.amp_late
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Probability of finding the photon in the early bin.
    pub fn p_early(&self) -> f64 {
        self.amp_early * self.amp_early
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        [
            Complex64::new(self.amp_early, 0.0),
            Complex64::from_polar(self.amp_late, self.phase),
        ]
    }

    /// `|<self|other>|^2`.
    pub fn overlap(&self, other: &TimeBinQubit) -> f64 {
        let [a0, a1] = self.amplitudes();
        let [b0, b1] = other.amplitudes();
        (a0.conj() * b0 + a1.conj() * b1).norm_sqr()
    }

    /// Bloch vector `(x, y, z)` with `|e>` at the north pole.
    pub fn bloch(&self) -> [f64; 3] {
        let s = 2.0 * self.amp_early * self.amp_late;
        [
            s * self.phase.cos(),
            s * self.phase.sin(),
            self.p_early() - self.amp_late * self.amp_late,
        ]
    }

    /// On the equator of the Bloch sphere (equal bin populations).
    pub fn is_equatorial(&self) -> bool {
        (self.amp_early - self.amp_late).abs() < 1e-9
    }

    /// Field comparison with tolerance; phases compare on the circle.
    pub fn approx_eq(&self, other: &TimeBinQubit, tol: f64) -> bool {
        let dphi = (self.phase - other.phase).rem_euclid(TAU);
        let dphi = dphi.min(TAU - dphi);
        (self.amp_early - other.amp_early).abs() <= tol
            && (self.amp_late - other.amp_late).abs() <= tol
            && dphi <= tol
    }
}

/// The six tomography / preparation states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateLabel {
    E,
    L,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl StateLabel {
    pub const ALL: [StateLabel; 6] = [
        StateLabel::E,
        StateLabel::L,
        StateLabel::Plus,
        StateLabel::Minus,
        StateLabel::PlusI,
        StateLabel::MinusI,
    ];

    pub fn qubit(self) -> TimeBinQubit {
        match self {
            StateLabel::E => TimeBinQubit::EARLY,
            StateLabel::L => TimeBinQubit::LATE,
            StateLabel::Plus => TimeBinQubit::equatorial(0.0),
            StateLabel::Minus => TimeBinQubit::equatorial(PI),
            StateLabel::PlusI => TimeBinQubit::equatorial(PI / 2.0),
            StateLabel::MinusI => TimeBinQubit::equatorial(3.0 * PI / 2.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateLabel::E => "e",
            StateLabel::L => "l",
            StateLabel::Plus => "+",
            StateLabel::Minus => "-",
            StateLabel::PlusI => "+i",
            StateLabel::MinusI => "-i",
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // Accept the unicode minus and ket decorations as written in tables.
        let t = s
            .trim()
            .trim_start_matches('|')
            .trim_end_matches(['>', '⟩'])
            .replace('−', "-");
        match t.as_str() {
            "e" => Ok(StateLabel::E),
            "l" => Ok(StateLabel::L),
            "+" | "plus" => Ok(StateLabel::Plus),
            "-" | "minus" => Ok(StateLabel::Minus),
            "+i" | "plus_i" => Ok(StateLabel::PlusI),
            "-i" | "minus_i" => Ok(StateLabel::MinusI),
            _ => Err(Error::input(format!("unknown state label {s:?}"))),
        }
    }
}

/// Canonical state for one of the six labels `e, l, +, -, +i, -i`.
pub fn qubit_from_label(label: &str) -> Result<TimeBinQubit> {
    Ok(label.parse::<StateLabel>()?.qubit())
}

/// The state Bob's photon is projected onto after a psi-minus Bell-state
/// measurement: `sigma_y |psi>` with the global phase stripped.
pub fn expected_output_state(q: &TimeBinQubit) -> TimeBinQubit {
    // sigma_y (a, b e^{i phi}) = (-i b e^{i phi}, i a), relative phase pi - phi.
    TimeBinQubit::canonical(q.amp_late, q.amp_early, PI - q.phase)
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum QubitRepr {
    Label(String),
    Explicit {
        amp_early: f64,
        amp_late: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl TryFrom<QubitRepr> for TimeBinQubit {
    type Error = Error;

    fn try_from(r: QubitRepr) -> Result<Self> {
        match r {
            QubitRepr::Label(s) => qubit_from_label(&s),
            QubitRepr::Explicit {
                amp_early,
                amp_late,
                phase,
            } => TimeBinQubit::new(amp_early, amp_late, phase),
        }
    }
}

impl From<TimeBinQubit> for QubitRepr {
    fn from(q: TimeBinQubit) -> Self {
        QubitRepr::Explicit {
            amp_early: q.amp_early,
            amp_late: q.amp_late,
            phase: q.phase,
        }
    }
}

fn default_bin_separation() -> f64 {
    625e-12
}

fn default_coincidence_window() -> f64 {
    200e-12
}

/// Scalar parameters of the teleportation link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Qubit repetition rate [Hz].
    pub rep_rate: f64,
    /// Mean entangled pairs per qubit period.
    pub mu_spdc: f64,
    /// Mean photons per qubit at Alice before the channel.
    pub mu_a: f64,
    /// Transmission Alice -> Charlie.
    pub eta_a: f64,
    /// Transmission of idler photons Bob -> Charlie.
    pub eta_i: f64,
    /// Transmission of signal photons, including the storage spool.
    pub eta_s: f64,
    /// Detection efficiency of the BSM detectors.
    pub xi_bsm: f64,
    /// Detection efficiency of the signal detectors.
    pub xi_s: f64,
    /// Indistinguishability of the photons meeting at the BSM.
    pub zeta: f64,
    /// Time-bin separation [s].
    #[serde(default = "default_bin_separation")]
    pub bin_separation: f64,
    /// Coincidence window [s].
    #[serde(default = "default_coincidence_window")]
    pub coincidence_window: f64,
}

impl SystemParams {
    /// Operating point of the metropolitan deployment.
    pub fn operating_point() -> Self {
        SystemParams {
            rep_rate: 500e6,
            mu_spdc: 0.042,
            mu_a: 0.029,
            eta_a: 0.147,
            eta_i: 0.012,
            eta_s: 0.014,
            xi_bsm: 0.60,
            xi_s: 0.80,
            zeta: 0.89,
            bin_separation: default_bin_separation(),
            coincidence_window: default_coincidence_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("eta_a", self.eta_a),
            ("eta_i", self.eta_i),
            ("eta_s", self.eta_s),
            ("xi_bsm", self.xi_bsm),
            ("xi_s", self.xi_s),
            ("zeta", self.zeta),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [("mu_spdc", self.mu_spdc), ("mu_a", self.mu_a)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("rep_rate", self.rep_rate),
            ("bin_separation", self.bin_separation),
            ("coincidence_window", self.coincidence_window),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.coincidence_window >= self.bin_separation {
            return Err(Error::input(format!(
                "coincidence_window ({:e} s) must be shorter than bin_separation ({:e} s)",
                self.coincidence_window, self.bin_separation
            )));
        }
        Ok(())
    }
}

/// Raw detector counts accumulated over an integration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub label: String,
    pub counts: u64,
    pub integration_time: f64,
}

impl CountRecord {
    pub fn new(label: impl Into<String>, counts: u64, integration_time: f64) -> Result<Self> {
        if !(integration_time > 0.0) || !integration_time.is_finite() {
            return Err(Error::input(format!(
                "integration time must be > 0, got {integration_time}"
            )));
        }
        Ok(CountRecord {
            label: label.into(),
            counts,
            integration_time,
        })
    }

    pub fn rate(&self) -> f64 {
        self.counts as f64 / self.integration_time
    }
}

/// A value with a symmetric one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub uncertainty: f64,
}

impl Estimate {
    pub fn new(value: f64, uncertainty: f64) -> Self {
        Estimate { value, uncertainty }
    }

    pub fn exact(value: f64) -> Self {
        Estimate::new(value, 0.0)
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.value, self.uncertainty)
    }
}

/// Teleportation fidelities for the standard input set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub f_e: Option<Estimate>,
    pub f_l: Option<Estimate>,
    pub f_plus: Option<Estimate>,
    pub f_plus_i: Option<Estimate>,
    pub f_equator: Option<Estimate>,
    pub f_avg: Option<Estimate>,
}

/// Converts a loss in dB to a linear transmission factor in `(0, 1]`.
pub fn db_to_linear(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) || !loss_db.is_finite() {
        return Err(Error::input(format!("loss must be >= 0 dB, got {loss_db}")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Inverse of [`db_to_linear`].
pub fn linear_to_db(transmission: f64) -> Result<f64> {
    if !(transmission > 0.0 && transmission <= 1.0) {
        return Err(Error::input(format!(
            "transmission must lie in (0, 1], got {transmission}"
        )));
    }
    Ok(-10.0 * transmission.log10())
}
