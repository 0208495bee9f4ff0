//! Decoy-state bounds on the single-photon yield, error rate and fidelity of
//! teleportation driven by a weak coherent source.
//!
//! Gains may be given per pulse or in Hz: every formula is homogeneous in the
//! gain unit, so bounds come out in whatever unit the inputs used.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gains and error rates of one input state at signal, decoy and vacuum
/// intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyDataset {
    pub state_label: String,
    pub mu_signal: f64,
    pub mu_decoy: f64,
    pub mu_vacuum: f64,
    pub gain_signal: f64,
    pub gain_decoy: f64,
    /// Vacuum gain, used directly as the zero-photon yield `Y0`.
    pub gain_vacuum: f64,
    pub error_signal: f64,
    pub error_decoy: f64,
    pub error_vacuum: f64,
}

impl DecoyDataset {
    pub fn validate(&self) -> Result<()> {
        if self.mu_vacuum != 0.0 {
            return Err(Error::input(format!(
                "{}: vacuum intensity must be 0, got {}",
                self.state_label, self.mu_vacuum
            )));
        }
        if !(self.mu_decoy > 0.0 && self.mu_signal > self.mu_decoy) || !self.mu_signal.is_finite() {
            return Err(Error::input(format!(
                "{}: need mu_signal > mu_decoy > 0, got {} and {}",
                self.state_label, self.mu_signal, self.mu_decoy
            )));
        }
        for (name, v) in [
            ("gain_signal", self.gain_signal),
            ("gain_decoy", self.gain_decoy),
            ("gain_vacuum", self.gain_vacuum),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{}: {name} must be >= 0", self.state_label)));
            }
        }
        for (name, v) in [
            ("error_signal", self.error_signal),
            ("error_decoy", self.error_decoy),
            ("error_vacuum", self.error_vacuum),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!(
                    "{}: {name} must lie in [0, 1], got {v}",
                    self.state_label
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub f1_lower: f64,
    /// Gain attributable to single photons at decoy intensity,
    /// `exp(-mu_d) mu_d Y1_L`.
    pub sp_gain: f64,
}

impl DecoyBounds {
    /// Whether the error bound landed inside `[0, 1]`.
    pub fn is_physical(&self) -> bool {
        (0.0..=1.0).contains(&self.e1_upper)
    }
}

/// Lower bound on the single-photon yield. Negative values are returned as
/// computed; they signal data no Poisson mixture can produce.
pub fn yield_lower_bound(d: &DecoyDataset) -> Result<f64> {
    d.validate()?;
    let (ms, md) = (d.mu_signal, d.mu_decoy);
    let prefactor = ms / (ms * md - md * md);
    Ok(prefactor
        * (d.gain_decoy * md.exp()
            - (md * md) / (ms * ms) * d.gain_signal * ms.exp()
            - (ms * ms - md * md) / (ms * ms) * d.gain_vacuum))
}

/// Upper bound on the single-photon error rate given `y1_lower`.
pub fn error_upper_bound(d: &DecoyDataset, y1_lower: f64) -> Result<f64> {
    d.validate()?;
    if !(y1_lower > 0.0) || !y1_lower.is_finite() {
        return Err(Error::undefined(format!(
            "{}: single-photon yield bound is {y1_lower}; error bound undefined",
            d.state_label
        )));
    }
    let md = d.mu_decoy;
    Ok((d.error_decoy * d.gain_decoy * md.exp() - d.error_vacuum * d.gain_vacuum) / (md * y1_lower))
}

pub fn single_photon_fidelity(d: &DecoyDataset) -> Result<DecoyBounds> {
    let y1_lower = yield_lower_bound(d)?;
    let e1_upper = error_upper_bound(d, y1_lower)?;
    let md = d.mu_decoy;
    Ok(DecoyBounds {
        y1_lower,
        e1_upper,
        f1_lower: 1.0 - e1_upper,
        sp_gain: (-md).exp() * md * y1_lower,
    })
}

/// Gain of a coherent state of mean `mu` given n-photon yields `Y(0..N)`.
pub fn gain_model(yields: &[f64], mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::input(format!("mean photon number must be >= 0, got {mu}")));
    }
    if yields.iter().any(|y| !y.is_finite()) {
        return Err(Error::input("yields must be finite"));
    }
    let mut weight = (-mu).exp();
    let mut q = 0.0;
    for (n, y) in yields.iter().enumerate() {
        if n > 0 {
            weight *= mu / n as f64;
        }
        q += y * weight;
    }
    Ok(q)
}

/// Gain-weighted error rate `E Q` of a coherent state, given per-n yields and
/// error rates.
pub fn error_gain_model(yields: &[f64], errors: &[f64], mu: f64) -> Result<f64> {
    if yields.len() != errors.len() {
        return Err(Error::input("yields and error rates must have equal length"));
    }
    let weighted: Vec<f64> = yields.iter().zip(errors).map(|(y, e)| y * e).collect();
    gain_model(&weighted, mu)
}

/// Builds the dataset a source with the given per-n yields and error rates
/// would produce.
pub fn synthetic_dataset(
    label: &str,
    yields: &[f64],
    errors: &[f64],
    mu_signal: f64,
    mu_decoy: f64,
) -> Result<DecoyDataset> {
    let ratio = |mu: f64| -> Result<f64> {
        let q = gain_model(yields, mu)?;
        let eq = error_gain_model(yields, errors, mu)?;
        Ok(if q > 0.0 { eq / q } else { 0.0 })
    };
    Ok(DecoyDataset {
        state_label: label.to_string(),
        mu_signal,
        mu_decoy,
        mu_vacuum: 0.0,
        gain_signal: gain_model(yields, mu_signal)?,
        gain_decoy: gain_model(yields, mu_decoy)?,
        gain_vacuum: gain_model(yields, 0.0)?,
        error_signal: ratio(mu_signal)?,
        error_decoy: ratio(mu_decoy)?,
        error_vacuum: ratio(0.0)?,
    })
}
