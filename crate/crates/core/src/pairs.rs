//! Pair-source characterization: singles/coincidence counting model, pump
//! power scans and coincidence-to-accidental ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{least_squares, FitModel, FitOptions, FitResult};

/// Rate-level counting model of an SPDC source seen by two detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairCountModel {
    /// Pair generation rate R [1/s].
    pub pair_rate: f64,
    /// Raman noise photon rates [1/s].
    pub raman_rate_s: f64,
    pub raman_rate_i: f64,
    /// End-to-end collection efficiencies t_s, t_i.
    pub collection_s: f64,
    pub collection_i: f64,
    /// Detector dark count rates [1/s].
    pub dark_s: f64,
    pub dark_i: f64,
    /// Coincidence window [s].
    pub window: f64,
}

impl PairCountModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pair_rate", self.pair_rate),
            ("raman_rate_s", self.raman_rate_s),
            ("raman_rate_i", self.raman_rate_i),
            ("dark_s", self.dark_s),
            ("dark_i", self.dark_i),
            ("window", self.window),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("collection_s", self.collection_s),
            ("collection_i", self.collection_i),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Expected counts over one integration period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedCounts {
    pub n_s: f64,
    pub n_i: f64,
    pub n_co: f64,
    pub n_ac: f64,
}

pub fn predict_counts(model: &PairCountModel, integration: f64) -> Result<PredictedCounts> {
    model.validate()?;
    if !(integration > 0.0) || !integration.is_finite() {
        return Err(Error::input(format!(
            "integration time must be > 0, got {integration}"
        )));
    }
    let rate_s = (model.pair_rate + model.raman_rate_s) * model.collection_s + model.dark_s;
    let rate_i = (model.pair_rate + model.raman_rate_i) * model.collection_i + model.dark_i;
    // Accidentals are built from singles rates, then scaled to counts.
    let rate_ac = rate_s * rate_i * model.window;
    let rate_co = model.pair_rate * model.collection_s * model.collection_i + rate_ac;
    Ok(PredictedCounts {
        n_s: rate_s * integration,
        n_i: rate_i * integration,
        n_co: rate_co * integration,
        n_ac: rate_ac * integration,
    })
}

/// One row of a pump-power scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerScanPoint {
    #[serde(rename = "power_mw")]
    pub pump_power: f64,
    #[serde(rename = "n_s")]
    pub singles_s: u64,
    #[serde(rename = "n_i")]
    pub singles_i: u64,
    #[serde(rename = "n_co")]
    pub coincidences: u64,
    #[serde(rename = "n_ac")]
    pub accidentals: u64,
    #[serde(rename = "t_sec")]
    pub integration_time: f64,
}

/// Quadratic fit of one detector's singles rate against pump power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    /// `R t` for this channel [1/(s mW^2)].
    pub quadratic: f64,
    pub linear: f64,
    pub constant: f64,
    /// Standard errors of `[quadratic, linear, constant]`.
    pub std_errors: [f64; 3],
    /// Data minus fit, per point [1/s].
    pub residuals: Vec<f64>,
}

impl ChannelFit {
    fn from_fit(fit: &FitResult, xs: &[f64], ys: &[f64]) -> Self {
        ChannelFit {
            quadratic: fit.params[0],
            linear: fit.params[1],
            constant: fit.params[2],
            std_errors: [fit.std_errors[0], fit.std_errors[1], fit.std_errors[2]],
            residuals: xs.iter().zip(ys).map(|(&x, &y)| y - fit.eval(x)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerScanFit {
    pub signal: ChannelFit,
    pub idler: ChannelFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Ordinary,
    /// Inverse Poisson variance of each rate, `t^2 / max(N, 1)`.
    Poisson,
}

/// Fits singles rates of both channels to quadratics in pump power. Negative
/// coefficients are reported as fitted.
pub fn fit_power_scan(points: &[PowerScanPoint], weighting: Weighting) -> Result<PowerScanFit> {
    if points.len() < 4 {
        return Err(Error::Fit {
            reason: format!("power scan needs at least 4 points, got {}", points.len()),
            iterations: 0,
            residual_norm: f64::NAN,
            last_params: vec![],
        });
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.integration_time > 0.0) || !p.pump_power.is_finite() {
            return Err(Error::input(format!(
                "scan point {i}: integration time must be > 0 and power finite"
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.pump_power).collect();
    let channel = |counts: &dyn Fn(&PowerScanPoint) -> u64| -> Result<ChannelFit> {
        let ys: Vec<f64> = points
            .iter()
            .map(|p| counts(p) as f64 / p.integration_time)
            .collect();
        let weights = match weighting {
            Weighting::Ordinary => None,
            Weighting::Poisson => Some(
                points
                    .iter()
                    .map(|p| p.integration_time.powi(2) / (counts(p) as f64).max(1.0))
                    .collect(),
            ),
        };
        let opts = FitOptions {
            weights,
            ..FitOptions::default()
        };
        let fit = least_squares(FitModel::Quadratic, &xs, &ys, &opts)?;
        Ok(ChannelFit::from_fit(&fit, &xs, &ys))
    };
    Ok(PowerScanFit {
        signal: channel(&|p| p.singles_s)?,
        idler: channel(&|p| p.singles_i)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairNumber {
    /// Pair generation rate R [1/s].
    pub rate: f64,
    /// Mean pairs per pulse.
    pub mu_spdc: f64,
}

/// Inverts the coincidence line of the counting model for R and `R / R_rep`.
pub fn extract_pair_number(
    n_co: f64,
    n_ac: f64,
    t_s: f64,
    t_i: f64,
    integration: f64,
    rep_rate: f64,
) -> Result<PairNumber> {
    if !(n_co >= 0.0 && n_ac >= 0.0) {
        return Err(Error::input("coincidence counts must be >= 0"));
    }
    if n_co < n_ac {
        return Err(Error::input(format!(
            "coincidences ({n_co}) below accidentals ({n_ac}) are nonphysical"
        )));
    }
    if !(integration > 0.0) || !(rep_rate > 0.0) {
        return Err(Error::input("integration time and repetition rate must be > 0"));
    }
    if !(0.0..=1.0).contains(&t_s) || !(0.0..=1.0).contains(&t_i) {
        return Err(Error::input("collection efficiencies must lie in [0, 1]"));
    }
    let denom = t_s * t_i * integration;
    if denom == 0.0 {
        return Err(Error::undefined(
            "pair rate undefined for zero collection efficiency",
        ));
    }
    let rate = (n_co - n_ac) / denom;
    Ok(PairNumber {
        rate,
        mu_spdc: rate / rep_rate,
    })
}

/// Coincidence-to-accidental ratio. Returns `+inf` when no accidentals were
/// recorded but coincidences were.
pub fn car(n_co: f64, n_ac: f64) -> Result<f64> {
    if !(n_co >= 0.0 && n_ac >= 0.0) {
        return Err(Error::input("counts must be >= 0"));
    }
    if n_ac == 0.0 {
        return if n_co > 0.0 {
            Ok(f64::INFINITY)
        } else {
            Err(Error::undefined(
                "CAR undefined with no coincidences and no accidentals",
            ))
        };
    }
    Ok(n_co / n_ac)
}
