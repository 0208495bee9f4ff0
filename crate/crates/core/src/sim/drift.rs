//! Slow channel drifts and the two stabilization loops at Charlie: arrival
//! time control for the two BSM inputs and polarization control in front of
//! the PBS.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::SystemParams;
use crate::error::{Error, Result};
use crate::interference::hom_visibility;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    /// Random-walk step of each channel's arrival time, per control interval.
    pub timing_walk_sigma: f64,
    /// Deterministic arrival-time drift per channel, ps per hour.
    pub timing_drift_per_hour: [f64; 2],
    /// Random-walk step of the polarization angle, rad per interval.
    pub pol_walk_sigma: f64,
    /// Seconds.
    pub control_interval: f64,
    /// Smallest delay step of the timing actuator, ps.
    pub delay_resolution: f64,
    /// Wavepacket width entering the HOM overlap, ps.
    pub wavepacket_sigma: f64,
    pub timing_feedback: bool,
    pub pol_feedback: bool,
    /// Single-count timing jitter, ps. The offset estimate from `n` counts
    /// has error `timing_jitter / sqrt(n)`.
    pub timing_jitter: f64,
    /// Counts per interval used by the timing estimate.
    pub timing_counts: f64,
    /// Dither of the polarization controller around its set point, rad.
    pub pol_dither: f64,
    /// Counts per interval at full PBS transmission.
    pub pol_counts: f64,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            timing_walk_sigma: 0.5,
            // 120 ps and -40 ps over three hours.
            timing_drift_per_hour: [40.0, -40.0 / 3.0],
            pol_walk_sigma: 0.012,
            control_interval: 10.0,
            delay_resolution: 1.0,
            wavepacket_sigma: 30.0,
            timing_feedback: true,
            pol_feedback: true,
            timing_jitter: 20.0,
            timing_counts: 1.0e4,
            pol_dither: 0.05,
            pol_counts: 1.0e5,
            seed: 0,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("timing_walk_sigma", self.timing_walk_sigma),
            ("pol_walk_sigma", self.pol_walk_sigma),
            ("delay_resolution", self.delay_resolution),
            ("timing_jitter", self.timing_jitter),
            ("pol_dither", self.pol_dither),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be >= 0, got {v}")));
            }
        }
        let positive = [
            ("control_interval", self.control_interval),
            ("wavepacket_sigma", self.wavepacket_sigma),
            ("timing_counts", self.timing_counts),
            ("pol_counts", self.pol_counts),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.timing_drift_per_hour.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("timing_drift_per_hour must be finite"));
        }
        Ok(())
    }
}

/// State of the link during one control interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    /// End of the interval, s.
    pub time: f64,
    /// Arrival offset of each channel after this interval's correction, ps.
    pub offset_ps: [f64; 2],
    /// Inter-channel offset seen by the interference during the interval,
    /// before the correction was applied, ps.
    pub delta_t_ps: f64,
    pub pbs_transmission: f64,
    pub transmitted_counts: u64,
    /// HOM visibility relative to the drift-free value.
    pub visibility_ratio: f64,
    pub hom_visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    pub drift_free_visibility: f64,
    pub samples: Vec<DriftSample>,
}

impl DriftSeries {
    /// Fraction of intervals whose corrected inter-channel offset is within
    /// `bound` ps.
    pub fn fraction_within(&self, bound: f64) -> f64 {
        let n = self
            .samples
            .iter()
            .filter(|s| (s.offset_ps[0] - s.offset_ps[1]).abs() <= bound)
            .count();
        n as f64 / self.samples.len() as f64
    }

    pub fn min_visibility_ratio(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.visibility_ratio)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn final_visibility_ratio(&self) -> f64 {
        self.samples.last().map_or(1.0, |s| s.visibility_ratio)
    }

    /// Relative standard deviation of the transmitted counts.
    pub fn transmission_rel_std(&self) -> f64 {
        let n = self.samples.len() as f64;
        let xs = self.samples.iter().map(|s| s.transmitted_counts as f64);
        let mean = xs.clone().sum::<f64>() / n;
        let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        var.sqrt() / mean
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn quantize(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        (x / step).round() * step
    } else {
        x
    }
}

/// Steps both loops through `duration` seconds of operation.
pub fn run_with_drift(p: &SystemParams, d: &DriftConfig, duration: f64) -> Result<DriftSeries> {
    p.validate()?;
    d.validate()?;
    if !(duration >= d.control_interval) || !duration.is_finite() {
        return Err(Error::input(format!(
            "duration {duration} s is shorter than one control interval ({} s)",
            d.control_interval
        )));
    }
    let n_intervals = (duration / d.control_interval).floor() as usize;
    let drift_free_visibility = p.zeta * hom_visibility(1.0, 1.0, 2.0, 1.0)?;

    // Independent streams per channel and for the polarization loop.
    let mut timing_rngs = [stream(d.seed, 0), stream(d.seed, 1)];
    let mut pol_rng = stream(d.seed, 2);
    let walk = Normal::new(0.0, d.timing_walk_sigma).expect("finite sigma");
    let estimate = Normal::new(0.0, d.timing_jitter / d.timing_counts.sqrt()).expect("finite sigma");
    let pol_walk = Normal::new(0.0, d.pol_walk_sigma).expect("finite sigma");
    let hours_per_interval = d.control_interval / 3600.0;
    let dip_var = 2.0 * (2.0f64.sqrt() * d.wavepacket_sigma).powi(2);

    let mut offsets = [0.0f64; 2];
    let mut theta = 0.0f64;
    let mut setpoint = 0.0f64;
    let mut samples = Vec::with_capacity(n_intervals);
    for k in 0..n_intervals {
        for (ch, rng) in timing_rngs.iter_mut().enumerate() {
            offsets[ch] += d.timing_drift_per_hour[ch] * hours_per_interval + walk.sample(rng);
        }
        let delta_t = offsets[0] - offsets[1];
        if d.timing_feedback {
            for (ch, rng) in timing_rngs.iter_mut().enumerate() {
                let measured = offsets[ch] + estimate.sample(rng);
                offsets[ch] -= quantize(measured, d.delay_resolution);
            }
        }

        theta += pol_walk.sample(&mut pol_rng);
        let transmission = (theta - setpoint).cos().powi(2);
        let transmitted_counts = poisson(d.pol_counts * transmission, &mut pol_rng);
        if d.pol_feedback {
            let plus = poisson(
                d.pol_counts * (theta - setpoint - d.pol_dither).cos().powi(2),
                &mut pol_rng,
            );
            let minus = poisson(
                d.pol_counts * (theta - setpoint + d.pol_dither).cos().powi(2),
                &mut pol_rng,
            );
            let sum = (plus + minus) as f64;
            if sum > 0.0 && d.pol_dither > 0.0 {
                // (N+ - N-) / (N+ + N-) ~ tan(e) sin(2 dither) for error e.
                let lever = (2.0 * d.pol_dither).sin();
                let error = ((plus as f64 - minus as f64) / (sum * lever)).atan();
                setpoint += error;
            }
        }

        let visibility_ratio = (-delta_t * delta_t / dip_var).exp();
        samples.push(DriftSample {
            time: (k + 1) as f64 * d.control_interval,
            offset_ps: offsets,
            delta_t_ps: delta_t,
            pbs_transmission: transmission,
            transmitted_counts,
            visibility_ratio,
            hom_visibility: drift_free_visibility * visibility_ratio,
        });
    }
    Ok(DriftSeries {
        drift_free_visibility,
        samples,
    })
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("valid mean").sample(rng) as u64
    } else {
        0
    }
}
