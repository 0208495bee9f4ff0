use std::collections::BTreeMap;
use std::fmt::Display;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Abort threshold on the fraction of resamples the estimator rejects.
const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    1000
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            trials: default_trials(),
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        BootstrapConfig { trials, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(Error::input(format!(
                "bootstrap needs at least 100 trials, got {}",
                self.trials
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
    pub failed: usize,
}

/// Draws `Poisson(n)` with `n` as the rate; a zero count stays zero.
pub fn poisson_resample<R: rand::Rng>(n: u64, rng: &mut R) -> u64 {
    if n == 0 {
        return 0;
    }
    let d = Poisson::new(n as f64).expect("positive finite rate");
    d.sample(rng) as u64
}

/// Monte Carlo error propagation assuming Poissonian detection statistics.
///
/// Every trial replaces each count `N` by an independent `Poisson(N)` draw and
/// re-evaluates `estimator`. Trial `k` uses its own ChaCha stream derived from
/// `(seed, k)`, so results do not depend on scheduling.
pub fn poisson_bootstrap_slice<F, E>(
    counts: &[u64],
    estimator: F,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult>
where
    F: Fn(&[u64]) -> std::result::Result<f64, E> + Sync,
    E: Display,
{
    cfg.validate()?;
    let outcomes: Vec<std::result::Result<f64, String>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(trial as u64);
            let sample: Vec<u64> = counts.iter().map(|&n| poisson_resample(n, &mut rng)).collect();
            match estimator(&sample) {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(format!("estimator returned {v}")),
                Err(e) => Err(e.to_string()),
            }
        })
        .collect();

    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * cfg.trials as f64 {
        let first_failure = outcomes
            .iter()
            .find_map(|o| o.as_ref().err().cloned())
            .unwrap_or_default();
        return Err(Error::Bootstrap {
            failed,
            trials: cfg.trials,
            first_failure,
        });
    }

    let values: Vec<f64> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(BootstrapResult {
        mean,
        std: var.sqrt(),
        trials: cfg.trials,
        failed,
    })
}

/// Labelled variant of [`poisson_bootstrap_slice`].
pub fn poisson_bootstrap<F, E>(
    counts: &BTreeMap<String, u64>,
    estimator: F,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult>
where
    F: Fn(&BTreeMap<String, u64>) -> std::result::Result<f64, E> + Sync,
    E: Display,
{
    let labels: Vec<&String> = counts.keys().collect();
    let values: Vec<u64> = counts.values().copied().collect();
    poisson_bootstrap_slice(
        &values,
        |sample| {
            let map: BTreeMap<String, u64> = labels
                .iter()
                .map(|l| (*l).clone())
                .zip(sample.iter().copied())
                .collect();
            estimator(&map)
        },
        cfg,
    )
}

/// Fidelity bound a classical measure-and-prepare strategy cannot beat.
pub const CLASSICAL_FIDELITY_BOUND: f64 = 2.0 / 3.0;

/// Distance of `value` above `bound` in units of `std`.
pub fn sigma_violation(value: f64, std: f64, bound: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::input(format!("standard deviation must be > 0, got {std}")));
    }
    Ok((value - bound) / std)
}
