use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::SystemParams;
use crate::error::{Error, Result};
use crate::interference::{hom_coincidence_probability, DipPoint, DipScan, HomConfig};

/// Synthetic HOM delay scan between two sources at Charlie.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomScanConfig {
    /// RMS temporal width of the wavepacket overlap.
    pub wavepacket_sigma_ps: f64,
    /// Mean photon number of input 1 at the beam splitter; defaults to
    /// `mu_a * eta_a`.
    #[serde(default)]
    pub mean_n1: Option<f64>,
    /// Mean photon number of input 2; defaults to the value of input 1
    /// (a balanced scan).
    #[serde(default)]
    pub mean_n2: Option<f64>,
    #[serde(default = "thermal_g2")]
    pub g2_1: f64,
    #[serde(default = "coherent_g2")]
    pub g2_2: f64,
    /// Overrides `SystemParams::zeta`.
    #[serde(default)]
    pub zeta: Option<f64>,
    /// Expected coincidences per point far outside the dip.
    pub baseline_counts: f64,
    /// Integration time per delay point.
    #[serde(default = "default_integration")]
    pub integration: f64,
    #[serde(default)]
    pub seed: u64,
}

fn thermal_g2() -> f64 {
    2.0
}
fn coherent_g2() -> f64 {
    1.0
}
fn default_integration() -> f64 {
    1.0
}

impl HomScanConfig {
    pub fn new(wavepacket_sigma_ps: f64, baseline_counts: f64, seed: u64) -> Self {
        HomScanConfig {
            wavepacket_sigma_ps,
            mean_n1: None,
            mean_n2: None,
            g2_1: thermal_g2(),
            g2_2: coherent_g2(),
            zeta: None,
            baseline_counts,
            integration: default_integration(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavepacket_sigma_ps > 0.0) || !self.wavepacket_sigma_ps.is_finite() {
            return Err(Error::input(format!(
                "wavepacket_sigma_ps must be > 0, got {}",
                self.wavepacket_sigma_ps
            )));
        }
        if !(self.baseline_counts >= 0.0) || !self.baseline_counts.is_finite() {
            return Err(Error::input("baseline_counts must be >= 0"));
        }
        if !(self.integration > 0.0) {
            return Err(Error::input("integration must be > 0"));
        }
        Ok(())
    }
}

/// Poisson-sampled coincidences against delay, scaled so that the far wings
/// average `baseline_counts`.
pub fn run_hom_scan(p: &SystemParams, delays: &[f64], cfg: &HomScanConfig) -> Result<DipScan> {
    cfg.validate()?;
    let n1 = cfg.mean_n1.unwrap_or(p.mu_a * p.eta_a);
    let n2 = cfg.mean_n2.unwrap_or(n1);
    let hom = |overlap: f64| HomConfig {
        mean_n1: n1,
        mean_n2: n2,
        g2_1: cfg.g2_1,
        g2_2: cfg.g2_2,
        overlap,
        zeta: cfg.zeta.unwrap_or(p.zeta),
    };
    let wing = hom_coincidence_probability(&hom(0.0))?;
    if !(wing > 0.0) {
        return Err(Error::input("both HOM inputs are empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let two_sigma_sq = 2.0 * cfg.wavepacket_sigma_ps * cfg.wavepacket_sigma_ps;
    let mut points = Vec::with_capacity(delays.len());
    for &tau in delays {
        let overlap = (-tau * tau / two_sigma_sq).exp();
        let mean = cfg.baseline_counts * hom_coincidence_probability(&hom(overlap))? / wing;
        let coincidences = if mean > 0.0 {
            Poisson::new(mean).expect("valid mean").sample(&mut rng) as u64
        } else {
            0
        };
        points.push(DipPoint {
            delay: tau,
            coincidences,
            integration: cfg.integration,
        });
    }
    DipScan::new(points)
}
