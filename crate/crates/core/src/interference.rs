//! Two-photon interference: HOM coincidence model and visibility bounds,
//! Gaussian dip fits and fixed-period fringe fits.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{least_squares, FitModel, FitOptions, FitResult};

/// Two independent sources meeting at a balanced beam splitter.
///
/// The interference term enters as `-2 n1 n2 zeta overlap`, where `overlap`
/// is the temporal mode overlap (1 at zero delay, 0 far outside the dip) and
/// `zeta` the residual indistinguishability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomConfig {
    pub mean_n1: f64,
    pub mean_n2: f64,
    pub g2_1: f64,
    pub g2_2: f64,
    pub overlap: f64,
    #[serde(default = "one")]
    pub zeta: f64,
}

fn one() -> f64 {
    1.0
}

impl HomConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mean_n1", self.mean_n1),
            ("mean_n2", self.mean_n2),
            ("g2_1", self.g2_1),
            ("g2_2", self.g2_2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("overlap", self.overlap), ("zeta", self.zeta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Unnormalized two-detector coincidence probability.
pub fn hom_coincidence_probability(cfg: &HomConfig) -> Result<f64> {
    cfg.validate()?;
    let (n1, n2) = (cfg.mean_n1, cfg.mean_n2);
    let cross = 2.0 * n1 * n2;
    Ok(0.25 * (cfg.g2_1 * n1 * n1 + cfg.g2_2 * n2 * n2 + cross - cross * cfg.zeta * cfg.overlap))
}

/// Maximum HOM visibility for perfectly indistinguishable inputs with the
/// given mean photon numbers and second-order autocorrelations.
pub fn hom_visibility(n1: f64, n2: f64, g2_1: f64, g2_2: f64) -> Result<f64> {
    if !(n1 > 0.0 && n2 > 0.0) || !n1.is_finite() || !n2.is_finite() {
        return Err(Error::input(format!(
            "mean photon numbers must be > 0, got ({n1}, {n2})"
        )));
    }
    if !(g2_1 >= 0.0 && g2_2 >= 0.0) {
        return Err(Error::input("g2 values must be >= 0"));
    }
    // Written in the ratio r = n1/n2 so that only the balance matters.
    let r = n1 / n2;
    Ok(2.0 * r / (g2_1 * r * r + g2_2 + 2.0 * r))
}

/// Single-photon indistinguishability `V_exp / V_theory`. Values above 1 are
/// returned as computed.
pub fn indistinguishability(v_exp: f64, v_theory: f64) -> Result<f64> {
    if !(v_theory > 0.0 && v_theory <= 1.0) {
        return Err(Error::input(format!(
            "theoretical visibility must lie in (0, 1], got {v_theory}"
        )));
    }
    if !(v_exp >= 0.0) || !v_exp.is_finite() {
        return Err(Error::input(format!(
            "measured visibility must be >= 0, got {v_exp}"
        )));
    }
    Ok(v_exp / v_theory)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipPoint {
    #[serde(rename = "delay_ps")]
    pub delay: f64,
    #[serde(rename = "counts")]
    pub coincidences: u64,
    #[serde(rename = "t_sec")]
    pub integration: f64,
}

/// Coincidences recorded against relative delay, sorted by delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipScan {
    pub points: Vec<DipPoint>,
}

impl DipScan {
    pub fn new(points: Vec<DipPoint>) -> Result<Self> {
        let scan = DipScan { points };
        scan.validate()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 5 {
            return Err(Error::input(format!(
                "a dip scan needs at least 5 points, got {}",
                self.points.len()
            )));
        }
        if self.points.windows(2).any(|w| !(w[0].delay < w[1].delay)) {
            return Err(Error::input("dip scan delays must be strictly increasing"));
        }
        if self.points.iter().any(|p| !(p.integration > 0.0)) {
            return Err(Error::input("dip scan integration times must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    pub visibility: f64,
    pub visibility_err: f64,
    pub center_ps: f64,
    pub width_ps: f64,
    /// Coincidence rate far from the dip [1/s].
    pub baseline: f64,
    pub fit: FitResult,
}

/// Gaussian fit of the coincidence rate `B (1 - V exp(-(t - t0)^2 / (2 w^2)))`.
pub fn fit_hom_dip(scan: &DipScan) -> Result<DipFit> {
    scan.validate()?;
    let xs: Vec<f64> = scan.points.iter().map(|p| p.delay).collect();
    let ys: Vec<f64> = scan
        .points
        .iter()
        .map(|p| p.coincidences as f64 / p.integration)
        .collect();
    fit_dip_rates(&xs, &ys)
}

/// Dip fit on already-normalized `(delay, rate)` samples.
pub fn fit_dip_rates(delays: &[f64], rates: &[f64]) -> Result<DipFit> {
    let fit = least_squares(FitModel::GaussianDip, delays, rates, &FitOptions::default())?;
    // A dip narrower than the delay step rests on a single sample and its
    // visibility is not identifiable.
    let min_step = delays
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    if fit.params[3] < 0.5 * min_step {
        return Err(Error::Fit {
            reason: format!(
                "fitted width {:.3} ps is below half the delay step {min_step:.3} ps",
                fit.params[3]
            ),
            iterations: fit.iterations,
            residual_norm: fit.residual_norm,
            last_params: fit.params.clone(),
        });
    }
    Ok(DipFit {
        visibility: fit.params[1],
        visibility_err: fit.std_errors[1],
        center_ps: fit.params[2],
        width_ps: fit.params[3],
        baseline: fit.params[0],
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub visibility: f64,
    /// Standard error of the visibility.
    pub uncertainty: f64,
    pub phase_offset: f64,
    pub amplitude: f64,
    pub fit: FitResult,
}

/// Largest gap between consecutive phases on the circle.
fn largest_circular_gap(phases: &[f64]) -> f64 {
    let mut wrapped: Vec<f64> = phases.iter().map(|p| p.rem_euclid(TAU)).collect();
    wrapped.sort_by(f64::total_cmp);
    let wrap_gap = wrapped[0] + TAU - wrapped[wrapped.len() - 1];
    wrapped.windows(2).map(|w| w[1] - w[0]).fold(wrap_gap, f64::max)
}

/// Fits `A (1 + V cos(phi + phi0))` to `(phase, counts)` pairs with the
/// period fixed at `2 pi`.
pub fn fringe_visibility(points: &[(f64, f64)]) -> Result<FringeFit> {
    if points.len() < 6 {
        return Err(Error::input(format!(
            "a fringe needs at least 6 points, got {}",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("fringe phases must be finite"));
    }
    // Samples confined to a half circle cannot separate amplitude from
    // visibility reliably.
    let gap = largest_circular_gap(&xs);
    if gap >= PI {
        return Err(Error::Fit {
            reason: format!("phase samples leave a gap of {gap:.3} rad; they must cover a full period"),
            iterations: 0,
            residual_norm: f64::NAN,
            last_params: vec![],
        });
    }
    let fit = least_squares(FitModel::SinusoidFixedPeriod, &xs, &ys, &FitOptions::default())?;
    Ok(FringeFit {
        visibility: fit.params[1],
        uncertainty: fit.std_errors[1],
        phase_offset: fit.params[2],
        amplitude: fit.params[0],
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn cfg(n1: f64, n2: f64, g1: f64, g2: f64, overlap: f64) -> HomConfig {
        HomConfig {
            mean_n1: n1,
            mean_n2: n2,
            g2_1: g1,
            g2_2: g2,
            overlap,
            zeta: 1.0,
        }
    }

    #[test]
    fn coincidence_probability_extremes() {
        let wing = hom_coincidence_probability(&cfg(1.0, 1.0, 2.0, 1.0, 0.0)).unwrap();
        let dip = hom_coincidence_probability(&cfg(1.0, 1.0, 2.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(wing, 1.25);
        assert_relative_eq!(dip, 0.75);
        assert_relative_eq!((wing - dip) / wing, 0.40, max_relative = 1e-12);

        assert_relative_eq!(
            hom_coincidence_probability(&cfg(0.3, 0.0, 2.0, 1.0, 1.0)).unwrap(),
            0.25 * 2.0 * 0.09
        );
        assert_eq!(
            hom_coincidence_probability(&cfg(0.0, 0.0, 2.0, 1.0, 1.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn visibility_examples() {
        assert_abs_diff_eq!(
            hom_visibility(0.01, 0.01, 2.0, 1.0).unwrap(),
            0.40,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            hom_visibility(2.0, 1.0, 2.0, 1.0).unwrap(),
            0.3077,
            epsilon = 1e-4
        );
        assert!(hom_visibility(1e9, 1.0, 2.0, 1.0).unwrap() < 1e-8);
        assert_abs_diff_eq!(hom_visibility(1.0, 1.0, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            hom_visibility(1.0, 1.0, 2.0, 2.0).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert!(hom_visibility(0.0, 1.0, 2.0, 1.0).unwrap_err().is_input_error());
    }

    #[test]
    fn indistinguishability_examples() {
        assert_eq!(indistinguishability(0.40, 0.40).unwrap(), 1.0);
        assert_abs_diff_eq!(
            indistinguishability(0.353, 0.40).unwrap(),
            0.8825,
            epsilon = 1e-12
        );
        assert_eq!(indistinguishability(0.0, 0.40).unwrap(), 0.0);
        assert!(indistinguishability(0.3, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn balanced_thermal_coherent_is_forty_percent(n in 1e-6f64..1e3) {
            prop_assert!((hom_visibility(n, n, 2.0, 1.0).unwrap() - 0.4).abs() < 1e-14);
        }

        #[test]
        fn visibility_depends_on_ratio_only(
            n1 in 1e-4f64..10.0, n2 in 1e-4f64..10.0, c in 1e-3f64..1e3,
            g1 in 0.5f64..3.0, g2 in 0.5f64..3.0,
        ) {
            let a = hom_visibility(n1, n2, g1, g2).unwrap();
            let b = hom_visibility(c * n1, c * n2, g1, g2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn coincidence_probability_decreases_with_overlap(
            n1 in 0.0f64..2.0, n2 in 0.0f64..2.0, o1 in 0.0f64..1.0, o2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if o1 < o2 { (o1, o2) } else { (o2, o1) };
            let a = hom_coincidence_probability(&cfg(n1, n2, 2.0, 1.0, lo)).unwrap();
            let b = hom_coincidence_probability(&cfg(n1, n2, 2.0, 1.0, hi)).unwrap();
            prop_assert!(b <= a + 1e-15);
            prop_assert!(b >= 0.0);
        }
    }

    #[test]
    fn exact_dip_recovered() {
        let xs: Vec<f64> = (-20..=20).map(|i| 10.0 * i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&t| FitModel::GaussianDip.eval(&[1000.0, 0.353, 0.0, 30.0], t))
            .collect();
        let f = fit_dip_rates(&xs, &ys).unwrap();
        assert_relative_eq!(f.visibility, 0.353, max_relative = 1e-6);
        assert_relative_eq!(f.width_ps, 30.0, max_relative = 1e-6);
        assert_relative_eq!(f.baseline, 1000.0, max_relative = 1e-6);
        assert!(f.center_ps.abs() < 1e-6);
    }

    #[test]
    fn flat_scan_has_no_dip() {
        let points = (0..11)
            .map(|i| DipPoint {
                delay: i as f64 * 20.0 - 100.0,
                coincidences: 1000,
                integration: 1.0,
            })
            .collect();
        let f = fit_hom_dip(&DipScan::new(points).unwrap()).unwrap();
        assert_abs_diff_eq!(f.visibility, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.baseline, 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn scan_validation() {
        let pts: Vec<DipPoint> = (0..4)
            .map(|i| DipPoint {
                delay: i as f64,
                coincidences: 1,
                integration: 1.0,
            })
            .collect();
        assert!(DipScan::new(pts).is_err());
        let unsorted: Vec<DipPoint> = [0.0, 2.0, 1.0, 3.0, 4.0]
            .iter()
            .map(|&d| DipPoint {
                delay: d,
                coincidences: 1,
                integration: 1.0,
            })
            .collect();
        assert!(DipScan::new(unsorted).is_err());
    }

    fn fringe(a: f64, v: f64, phi0: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let x = TAU * i as f64 / n as f64;
                (x, a * (1.0 + v * (x + phi0).cos()))
            })
            .collect()
    }

    #[test]
    fn exact_fringe_recovered() {
        let f = fringe_visibility(&fringe(500.0, 0.614, 0.3, 12)).unwrap();
        assert_abs_diff_eq!(f.visibility, 0.614, epsilon = 1e-9);
        assert_abs_diff_eq!(f.amplitude, 500.0, epsilon = 1e-7);
        assert_abs_diff_eq!(f.phase_offset, 0.3, epsilon = 1e-9);
        let max = f.fit.eval(-0.3);
        let min = f.fit.eval(PI - 0.3);
        assert_abs_diff_eq!((max - min) / (max + min), f.visibility, epsilon = 1e-12);
    }

    #[test]
    fn constant_fringe_has_zero_visibility() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, 250.0)).collect();
        let f = fringe_visibility(&pts).unwrap();
        assert_abs_diff_eq!(f.visibility, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn half_period_fringe_is_rejected() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (0.3 * i as f64, 100.0 + i as f64)).collect();
        assert!(matches!(fringe_visibility(&pts), Err(Error::Fit { .. })));
        assert!(fringe_visibility(&fringe(1.0, 0.5, 0.0, 5)).is_err());
    }
}
