//! Closed-form performance model of the teleportation link: three-fold
//! coincidence probabilities per qubit, equatorial fidelity, rate, the
//! measurement-side fidelity formulas and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{db_to_linear, Estimate, FidelitySummary, SystemParams};
use crate::error::{Error, Result};

/// Three-fold coincidence probabilities per qubit for the retained photon
/// number cases `(n_A, n_i, n_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseProbabilities {
    pub p111: f64,
    pub p022: f64,
    pub p201: f64,
    pub p112: f64,
}

impl CaseProbabilities {
    pub fn total(&self) -> f64 {
        self.p111 + self.p022 + self.p201 + self.p112
    }
}

/// How the signal detection factor of the `(0,2,2)` case is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P022Form {
    /// `1 - (1 - eta_s xi_s)^2`, the same two-signal factor as `(1,1,2)`.
    #[default]
    Consistent,
    /// `1 - (1 - xi_s xi_s)^2` as typeset in the source derivation.
    AsPrinted,
}

pub fn case_probabilities(p: &SystemParams) -> CaseProbabilities {
    case_probabilities_with(p, P022Form::Consistent)
}

pub fn case_probabilities_with(p: &SystemParams, form: P022Form) -> CaseProbabilities {
    let ma = p.mu_a * p.eta_a;
    let att = (-ma).exp();
    let xb2 = p.xi_bsm * p.xi_bsm;
    let ps = p.eta_s * p.xi_s;
    let two_signal = |q: f64| 1.0 - (1.0 - q) * (1.0 - q);
    let p022_signal = match form {
        P022Form::Consistent => two_signal(ps),
        P022Form::AsPrinted => two_signal(p.xi_s * p.xi_s),
    };
    let mu = p.mu_spdc;
    CaseProbabilities {
        p111: 0.25 * mu * ma * att * p.eta_i * p.eta_s * xb2 * p.xi_s,
        p022: 0.25 * mu * mu * att * p.eta_i * p.eta_i * xb2 * p022_signal,
        p201: 0.25 * mu * ma * ma * att / 2.0 * (1.0 - p.eta_i) * xb2 * ps,
        p112: 0.5 * mu * mu * ma * att * (1.0 - p.eta_i) * p.eta_i * xb2 * two_signal(ps),
    }
}

/// Fidelity for equatorial inputs: only the `(1,1,1)` and `(1,1,2)` cases
/// carry interference, everything else is an unbiased coin.
pub fn equatorial_fidelity(cp: &CaseProbabilities, zeta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::input(format!("zeta must lie in [0, 1], got {zeta}")));
    }
    let total = cp.total();
    if !(total > 0.0) {
        return Err(Error::undefined(
            "fidelity undefined: all case probabilities are zero",
        ));
    }
    Ok(0.5 + zeta * (cp.p111 + cp.p112) / (2.0 * total))
}

/// Three-fold rate `R_rep * sum P`, optionally divided by the transmission
/// of `correction_db` of measurement loss.
pub fn teleport_rate(cp: &CaseProbabilities, rep_rate: f64, correction_db: f64) -> Result<f64> {
    if !(rep_rate > 0.0) || !rep_rate.is_finite() {
        return Err(Error::input(format!(
            "repetition rate must be > 0, got {rep_rate}"
        )));
    }
    Ok(rep_rate * cp.total() / db_to_linear(correction_db)?)
}

/// `F = (1 + V) / 2` for equatorial states.
pub fn fidelity_from_visibility(v: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::input(format!("visibility must lie in [-1, 1], got {v}")));
    }
    Ok((1.0 + v) / 2.0)
}

/// `F = P_S / (P_S + P_F)` from the maximum and minimum three-fold counts.
pub fn fidelity_from_counts(p_success: f64, p_failure: f64) -> Result<f64> {
    if !(p_success >= 0.0 && p_failure >= 0.0) {
        return Err(Error::input("counts must be >= 0"));
    }
    let total = p_success + p_failure;
    if total == 0.0 {
        return Err(Error::undefined("fidelity undefined without counts"));
    }
    Ok(p_success / total)
}

/// `F = R_c / (R_c + R_w)` for pole states.
pub fn pole_fidelity(correct: u64, wrong: u64) -> Result<f64> {
    fidelity_from_counts(correct as f64, wrong as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    /// `(4 F_equator + F_e + F_l) / 6`.
    FourStateEquator,
    /// `(2 (F_+ + F_+i) + F_e + F_l) / 6`.
    QstFour,
}

/// Weighted average over the Bloch sphere. Uncertainties are combined in
/// quadrature assuming independent inputs.
pub fn average_fidelity(f: &FidelitySummary, mode: AverageMode) -> Result<Estimate> {
    let need = |name: &str, v: Option<Estimate>| {
        v.ok_or_else(|| Error::input(format!("average fidelity needs {name}")))
    };
    let terms: Vec<(f64, Estimate)> = match mode {
        AverageMode::FourStateEquator => vec![
            (4.0, need("f_equator", f.f_equator)?),
            (1.0, need("f_e", f.f_e)?),
            (1.0, need("f_l", f.f_l)?),
        ],
        AverageMode::QstFour => vec![
            (2.0, need("f_plus", f.f_plus)?),
            (2.0, need("f_plus_i", f.f_plus_i)?),
            (1.0, need("f_e", f.f_e)?),
            (1.0, need("f_l", f.f_l)?),
        ],
    };
    let value = terms.iter().map(|(w, e)| w * e.value).sum::<f64>() / 6.0;
    let var = terms
        .iter()
        .map(|(w, e)| (w * e.uncertainty / 6.0).powi(2))
        .sum::<f64>();
    Ok(Estimate::new(value, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    MuA,
    MuSpdc,
    /// Extra fiber [km] added to the signal storage spool.
    DistanceKm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    #[serde(default = "default_fiber_loss")]
    pub fiber_loss_db_per_km: f64,
}

fn default_fiber_loss() -> f64 {
    0.2
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::input("sweep needs at least one value"));
        }
        if self.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::input("sweep values must be finite and >= 0"));
        }
        if self.values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::input("sweep values must be sorted"));
        }
        if !(self.fiber_loss_db_per_km >= 0.0) {
            return Err(Error::input("fiber loss must be >= 0 dB/km"));
        }
        Ok(())
    }

    /// Parameters at sweep coordinate `x`.
    pub fn apply(&self, p: &SystemParams, x: f64) -> SystemParams {
        let mut q = *p;
        match self.variable {
            SweepVariable::MuA => q.mu_a = x,
            SweepVariable::MuSpdc => q.mu_spdc = x,
            SweepVariable::DistanceKm => {
                q.eta_s = p.eta_s * 10f64.powf(-self.fiber_loss_db_per_km * x / 10.0)
            }
        }
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub fidelity: f64,
    pub rate_hz: f64,
}

/// Equatorial fidelity and raw rate along one parameter axis.
pub fn sweep(p: &SystemParams, spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    p.validate()?;
    spec.validate()?;
    spec.values
        .par_iter()
        .map(|&x| {
            let q = spec.apply(p, x);
            let cp = case_probabilities(&q);
            Ok(SweepPoint {
                x,
                fidelity: equatorial_fidelity(&cp, q.zeta)?,
                rate_hz: teleport_rate(&cp, q.rep_rate, 0.0)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn operating_point_case_probabilities() {
        let cp = case_probabilities(&SystemParams::operating_point());
        assert_relative_eq!(cp.p111, 2.1565e-9, max_relative = 1e-3);
        assert_relative_eq!(cp.p022, 5.0706e-10, max_relative = 1e-3);
        assert_relative_eq!(cp.p201, 3.7846e-10, max_relative = 1e-3);
        assert_relative_eq!(cp.p112, 3.5594e-10, max_relative = 1e-3);
    }

    #[test]
    fn printed_p022_form_differs_only_in_p022() {
        let p = SystemParams::operating_point();
        let a = case_probabilities_with(&p, P022Form::Consistent);
        let b = case_probabilities_with(&p, P022Form::AsPrinted);
        assert_eq!((a.p111, a.p201, a.p112), (b.p111, b.p201, b.p112));
        assert_relative_eq!(b.p022, 1.98e-8, max_relative = 1e-2);
    }

    #[test]
    fn limits() {
        let mut p = SystemParams::operating_point();
        p.mu_a = 0.0;
        let cp = case_probabilities(&p);
        assert_eq!((cp.p111, cp.p201, cp.p112), (0.0, 0.0, 0.0));
        assert!(cp.p022 > 0.0);
        assert_eq!(equatorial_fidelity(&cp, 0.89).unwrap(), 0.5);

        let mut p = SystemParams::operating_point();
        p.mu_spdc = 0.0;
        let cp = case_probabilities(&p);
        assert_eq!(cp.total(), 0.0);
        assert_eq!(teleport_rate(&cp, 5e8, 0.0).unwrap(), 0.0);
        assert!(matches!(equatorial_fidelity(&cp, 0.89), Err(Error::Undefined(_))));
    }

    #[test]
    fn equatorial_fidelity_examples() {
        let cp = case_probabilities(&SystemParams::operating_point());
        assert_abs_diff_eq!(equatorial_fidelity(&cp, 0.89).unwrap(), 0.82903, epsilon = 1e-4);
        assert_eq!(equatorial_fidelity(&cp, 0.0).unwrap(), 0.5);
        let clean = CaseProbabilities {
            p111: 1e-9,
            p022: 0.0,
            p201: 0.0,
            p112: 0.0,
        };
        assert_abs_diff_eq!(equatorial_fidelity(&clean, 0.89).unwrap(), 0.945, epsilon = 1e-12);
    }

    #[test]
    fn rate_examples() {
        let cp = case_probabilities(&SystemParams::operating_point());
        assert_relative_eq!(teleport_rate(&cp, 5e8, 0.0).unwrap(), 1.6990, max_relative = 1e-3);
        assert_relative_eq!(
            teleport_rate(&cp, 5e8, 6.25).unwrap(),
            7.1646,
            max_relative = 1e-3
        );
        assert!(teleport_rate(&cp, 0.0, 0.0).is_err());
    }

    #[test]
    fn measurement_formulas() {
        assert_abs_diff_eq!(fidelity_from_visibility(0.607).unwrap(), 0.8035, epsilon = 1e-12);
        assert_eq!(fidelity_from_visibility(1.0).unwrap(), 1.0);
        assert_eq!(fidelity_from_visibility(0.0).unwrap(), 0.5);
        assert!(fidelity_from_visibility(1.2).is_err());

        assert_abs_diff_eq!(pole_fidelity(922, 78).unwrap(), 0.922, epsilon = 1e-12);
        assert_eq!(pole_fidelity(1, 0).unwrap(), 1.0);
        assert_eq!(pole_fidelity(1, 1).unwrap(), 0.5);
        assert!(pole_fidelity(0, 0).is_err());
    }

    fn exact(v: f64) -> Option<Estimate> {
        Some(Estimate::exact(v))
    }

    #[test]
    fn averages() {
        let f = FidelitySummary {
            f_equator: exact(0.804),
            f_e: exact(0.922),
            f_l: exact(0.924),
            ..Default::default()
        };
        let avg = average_fidelity(&f, AverageMode::FourStateEquator).unwrap();
        assert_abs_diff_eq!(avg.value, 0.8437, epsilon = 1e-4);
        assert!(average_fidelity(&f, AverageMode::QstFour)
            .unwrap_err()
            .is_input_error());

        let f = FidelitySummary {
            f_plus: exact(0.897),
            f_plus_i: exact(0.849),
            f_e: exact(0.978),
            f_l: exact(0.966),
            ..Default::default()
        };
        let avg = average_fidelity(&f, AverageMode::QstFour).unwrap();
        assert_abs_diff_eq!(avg.value, 0.906, epsilon = 5e-4);

        let ones = FidelitySummary {
            f_plus: exact(1.0),
            f_plus_i: exact(1.0),
            f_e: exact(1.0),
            f_l: exact(1.0),
            f_equator: exact(1.0),
            f_avg: None,
        };
        for mode in [AverageMode::FourStateEquator, AverageMode::QstFour] {
            assert_abs_diff_eq!(average_fidelity(&ones, mode).unwrap().value, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mu_a_sweep_has_interior_maximum() {
        let spec = SweepSpec {
            variable: SweepVariable::MuA,
            values: (1..=200).map(|i| i as f64 * 0.002).collect(),
            fiber_loss_db_per_km: 0.2,
        };
        let pts = sweep(&SystemParams::operating_point(), &spec).unwrap();
        let best = pts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.fidelity.total_cmp(&b.1.fidelity))
            .unwrap()
            .0;
        assert!(best > 0 && best < pts.len() - 1);
        assert!(pts[..=best].windows(2).all(|w| w[1].fidelity > w[0].fidelity));
        assert!(pts[best..].windows(2).all(|w| w[1].fidelity < w[0].fidelity));
    }

    fn arb_params() -> impl Strategy<Value = SystemParams> {
        (
            1e-4f64..0.1,
            1e-4f64..0.1,
            0.01f64..1.0,
            0.001f64..0.5,
            0.001f64..0.5,
            0.1f64..1.0,
            0.1f64..1.0,
            0.0f64..=1.0,
        )
            .prop_map(
                |(mu_spdc, mu_a, eta_a, eta_i, eta_s, xi_bsm, xi_s, zeta)| SystemParams {
                    mu_spdc,
                    mu_a,
                    eta_a,
                    eta_i,
                    eta_s,
                    xi_bsm,
                    xi_s,
                    zeta,
                    ..SystemParams::operating_point()
                },
            )
    }

    proptest! {
        #[test]
        fn fidelity_bounded_by_indistinguishability(p in arb_params()) {
            let f = equatorial_fidelity(&case_probabilities(&p), p.zeta).unwrap();
            prop_assert!(f >= 0.5);
            prop_assert!(f <= (1.0 + p.zeta) / 2.0 + 1e-15);
        }

        #[test]
        fn counts_and_visibility_agree(ps in 0.0f64..1e6, pf in 0.0f64..1e6) {
            prop_assume!(ps + pf > 0.0);
            let a = fidelity_from_counts(ps, pf).unwrap();
            let b = fidelity_from_visibility((ps - pf) / (ps + pf)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn fidelity_decreases_in_mu_spdc(p in arb_params(), f in 1.01f64..3.0) {
            // dF/dmu_spdc has the sign of mu_A eta_A (1 - eta_i) - eta_i; the
            // multi-pair penalty only dominates while Alice's two-photon noise
            // stays below the idler arrival probability.
            prop_assume!(p.zeta > 0.0);
            prop_assume!(p.mu_a * p.eta_a * (1.0 - p.eta_i) < 0.9 * p.eta_i);
            let mut q = p;
            q.mu_spdc *= f;
            let a = equatorial_fidelity(&case_probabilities(&p), p.zeta).unwrap();
            let b = equatorial_fidelity(&case_probabilities(&q), q.zeta).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn rate_increases_with_efficiencies(p in arb_params(), which in 0usize..5, f in 1.01f64..1.5) {
            let mut q = p;
            match which {
                0 => q.eta_a = (q.eta_a * f).min(1.0),
                1 => q.eta_i = (q.eta_i * f).min(1.0),
                2 => q.eta_s = (q.eta_s * f).min(1.0),
                3 => q.xi_bsm = (q.xi_bsm * f).min(1.0),
                _ => q.xi_s = (q.xi_s * f).min(1.0),
            }
            prop_assume!(q != p);
            let a = teleport_rate(&case_probabilities(&p), p.rep_rate, 0.0).unwrap();
            let b = teleport_rate(&case_probabilities(&q), q.rep_rate, 0.0).unwrap();
            // Raising eta_a lowers the single-photon attenuation factor but the
            // linear terms dominate for mu_A eta_A < 1.
            prop_assert!(b > a);
        }

        #[test]
        fn signal_efficiencies_enter_as_product(p in arb_params(), c in 0.2f64..5.0) {
            let mut q = p;
            q.eta_s = p.eta_s * c;
            q.xi_s = p.xi_s / c;
            prop_assume!(q.eta_s <= 1.0 && q.xi_s <= 1.0);
            let (a, b) = (case_probabilities(&p), case_probabilities(&q));
            for (x, y) in [(a.p111, b.p111), (a.p022, b.p022), (a.p201, b.p201), (a.p112, b.p112)] {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs());
            }
        }

        #[test]
        fn joint_signal_scaling_moves_fidelity_by_at_most_half_eta_s_xi_s(p in arb_params(), c in 0.1f64..1.0) {
            // The two-signal factor 2x - x^2 is linear in x = eta_s xi_s only
            // to first order, so F is invariant up to O(x).
            let mut q = p;
            q.eta_s *= c;
            q.xi_s *= c;
            let a = equatorial_fidelity(&case_probabilities(&p), p.zeta).unwrap();
            let b = equatorial_fidelity(&case_probabilities(&q), q.zeta).unwrap();
            prop_assert!((a - b).abs() <= 0.5 * p.eta_s * p.xi_s + 1e-12, "{a} vs {b}");
        }
    }
}
