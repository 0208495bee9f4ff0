use teleportsim::decoy::single_photon_fidelity;
use teleportsim::model::{case_probabilities, equatorial_fidelity};
use teleportsim::sim::*;
use teleportsim::tomography::{tomography_pipeline, TomographyCounts};
use teleportsim::{StateLabel, SystemParams, TimeBinQubit};

/// A bright, low-loss link where events are plentiful and the closed form's
/// two-photon truncation is accurate.
fn weak_pump() -> SystemParams {
    SystemParams {
        mu_a: 0.01,
        mu_spdc: 0.001,
        eta_a: 1.0,
        eta_i: 0.1,
        eta_s: 1.0,
        xi_bsm: 1.0,
        xi_s: 1.0,
        zeta: 1.0,
        ..SystemParams::operating_point()
    }
}

/// Loss levels high enough to make higher-order terms visible.
fn bright() -> SystemParams {
    SystemParams {
        mu_spdc: 0.2,
        mu_a: 0.3,
        eta_a: 0.5,
        eta_i: 0.4,
        eta_s: 0.5,
        xi_bsm: 0.8,
        xi_s: 0.9,
        zeta: 0.9,
        ..SystemParams::operating_point()
    }
}

fn within(got: f64, want: f64, sigma: f64) -> bool {
    (got - want).abs() <= (3.0 * sigma).max(0.02 * want.abs())
}

#[test]
fn identical_seeds_give_identical_results() {
    let cfg = SimConfig::new(3_000_000_000, 99, StateLabel::Plus.qubit());
    let a = run(&weak_pump(), &cfg).unwrap();
    let b = run(&weak_pump(), &cfg).unwrap();
    assert_eq!(a, b);
    let c = run(&weak_pump(), &SimConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(a, c);
    let r1 = run_reference(&bright(), &SimConfig::new(200_000, 5, StateLabel::E.qubit())).unwrap();
    let r2 = run_reference(&bright(), &SimConfig::new(200_000, 5, StateLabel::E.qubit())).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn tallies_sum_to_accepted_events() {
    let mut cfg = SimConfig::new(2_000_000, 1, StateLabel::PlusI.qubit());
    cfg.dark_count_prob = 0.01;
    for r in [
        run(&bright(), &cfg).unwrap(),
        run_reference(&bright(), &cfg).unwrap(),
    ] {
        assert_eq!(r.tallies.total(), r.accepted());
        assert!(r.accepted() <= r.candidates);
    }
}

#[test]
fn weak_pumping_matches_closed_form() {
    let p = weak_pump();
    let cp = case_probabilities(&p);
    let f_model = equatorial_fidelity(&cp, p.zeta).unwrap();
    assert!(f_model > 0.97);
    for attribution in [SignalAttribution::PartnerOnly, SignalAttribution::AnySignal] {
        let mut cfg = SimConfig::new(20_000_000_000, 3, StateLabel::Plus.qubit());
        cfg.signal_attribution = attribution;
        let r = run(&p, &cfg).unwrap();
        let f = r.fidelity.unwrap();
        assert!(
            within(r.gain.value, cp.total(), r.gain.uncertainty),
            "{attribution:?} gain {:?} vs {}",
            r.gain,
            cp.total()
        );
        assert!(
            within(f.value, f_model, f.uncertainty),
            "{attribution:?} F {f:?} vs {f_model}"
        );
    }
}

#[test]
fn fast_sampler_agrees_with_reference() {
    for stats in [PairStatistics::Thermal, PairStatistics::Poissonian] {
        for dark in [0.0, 0.01] {
            let mut cfg = SimConfig::new(6_000_000, 21, StateLabel::Plus.qubit());
            cfg.pair_statistics = stats;
            cfg.dark_count_prob = dark;
            let fast = run(&bright(), &cfg).unwrap();
            let slow = run_reference(&bright(), &cfg).unwrap();
            let close = |a: u64, b: u64| {
                let (a, b) = (a as f64, b as f64);
                (a - b).abs() <= 4.5 * (a + b).max(1.0).sqrt()
            };
            let (tf, ts) = (fast.tallies, slow.tallies);
            let pairs = [
                (fast.threefold_counts_max, slow.threefold_counts_max),
                (fast.threefold_counts_min, slow.threefold_counts_min),
                (tf.p111, ts.p111),
                (tf.p112, ts.p112),
                (tf.p022, ts.p022),
                (tf.p201, ts.p201),
                (tf.higher, ts.higher),
                (tf.dark, ts.dark),
            ];
            for (a, b) in pairs {
                assert!(close(a, b), "{stats:?} dark {dark}: {fast:?} vs {slow:?}");
            }
        }
    }
}

#[test]
fn no_alice_light_gives_two_idler_events_only() {
    let p = SystemParams {
        mu_a: 0.0,
        mu_spdc: 0.02,
        ..bright()
    };
    let r = run(&p, &SimConfig::new(2_000_000_000, 8, StateLabel::Plus.qubit())).unwrap();
    let t = r.tallies;
    assert_eq!(t.p111 + t.p112 + t.p201, 0);
    // The rest are two-idler events where both partner signals arrived.
    assert_eq!(t.p022 + t.higher, r.accepted());
    assert!(t.p022 > 3 * t.higher, "{t:?}");
    let f = r.fidelity.unwrap();
    assert!((f.value - 0.5).abs() <= 4.0 * f.uncertainty, "{f:?}");
}

#[test]
fn dark_counts_raise_gain_and_lower_fidelity() {
    let mut last: Option<SimResult> = None;
    for dark in [0.0, 1e-4, 1e-3, 1e-2] {
        let mut cfg = SimConfig::new(5_000_000_000, 4, StateLabel::Plus.qubit());
        cfg.dark_count_prob = dark;
        let r = run(&weak_pump(), &cfg).unwrap();
        if let Some(prev) = last {
            let (f0, f1) = (prev.fidelity.unwrap(), r.fidelity.unwrap());
            assert!(r.gain.value > prev.gain.value, "gain at {dark}");
            assert!(f1.value < f0.value, "fidelity at {dark}: {f1:?} vs {f0:?}");
        }
        last = Some(r);
    }
}

#[test]
fn pole_states_ignore_indistinguishability() {
    for zeta in [0.0, 1.0] {
        let p = SystemParams { zeta, ..weak_pump() };
        let r = run(&p, &SimConfig::new(5_000_000_000, 12, StateLabel::E.qubit())).unwrap();
        let f = r.fidelity.unwrap();
        assert!(f.value > 0.95, "zeta {zeta}: {f:?}");
    }
    // Equatorial inputs collapse to a coin without interference.
    let p = SystemParams {
        zeta: 0.0,
        ..weak_pump()
    };
    let r = run(&p, &SimConfig::new(5_000_000_000, 13, StateLabel::Plus.qubit())).unwrap();
    let f = r.fidelity.unwrap();
    assert!((f.value - 0.5).abs() <= 4.0 * f.uncertainty, "{f:?}");
}

#[test]
fn single_photon_bound_beats_signal_fidelity() {
    let p = SystemParams {
        eta_i: 0.2,
        eta_s: 0.3,
        ..SystemParams::operating_point()
    };
    let intensities = DecoyIntensities {
        signal: 0.088,
        decoy: 0.029,
        vacuum: 0.0,
    };
    let states = [StateLabel::E, StateLabel::L, StateLabel::Plus, StateLabel::PlusI];
    let base = SimConfig::new(40_000_000_000, 2024, StateLabel::E.qubit());
    let runs = decoy_experiment(&p, &intensities, &states, &base).unwrap();
    for run in &runs {
        let b = single_photon_fidelity(&run.dataset).unwrap();
        let f_signal = 1.0 - run.dataset.error_signal;
        assert!(
            b.f1_lower > f_signal,
            "{}: F_L {} vs F_signal {f_signal}",
            run.state,
            b.f1_lower
        );
    }
}

#[test]
fn decoy_bound_approaches_one_in_ideal_limit() {
    let p = SystemParams {
        mu_spdc: 1e-4,
        eta_i: 0.5,
        eta_s: 0.5,
        zeta: 1.0,
        ..SystemParams::operating_point()
    };
    let intensities = DecoyIntensities {
        signal: 0.1,
        decoy: 0.02,
        vacuum: 0.0,
    };
    let base = SimConfig::new(200_000_000_000, 7, StateLabel::E.qubit());
    let runs = decoy_experiment(&p, &intensities, &[StateLabel::Plus], &base).unwrap();
    let b = single_photon_fidelity(&runs[0].dataset).unwrap();
    assert!(b.f1_lower > 0.97, "{b:?}");
    // Vacuum runs see only two-idler events.
    let vac = runs[0].runs[2].tallies;
    assert_eq!(vac.p111 + vac.p112 + vac.p201, 0);
}

#[test]
fn tomography_of_simulated_teleportation() {
    let p = SystemParams {
        zeta: 1.0,
        ..weak_pump()
    };
    let input = StateLabel::Plus.qubit();
    let mut counts = TomographyCounts::default();
    for (k, label) in StateLabel::ALL.into_iter().enumerate() {
        let mut cfg = SimConfig::new(4_000_000_000, 50 + k as u64, input);
        cfg.analysis_state = Some(label.qubit());
        let r = run(&p, &cfg).unwrap();
        counts.set(label, r.threefold_counts_max as f64);
    }
    let t = tomography_pipeline(&counts, &input).unwrap();
    assert!(t.expected_state.approx_eq(&StateLabel::Minus.qubit(), 1e-12));
    let f_model = equatorial_fidelity(&case_probabilities(&p), 1.0).unwrap();
    assert!((t.fidelity - f_model).abs() < 0.03, "{} vs {f_model}", t.fidelity);
}

#[test]
fn analysis_phase_and_state_are_exclusive() {
    let mut cfg = SimConfig::new(10, 0, TimeBinQubit::EARLY);
    cfg.umzi2_phase = Some(0.3);
    cfg.analysis_state = Some(TimeBinQubit::LATE);
    assert!(run(&weak_pump(), &cfg).unwrap_err().is_input_error());
}
