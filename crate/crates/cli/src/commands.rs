use std::fs::File;
use std::path::{Path, PathBuf};

use teleportsim::decoy::single_photon_fidelity;
use teleportsim::interference::{
    fit_hom_dip, fringe_visibility, hom_visibility, indistinguishability, DipScan,
};
use teleportsim::io::{
    read_decoy_table, read_dip_scan, read_fringe_scan, read_power_scan, read_tomography, DecoyRow,
    DecoyTableEntry,
};
use teleportsim::model::{
    average_fidelity, case_probabilities_with, equatorial_fidelity, fidelity_from_counts, sweep,
    teleport_rate, AverageMode,
};
use teleportsim::pairs::{car, extract_pair_number, fit_power_scan};
use teleportsim::sim::{decoy_experiment, run, run_hom_scan, run_with_drift};
use teleportsim::stats::{
    poisson_bootstrap_slice, sigma_violation, BootstrapConfig, CLASSICAL_FIDELITY_BOUND,
};
use teleportsim::tomography::{tomography_pipeline, TomographyCounts};
use teleportsim::{Estimate, FidelitySummary, StateLabel};

use crate::config::{require, Loaded};
use crate::report::{num, Curve, Report};
use crate::CliError;

/// Everything a subcommand produces before it is written out.
pub struct Output {
    pub report: Report,
    pub curves: Vec<Curve>,
    /// Data files read, for the manifest.
    pub inputs: Vec<PathBuf>,
}

impl Output {
    fn new(report: Report) -> Self {
        Output {
            report,
            curves: Vec::new(),
            inputs: Vec::new(),
        }
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))
}

/// Input file from `[io]`, resolved and recorded.
fn input(l: &Loaded, out: &mut Output, path: &Option<PathBuf>) -> Result<Option<File>, CliError> {
    let Some(p) = path else { return Ok(None) };
    let resolved = l.resolve(p);
    let f = open(&resolved)?;
    out.inputs.push(resolved);
    Ok(Some(f))
}

fn bootstrap_std<F>(counts: &[u64], estimator: F, cfg: &BootstrapConfig) -> Result<f64, CliError>
where
    F: Fn(&[u64]) -> teleportsim::Result<f64> + Sync,
{
    Ok(poisson_bootstrap_slice(counts, estimator, cfg)?.std)
}

pub fn model(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    let p = &c.system;
    let cp = case_probabilities_with(p, c.model.p022_form);
    let mut r = Report::new("model");
    r.exact("P111", cp.p111, "per pulse");
    r.exact("P022", cp.p022, "per pulse");
    r.exact("P201", cp.p201, "per pulse");
    r.exact("P112", cp.p112, "per pulse");
    r.exact("P_total", cp.total(), "per pulse");
    r.exact("fidelity_equator", equatorial_fidelity(&cp, p.zeta)?, "");
    r.exact("rate_raw", teleport_rate(&cp, p.rep_rate, 0.0)?, "Hz");
    r.exact("correction", c.model.correction_db, "dB");
    r.exact(
        "rate_corrected",
        teleport_rate(&cp, p.rep_rate, c.model.correction_db)?,
        "Hz",
    );
    Ok(Output::new(r))
}

pub fn simulate(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    let sim = require(&c.sim, "sim")?;
    let p = &c.system;
    let res = run(p, sim)?;
    let n = res.n_pulses as f64;
    let counts = [res.threefold_counts_max, res.threefold_counts_min];
    let gain_err = bootstrap_std(&counts, |s| Ok((s[0] + s[1]) as f64 / n), &c.bootstrap)?;
    let mut r = Report::new("simulate");
    r.exact("pulses", n, "");
    r.exact("counts_max", counts[0] as f64, "");
    r.exact("counts_min", counts[1] as f64, "");
    r.with_err("gain", res.gain.value, gain_err, "per pulse");
    r.with_err(
        "rate_raw",
        res.gain.value * p.rep_rate,
        gain_err * p.rep_rate,
        "Hz",
    );
    if res.accepted() > 0 {
        let f = fidelity_from_counts(counts[0] as f64, counts[1] as f64)?;
        let f_err = bootstrap_std(
            &counts,
            |s| fidelity_from_counts(s[0] as f64, s[1] as f64),
            &c.bootstrap,
        )?;
        r.with_err("fidelity", f, f_err, "");
    }
    let cp = case_probabilities_with(p, c.model.p022_form);
    r.exact("model_gain", cp.total(), "per pulse");
    if sim.input_state.is_equatorial() {
        r.exact("model_fidelity_equator", equatorial_fidelity(&cp, p.zeta)?, "");
    }
    let mut tallies = Curve::new("tallies.csv", &["pedigree", "events"]);
    let t = res.tallies;
    for (name, v) in [
        ("111", t.p111),
        ("112", t.p112),
        ("022", t.p022),
        ("201", t.p201),
        ("higher", t.higher),
        ("dark", t.dark),
    ] {
        tallies.push(vec![name.into(), v.to_string()]);
    }
    let mut out = Output::new(r);
    out.curves.push(tallies);
    Ok(out)
}

/// Table entry built from simulated runs, with integration time chosen so
/// that the row counts equal the simulated events.
fn simulated_decoy_entries(l: &Loaded) -> Result<Vec<DecoyTableEntry>, CliError> {
    let c = &l.config;
    let sim = require(&c.sim, "sim")?;
    let intensities = require(&c.decoy, "decoy")?;
    let states = [StateLabel::E, StateLabel::L, StateLabel::Plus, StateLabel::PlusI];
    let runs = decoy_experiment(&c.system, intensities, &states, sim)?;
    let t_sec = sim.n_pulses as f64 / c.system.rep_rate;
    let mu = [intensities.signal, intensities.decoy, intensities.vacuum];
    Ok(runs
        .iter()
        .map(|run| {
            let row = |k: usize| {
                let res = &run.runs[k];
                DecoyRow {
                    mu: mu[k],
                    gain_hz: res.accepted() as f64 / t_sec,
                    fidelity: res.fidelity.map_or(0.0, |f| f.value),
                    t_sec,
                }
            };
            DecoyTableEntry {
                state: run.state.to_string(),
                signal: row(0),
                decoy: row(1),
                vacuum: row(2),
            }
        })
        .collect())
}

pub fn decoy(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    let mut out = Output::new(Report::new("decoy"));
    let entries = match input(l, &mut out, &c.io.decoy_table)? {
        Some(f) => read_decoy_table(f)?,
        None => simulated_decoy_entries(l)?,
    };
    let mut curve = Curve::new(
        "decoy.csv",
        &[
            "state",
            "mu_signal",
            "mu_decoy",
            "y1_lower_hz",
            "e1_upper",
            "f1_lower",
            "f1_lower_err",
            "sp_gain_hz",
            "sp_gain_err",
        ],
    );
    let mut summary = FidelitySummary::default();
    let r = &mut out.report;
    for e in &entries {
        let b = single_photon_fidelity(&e.to_dataset())?;
        let counts = e.counts();
        let f_err = bootstrap_std(
            &counts,
            |s| Ok(single_photon_fidelity(&e.dataset_from_counts(s))?.f1_lower),
            &c.bootstrap,
        )?;
        let g_err = bootstrap_std(
            &counts,
            |s| Ok(single_photon_fidelity(&e.dataset_from_counts(s))?.sp_gain),
            &c.bootstrap,
        )?;
        r.with_err(format!("F_L[{}]", e.state), b.f1_lower, f_err, "");
        r.with_err(format!("sp_gain[{}]", e.state), b.sp_gain, g_err, "Hz");
        r.exact(format!("Y_L[{}]", e.state), b.y1_lower, "Hz");
        r.exact(format!("E_U[{}]", e.state), b.e1_upper, "");
        curve.push(vec![
            e.state.clone(),
            num(e.signal.mu),
            num(e.decoy.mu),
            num(b.y1_lower),
            num(b.e1_upper),
            num(b.f1_lower),
            num(f_err),
            num(b.sp_gain),
            num(g_err),
        ]);
        let est = Some(Estimate::new(b.f1_lower, f_err));
        match e.state.parse::<StateLabel>() {
            Ok(StateLabel::E) => summary.f_e = est,
            Ok(StateLabel::L) => summary.f_l = est,
            Ok(StateLabel::Plus) => summary.f_plus = est,
            Ok(StateLabel::PlusI) => summary.f_plus_i = est,
            _ => {}
        }
    }
    // The four-state average needs e, l, + and +i.
    if let Ok(avg) = average_fidelity(&summary, AverageMode::QstFour) {
        r.with_err("F_L[average]", avg.value, avg.uncertainty, "");
        if avg.uncertainty > 0.0 {
            let s = sigma_violation(avg.value, avg.uncertainty, CLASSICAL_FIDELITY_BOUND)?;
            r.exact("sigma_above_classical", s, "std");
        }
    }
    out.curves.push(curve);
    Ok(out)
}

pub fn hom(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    let p = &c.system;
    let mut out = Output::new(Report::new("hom"));
    let scan: DipScan = match input(l, &mut out, &c.io.hom_scan)? {
        Some(f) => read_dip_scan(f)?,
        None => {
            let h = require(&c.hom, "hom")?;
            run_hom_scan(p, &h.delays()?, &h.scan)?
        }
    };
    let fit = fit_hom_dip(&scan)?;
    let counts: Vec<u64> = scan.points.iter().map(|pt| pt.coincidences).collect();
    let resampled = |s: &[u64]| {
        let mut sc = scan.clone();
        for (pt, &n) in sc.points.iter_mut().zip(s) {
            pt.coincidences = n;
        }
        fit_hom_dip(&sc)
    };
    let v_err = bootstrap_std(&counts, |s| Ok(resampled(s)?.visibility), &c.bootstrap)?;
    let w_err = bootstrap_std(&counts, |s| Ok(resampled(s)?.width_ps), &c.bootstrap)?;

    let (n1, n2, g1, g2) = match &c.hom {
        Some(h) => {
            let n1 = h.scan.mean_n1.unwrap_or(p.mu_a * p.eta_a);
            (n1, h.scan.mean_n2.unwrap_or(n1), h.scan.g2_1, h.scan.g2_2)
        }
        None => (p.mu_a * p.eta_a, p.mu_a * p.eta_a, 2.0, 1.0),
    };
    let bound = hom_visibility(n1, n2, g1, g2)?;
    let r = &mut out.report;
    r.with_err("dip_visibility", fit.visibility, v_err, "");
    r.with_err("dip_width", fit.width_ps, w_err, "ps");
    r.with_err("dip_center", fit.center_ps, fit.fit.std_errors[2], "ps");
    r.exact("visibility_bound", bound, "");
    r.with_err(
        "indistinguishability",
        indistinguishability(fit.visibility.max(0.0), bound)?,
        v_err / bound,
        "",
    );

    let mut dip = Curve::new("hom_dip.csv", &["delay_ps", "rate", "fit"]);
    for pt in &scan.points {
        dip.push_nums(&[
            pt.delay,
            pt.coincidences as f64 / pt.integration,
            fit.fit.eval(pt.delay),
        ]);
    }
    out.curves.push(dip);

    if let Some(f) = input(l, &mut out, &c.io.fringe)? {
        let pts = read_fringe_scan(f)?;
        let rates: Vec<(f64, f64)> = pts.iter().map(|q| (q.phase_rad, q.rate())).collect();
        let ff = fringe_visibility(&rates)?;
        let counts: Vec<u64> = pts.iter().map(|q| q.counts).collect();
        let err = bootstrap_std(
            &counts,
            |s| {
                let rs: Vec<(f64, f64)> = pts
                    .iter()
                    .zip(s)
                    .map(|(q, &n)| (q.phase_rad, n as f64 / q.t_sec))
                    .collect();
                Ok(fringe_visibility(&rs)?.visibility)
            },
            &c.bootstrap,
        )?;
        let r = &mut out.report;
        r.with_err("fringe_visibility", ff.visibility, err, "");
        r.with_err(
            "fringe_phase_offset",
            ff.phase_offset,
            ff.fit.std_errors[2],
            "rad",
        );
        let mut curve = Curve::new("fringe.csv", &["phase_rad", "rate", "fit"]);
        for (phi, rate) in &rates {
            curve.push_nums(&[*phi, *rate, ff.fit.eval(*phi)]);
        }
        out.curves.push(curve);
    }
    Ok(out)
}

pub fn drift(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    let d = require(&c.drift, "drift")?;
    let series = run_with_drift(&c.system, &d.loops, d.duration_s)?;
    let mut r = Report::new("drift");
    r.exact("intervals", series.samples.len() as f64, "");
    r.exact("drift_free_visibility", series.drift_free_visibility, "");
    r.exact("min_visibility_ratio", series.min_visibility_ratio(), "");
    r.exact("final_visibility_ratio", series.final_visibility_ratio(), "");
    r.exact(
        "fraction_within_2_steps",
        series.fraction_within(2.0 * d.loops.delay_resolution),
        "",
    );
    r.exact("transmission_rel_std", series.transmission_rel_std(), "");
    let mut curve = Curve::new(
        "drift.csv",
        &[
            "time_s",
            "offset0_ps",
            "offset1_ps",
            "delta_t_ps",
            "visibility_ratio",
            "hom_visibility",
            "pbs_transmission",
            "transmitted_counts",
        ],
    );
    for s in &series.samples {
        curve.push_nums(&[
            s.time,
            s.offset_ps[0],
            s.offset_ps[1],
            s.delta_t_ps,
            s.visibility_ratio,
            s.hom_visibility,
            s.pbs_transmission,
            s.transmitted_counts as f64,
        ]);
    }
    let mut out = Output::new(r);
    out.curves.push(curve);
    Ok(out)
}

pub fn sweep_cmd(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    if c.sweep.is_empty() {
        return Err(CliError::input("config has no [[sweep]] tables"));
    }
    let mut out = Output::new(Report::new("sweep"));
    let mut used: Vec<String> = Vec::new();
    for spec in &c.sweep {
        let mut name = serde_json::to_value(spec.variable)?
            .as_str()
            .unwrap_or("sweep")
            .to_string();
        if used.contains(&name) {
            name = format!("{name}_{}", used.len());
        }
        used.push(name.clone());
        let pts = sweep(&c.system, spec)?;
        let mut curve = Curve::new(
            format!("sweep_{name}.csv"),
            &[name.as_str(), "fidelity", "rate_hz", "rate_corrected_hz"],
        );
        let scale = teleportsim::db_to_linear(c.model.correction_db)?;
        for pt in &pts {
            curve.push_nums(&[pt.x, pt.fidelity, pt.rate_hz, pt.rate_hz / scale]);
        }
        let best = pts
            .iter()
            .max_by(|a, b| a.fidelity.total_cmp(&b.fidelity))
            .expect("validated non-empty");
        let r = &mut out.report;
        r.exact(format!("{name}.points"), pts.len() as f64, "");
        r.exact(format!("{name}.fidelity_max"), best.fidelity, "");
        r.exact(format!("{name}.argmax"), best.x, "");
        out.curves.push(curve);
    }
    Ok(out)
}

pub fn tomography(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    let t = require(&c.tomography, "tomography")?;
    let mut out = Output::new(Report::new("tomography"));
    let counts = match input(l, &mut out, &c.io.tomography)? {
        Some(f) => read_tomography(f)?,
        None => return Err(CliError::input("[io] tomography is not set")),
    };
    let res = tomography_pipeline(&counts, &t.input_state)?;
    let raw: Vec<u64> = StateLabel::ALL
        .iter()
        .map(|&s| counts.get(s).round() as u64)
        .collect();
    let f_err = bootstrap_std(
        &raw,
        |s| {
            let mut tc = TomographyCounts::default();
            for (&label, &n) in StateLabel::ALL.iter().zip(s) {
                tc.set(label, n as f64);
            }
            Ok(tomography_pipeline(&tc, &t.input_state)?.fidelity)
        },
        &c.bootstrap,
    )?;
    let r = &mut out.report;
    r.with_err("fidelity", res.fidelity, f_err, "");
    let s = res.stokes;
    r.exact("S1", s.s1 / s.s0, "");
    r.exact("S2", s.s2 / s.s0, "");
    r.exact("S3", s.s3 / s.s0, "");
    r.exact("bloch_length", res.rho.bloch_length(), "");
    r.exact("repaired", if res.repaired { 1.0 } else { 0.0 }, "");
    let m = res.rho.entries();
    for (i, row) in m.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            r.exact(format!("rho{i}{j}.re"), z.re, "");
            r.exact(format!("rho{i}{j}.im"), z.im, "");
        }
    }
    let mut curve = Curve::new(
        "tomography.csv",
        &["basis", "counts", "reconstructed_probability"],
    );
    for label in StateLabel::ALL {
        curve.push(vec![
            label.to_string(),
            num(counts.get(label)),
            num(res.rho.expectation(&label.qubit())),
        ]);
    }
    out.curves.push(curve);
    Ok(out)
}

pub fn pairs(l: &Loaded) -> Result<Output, CliError> {
    let c = &l.config;
    let ps = require(&c.pairs, "pairs")?;
    let mut out = Output::new(Report::new("pairs"));
    let scan = match input(l, &mut out, &c.io.power_scan)? {
        Some(f) => read_power_scan(f)?,
        None => return Err(CliError::input("[io] power_scan is not set")),
    };
    let fit = fit_power_scan(&scan, ps.weighting)?;
    let r = &mut out.report;
    for (name, ch) in [("signal", &fit.signal), ("idler", &fit.idler)] {
        r.with_err(
            format!("{name}.quadratic"),
            ch.quadratic,
            ch.std_errors[0],
            "1/(s mW^2)",
        );
        r.with_err(format!("{name}.linear"), ch.linear, ch.std_errors[1], "1/(s mW)");
        r.with_err(format!("{name}.constant"), ch.constant, ch.std_errors[2], "1/s");
    }
    let mut curve = Curve::new(
        "pairs.csv",
        &[
            "power_mw",
            "car",
            "car_err",
            "pair_rate",
            "pair_rate_err",
            "mu_spdc",
            "mu_spdc_err",
        ],
    );
    let rep = c.system.rep_rate;
    for pt in &scan {
        let counts = [pt.coincidences, pt.accidentals];
        let t = pt.integration_time;
        let car_at = |s: &[u64]| car(s[0] as f64, s[1] as f64);
        let pn_at = |s: &[u64]| extract_pair_number(s[0] as f64, s[1] as f64, ps.t_s, ps.t_i, t, rep);
        let car_v = car_at(&counts).unwrap_or(f64::NAN);
        let pn = pn_at(&counts)?;
        // CAR is unbounded without accidentals; the cell stays blank.
        let car_err = if counts[1] > 0 {
            bootstrap_std(&counts, car_at, &c.bootstrap)?
        } else {
            f64::NAN
        };
        let rate_err = bootstrap_std(&counts, |s| Ok(pn_at(s)?.rate), &c.bootstrap)?;
        curve.push_nums(&[
            pt.pump_power,
            car_v,
            car_err,
            pn.rate,
            rate_err,
            pn.mu_spdc,
            rate_err / rep,
        ]);
    }
    out.curves.push(curve);
    Ok(out)
}
