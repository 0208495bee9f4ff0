use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

fn shipped() -> PathBuf {
    fixtures().join("teleport.toml")
}

fn teleportsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleportsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    teleportsim(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `quantity -> (value, uncertainty)` from a CSV report.
fn read_report(path: &Path) -> BTreeMap<String, (f64, Option<f64>)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let u = (!r[2].is_empty()).then(|| r[2].parse().unwrap());
            (r[0].to_string(), (r[1].parse().unwrap(), u))
        })
        .collect()
}

/// Shipped config with its `[sim]` pulse count cut down and `[io]` pointing
/// back at the fixtures.
fn small_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(shipped())
        .unwrap()
        .replace("n_pulses = 10_000_000_000_000", "n_pulses = 200_000_000_000")
        .replace("[io]", &format!("[io]\n# from {}", fixtures().display()));
    let text = text
        .lines()
        .map(|l| match l.split_once(" = \"") {
            Some((k, v)) if v.ends_with(".csv\"") => {
                format!("{k} = \"{}\"", fixtures().join(v.trim_end_matches('"')).display())
            }
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn model_reports_fidelity_and_corrected_rate() {
    let tmp = TempDir::new().unwrap();
    let o = run_in("model", &shipped(), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_report(&tmp.path().join("report.csv"));
    assert!((r["fidelity_equator"].0 - 0.829).abs() < 5e-4);
    assert!((r["rate_corrected"].0 - 7.2).abs() < 0.1);
    assert!((r["rate_raw"].0 - 1.70).abs() < 0.01);
    assert!(tmp.path().join("manifest.json").exists());
}

#[test]
fn csv_and_json_carry_identical_numbers() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("csv"), tmp.path().join("json"));
    assert!(run_in("model", &shipped(), &a, &["--format", "csv"])
        .status
        .success());
    assert!(run_in("model", &shipped(), &b, &["--format", "json"])
        .status
        .success());
    let csv = read_report(&a.join("report.csv"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(b.join("report.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), csv.len());
    for row in rows {
        let q = row["quantity"].as_str().unwrap();
        assert_eq!(row["value"].as_f64().unwrap(), csv[q].0, "{q}");
    }
}

#[test]
fn missing_field_is_named_with_exit_two() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(shipped())
        .unwrap()
        .replace("mu_a = 0.029\n", "");
    let cfg = tmp.path().join("broken.toml");
    fs::write(&cfg, text).unwrap();
    let o = run_in("model", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mu_a"), "{}", stderr(&o));
}

#[test]
fn unknown_key_rejected() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(shipped())
        .unwrap()
        .replace("[model]", "[model]\nbogus = 1");
    let cfg = tmp.path().join("bogus.toml");
    fs::write(&cfg, text).unwrap();
    let o = run_in("model", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn decoy_table_reproduces_single_photon_fidelities() {
    let tmp = TempDir::new().unwrap();
    let o = run_in("decoy", &shipped(), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_report(&tmp.path().join("report.csv"));
    for (state, want) in [("e", 0.978), ("l", 0.966), ("+", 0.897), ("+i", 0.849)] {
        let (v, u) = r[&format!("F_L[{state}]")];
        assert!((v - want).abs() < 0.005, "{state}: {v}");
        assert!(u.unwrap() > 0.0);
    }
    assert!((r["F_L[average]"].0 - 0.906).abs() < 0.003);
}

fn decoy_config(dir: &Path, table: &str) -> PathBuf {
    fs::write(dir.join("table.csv"), table).unwrap();
    let cfg = dir.join("decoy.toml");
    let system = fs::read_to_string(shipped()).unwrap();
    let system = &system[system.find("[system]").unwrap()..system.find("[model]").unwrap()];
    fs::write(&cfg, format!("{system}\n[io]\ndecoy_table = \"table.csv\"\n")).unwrap();
    cfg
}

#[test]
fn decoy_input_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    // Signal and decoy at the same intensity: mu_s <= mu_d.
    let equal = "state,mu,gain_hz,fidelity\ne,0.029,9.9,0.9\ne,0.029,3.8,0.9\ne,0,0.7,0.5\n";
    let o = run_in(
        "decoy",
        &decoy_config(tmp.path(), equal),
        &tmp.path().join("o1"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run_in(
        "decoy",
        &decoy_config(tmp.path(), ""),
        &tmp.path().join("o2"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn nonpositive_yield_bound_exits_three() {
    let tmp = TempDir::new().unwrap();
    let table = "state,mu,gain_hz,fidelity\ne,0.088,10,0.9\ne,0.029,0.1,0.9\ne,0,0.05,0.5\n";
    let o = run_in(
        "decoy",
        &decoy_config(tmp.path(), table),
        &tmp.path().join("o"),
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn mu_a_sweep_has_interior_maximum() {
    let tmp = TempDir::new().unwrap();
    assert!(run_in("sweep", &shipped(), tmp.path(), &[]).status.success());
    let mut rdr = csv::Reader::from_path(tmp.path().join("sweep_mu_a.csv")).unwrap();
    let h = rdr.headers().unwrap().clone();
    assert_eq!((&h[0], &h[1]), ("mu_a", "fidelity"));
    let f: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    let peak = (0..f.len()).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
    assert!(peak > 0 && peak < f.len() - 1);
    assert!(f[..=peak].windows(2).all(|w| w[1] > w[0]));
    assert!(f[peak..].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    assert!(run_in("simulate", &cfg, &dirs[0], &[]).status.success());
    assert!(run_in("simulate", &cfg, &dirs[1], &[]).status.success());
    assert!(run_in("simulate", &cfg, &dirs[2], &["--seed", "77"])
        .status
        .success());
    for f in ["report.csv", "tallies.csv"] {
        assert_eq!(
            fs::read(dirs[0].join(f)).unwrap(),
            fs::read(dirs[1].join(f)).unwrap()
        );
    }
    assert_ne!(
        fs::read(dirs[0].join("tallies.csv")).unwrap(),
        fs::read(dirs[2].join("tallies.csv")).unwrap()
    );
    let r = read_report(&dirs[0].join("report.csv"));
    assert!(r["fidelity"].1.unwrap() > 0.0);
    assert!(r["gain"].1.unwrap() > 0.0);
}

#[test]
fn tomography_of_ideal_teleportation_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let o = run_in("tomography", &shipped(), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_report(&tmp.path().join("report.csv"));
    assert!((r["fidelity"].0 - 1.0).abs() < 1e-12);
    assert!((r["S1"].0 + 1.0).abs() < 1e-12);
}

#[test]
fn hom_pairs_and_drift_write_curves() {
    let tmp = TempDir::new().unwrap();
    for (cmd, curve) in [
        ("hom", "hom_dip.csv"),
        ("pairs", "pairs.csv"),
        ("drift", "drift.csv"),
    ] {
        let out = tmp.path().join(cmd);
        let o = run_in(cmd, &shipped(), &out, &[]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        let text = fs::read_to_string(out.join(curve)).unwrap();
        assert!(text.lines().count() > 5, "{cmd}");
    }
    let r = read_report(&tmp.path().join("hom/report.csv"));
    let (v, u) = r["dip_visibility"];
    assert!((v - 0.353).abs() < 3.0 * u.unwrap(), "{v}");
    let r = read_report(&tmp.path().join("drift/report.csv"));
    assert!(r["min_visibility_ratio"].0 >= 0.95);
}

#[test]
fn replay_reproduces_outputs_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    assert!(
        run_in("simulate", &cfg, &out, &["--seed", "9", "--format", "json"])
            .status
            .success()
    );
    assert!(run_in("hom", &cfg, &tmp.path().join("hom"), &[]).status.success());
    for dir in [out.clone(), tmp.path().join("hom")] {
        let manifest = dir.join("manifest.json");
        let o = teleportsim(&["replay", manifest.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        for name in ["report.json", "report.csv", "tallies.csv", "hom_dip.csv"] {
            if dir.join(name).exists() {
                assert_eq!(
                    fs::read(dir.join(name)).unwrap(),
                    fs::read(dir.join("replay").join(name)).unwrap()
                );
            }
        }
    }

    // A tampered manifest no longer matches.
    let manifest = out.join("manifest.json");
    let mut m: serde_json::Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    m["outputs"]["tallies.csv"] = serde_json::Value::String("0".repeat(64));
    fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let o = teleportsim(&["replay", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_section_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = decoy_config(tmp.path(), "state,mu,gain_hz,fidelity\n");
    let o = run_in("simulate", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[sim]"));
}
