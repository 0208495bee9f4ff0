//! Delimited-text readers for measurement tables. Every reader accepts a
//! header row, `#` comment lines and surrounding whitespace, and reports
//! problems with the 1-based line number of the file.

use std::collections::BTreeMap;
use std::io::Read;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::decoy::DecoyDataset;
use crate::domain::StateLabel;
use crate::error::{Error, Result};
use crate::interference::{DipPoint, DipScan};
use crate::pairs::PowerScanPoint;
use crate::tomography::TomographyCounts;

/// Integration time assumed for decoy rows without a `t_sec` column.
pub const DEFAULT_DECOY_INTEGRATION: f64 = 200.0;

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Deserializes every data row, pairing it with its line number.
pub fn read_rows<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_error(1, csv_message(&e)))?
        .clone();
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line() as usize);
                let row = record
                    .deserialize::<T>(Some(&headers))
                    .map_err(|e| parse_error(line, csv_message(&e)))?;
                rows.push((line, row));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                return Err(parse_error(line, csv_message(&e)));
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_error(1, "no data rows"));
    }
    Ok(rows)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("column {}: {}", f + 1, err.kind()),
            None => err.kind().to_string(),
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    }
}

pub fn read_power_scan<R: Read>(reader: R) -> Result<Vec<PowerScanPoint>> {
    let rows = read_rows::<PowerScanPoint, _>(reader)?;
    for (line, p) in &rows {
        if !(p.pump_power >= 0.0) || !p.pump_power.is_finite() {
            return Err(parse_error(*line, "power_mw must be finite and >= 0"));
        }
        if !(p.integration_time > 0.0) {
            return Err(parse_error(*line, "t_sec must be > 0"));
        }
    }
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}

/// Reads a dip scan; rows may come in any order and are sorted by delay.
pub fn read_dip_scan<R: Read>(reader: R) -> Result<DipScan> {
    let rows = read_rows::<DipPoint, _>(reader)?;
    for (line, p) in &rows {
        if !p.delay.is_finite() {
            return Err(parse_error(*line, "delay_ps must be finite"));
        }
        if !(p.integration > 0.0) {
            return Err(parse_error(*line, "t_sec must be > 0"));
        }
    }
    let mut points: Vec<DipPoint> = rows.into_iter().map(|(_, p)| p).collect();
    points.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    DipScan::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub phase_rad: f64,
    pub counts: u64,
    pub t_sec: f64,
}

impl FringePoint {
    pub fn rate(&self) -> f64 {
        self.counts as f64 / self.t_sec
    }
}

pub fn read_fringe_scan<R: Read>(reader: R) -> Result<Vec<FringePoint>> {
    let rows = read_rows::<FringePoint, _>(reader)?;
    for (line, p) in &rows {
        if !p.phase_rad.is_finite() {
            return Err(parse_error(*line, "phase_rad must be finite"));
        }
        if !(p.t_sec > 0.0) {
            return Err(parse_error(*line, "t_sec must be > 0"));
        }
    }
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct TomographyRow {
    basis: String,
    counts: u64,
    t_sec: f64,
}

/// Tomography counts per projection. Repeated bases are pooled. When
/// integration times differ, counts are rescaled to the mean integration
/// time so that the result is proportional to rates.
pub fn read_tomography<R: Read>(reader: R) -> Result<TomographyCounts> {
    let rows = read_rows::<TomographyRow, _>(reader)?;
    let mut pooled: BTreeMap<StateLabel, (f64, f64)> = BTreeMap::new();
    for (line, row) in &rows {
        let label: StateLabel = row
            .basis
            .parse()
            .map_err(|_| parse_error(*line, format!("unknown basis '{}'", row.basis)))?;
        if !(row.t_sec > 0.0) {
            return Err(parse_error(*line, "t_sec must be > 0"));
        }
        let slot = pooled.entry(label).or_default();
        slot.0 += row.counts as f64;
        slot.1 += row.t_sec;
    }
    let times: Vec<f64> = pooled.values().map(|v| v.1).collect();
    let uniform = times.windows(2).all(|w| w[0] == w[1]);
    let mean_t = times.iter().sum::<f64>() / times.len() as f64;
    let mut counts = TomographyCounts::default();
    for (label, (n, t)) in pooled {
        counts.set(label, if uniform { n } else { n * mean_t / t });
    }
    counts.validate()?;
    Ok(counts)
}

/// One line of a decoy gain table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyRow {
    pub mu: f64,
    pub gain_hz: f64,
    pub fidelity: f64,
    pub t_sec: f64,
}

impl DecoyRow {
    /// Expected `(correct, wrong)` counts over the integration time.
    pub fn counts(&self) -> (u64, u64) {
        let n = self.gain_hz * self.t_sec;
        (
            (n * self.fidelity).round() as u64,
            (n * (1.0 - self.fidelity)).round() as u64,
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawDecoyRow {
    state: String,
    mu: f64,
    gain_hz: f64,
    fidelity: f64,
    #[serde(default)]
    t_sec: Option<f64>,
}

/// Signal, decoy and vacuum rows of one input state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyTableEntry {
    pub state: String,
    pub signal: DecoyRow,
    pub decoy: DecoyRow,
    pub vacuum: DecoyRow,
}

impl DecoyTableEntry {
    pub fn to_dataset(&self) -> DecoyDataset {
        DecoyDataset {
            state_label: self.state.clone(),
            mu_signal: self.signal.mu,
            mu_decoy: self.decoy.mu,
            mu_vacuum: self.vacuum.mu,
            gain_signal: self.signal.gain_hz,
            gain_decoy: self.decoy.gain_hz,
            gain_vacuum: self.vacuum.gain_hz,
            error_signal: 1.0 - self.signal.fidelity,
            error_decoy: 1.0 - self.decoy.fidelity,
            error_vacuum: 1.0 - self.vacuum.fidelity,
        }
    }

    /// Dataset rebuilt from resampled `(correct, wrong)` counts in the order
    /// signal, decoy, vacuum.
    pub fn dataset_from_counts(&self, counts: &[u64]) -> DecoyDataset {
        let rows = [&self.signal, &self.decoy, &self.vacuum];
        let mut gains = [0.0; 3];
        let mut errors = [0.0; 3];
        for (k, row) in rows.iter().enumerate() {
            let (c, w) = (counts[2 * k] as f64, counts[2 * k + 1] as f64);
            gains[k] = (c + w) / row.t_sec;
            errors[k] = if c + w > 0.0 { w / (c + w) } else { 0.0 };
        }
        DecoyDataset {
            state_label: self.state.clone(),
            mu_signal: self.signal.mu,
            mu_decoy: self.decoy.mu,
            mu_vacuum: self.vacuum.mu,
            gain_signal: gains[0],
            gain_decoy: gains[1],
            gain_vacuum: gains[2],
            error_signal: errors[0],
            error_decoy: errors[1],
            error_vacuum: errors[2],
        }
    }

    /// `(correct, wrong)` counts of signal, decoy and vacuum, flattened.
    pub fn counts(&self) -> Vec<u64> {
        [&self.signal, &self.decoy, &self.vacuum]
            .iter()
            .flat_map(|r| {
                let (c, w) = r.counts();
                [c, w]
            })
            .collect()
    }
}

/// Reads a decoy table with columns `state, mu, gain_hz, fidelity` and an
/// optional `t_sec`. Each state needs exactly three rows: a vacuum row with
/// `mu = 0` and two distinct positive intensities. States keep file order.
pub fn read_decoy_table<R: Read>(reader: R) -> Result<Vec<DecoyTableEntry>> {
    let rows = read_rows::<RawDecoyRow, _>(reader)?;
    let mut bad: Vec<(usize, String)> = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<(usize, DecoyRow)>> = BTreeMap::new();
    for (line, r) in rows {
        let t_sec = r.t_sec.unwrap_or(DEFAULT_DECOY_INTEGRATION);
        if r.state.is_empty() {
            bad.push((line, "empty state label".into()));
        } else if !(r.mu >= 0.0) || !r.mu.is_finite() {
            bad.push((line, format!("mu must be >= 0, got {}", r.mu)));
        } else if !(r.gain_hz >= 0.0) || !r.gain_hz.is_finite() {
            bad.push((line, format!("gain_hz must be >= 0, got {}", r.gain_hz)));
        } else if !(0.0..=1.0).contains(&r.fidelity) {
            bad.push((line, format!("fidelity must lie in [0, 1], got {}", r.fidelity)));
        } else if !(t_sec > 0.0) {
            bad.push((line, format!("t_sec must be > 0, got {t_sec}")));
        } else {
            if !groups.contains_key(&r.state) {
                order.push(r.state.clone());
            }
            groups.entry(r.state).or_default().push((
                line,
                DecoyRow {
                    mu: r.mu,
                    gain_hz: r.gain_hz,
                    fidelity: r.fidelity,
                    t_sec,
                },
            ));
        }
    }

    let mut entries = Vec::with_capacity(order.len());
    for state in order {
        let mut rows = groups.remove(&state).unwrap_or_default();
        let lines: Vec<String> = rows.iter().map(|(l, _)| l.to_string()).collect();
        if rows.len() != 3 {
            let first = rows.first().map_or(0, |r| r.0);
            bad.push((
                first,
                format!(
                    "state '{state}' has {} rows (lines {}), expected 3",
                    rows.len(),
                    lines.join(", ")
                ),
            ));
            continue;
        }
        rows.sort_by(|a, b| b.1.mu.total_cmp(&a.1.mu));
        let (signal, decoy, vacuum) = (rows[0].1, rows[1].1, rows[2].1);
        if vacuum.mu != 0.0 || !(signal.mu > decoy.mu && decoy.mu > 0.0) {
            bad.push((
                rows[0].0,
                format!(
                    "state '{state}' (lines {}) needs intensities mu_s > mu_d > 0 = mu_vac, got {}, {}, {}",
                    lines.join(", "),
                    signal.mu,
                    decoy.mu,
                    vacuum.mu
                ),
            ));
            continue;
        }
        entries.push(DecoyTableEntry {
            state,
            signal,
            decoy,
            vacuum,
        });
    }

    if !bad.is_empty() {
        bad.sort_by_key(|b| b.0);
        let message = bad
            .iter()
            .map(|(l, m)| format!("line {l}: {m}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(parse_error(bad[0].0, message));
    }
    Ok(entries)
}
