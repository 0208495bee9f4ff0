use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e9)`.
/// Non-finite values become empty cells.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        String::new()
    } else if x == 0.0 || (1e-4..1e9).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// One reported quantity. `uncertainty` is absent for exact or purely
/// model-derived values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub quantity: String,
    pub value: f64,
    pub uncertainty: Option<f64>,
    pub unit: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub command: String,
    pub rows: Vec<Row>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.into(),
            rows: Vec::new(),
        }
    }

    pub fn exact(&mut self, quantity: impl Into<String>, value: f64, unit: &str) {
        self.rows.push(Row {
            quantity: quantity.into(),
            value,
            uncertainty: None,
            unit: unit.into(),
        });
    }

    pub fn with_err(&mut self, quantity: impl Into<String>, value: f64, uncertainty: f64, unit: &str) {
        self.rows.push(Row {
            quantity: quantity.into(),
            value,
            uncertainty: Some(uncertainty),
            unit: unit.into(),
        });
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["quantity", "value", "uncertainty", "unit"])?;
                for r in &self.rows {
                    let u = r.uncertainty.map(num).unwrap_or_default();
                    w.write_record([r.quantity.as_str(), &num(r.value), &u, &r.unit])?;
                }
                w.into_inner().map_err(|e| CliError::io(e.to_string()))
            }
            Format::Json => {
                let mut out = serde_json::to_vec_pretty(self)?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }
}

/// Plot-ready delimited table with a one-line header.
#[derive(Debug, Clone)]
pub struct Curve {
    pub file: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Curve {
    pub fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Curve {
            file: file.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    /// Numeric row; non-finite cells are left empty.
    pub fn push_nums(&mut self, cells: &[f64]) {
        self.push(cells.iter().map(|&x| num(x)).collect());
    }

    pub fn render(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::io(e.to_string()))
    }
}
