//! `teleportsim`: config-driven front end to the teleportation toolkit.
//!
//! Every run writes a report, its curve files and a `manifest.json` into the
//! output directory. `teleportsim replay <manifest>` reruns the recorded
//! command from the embedded config and checks the outputs byte for byte.

mod commands;
mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use config::Loaded;
use report::Format;

const EXIT_MISMATCH: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::input(message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<teleportsim::Error> for CliError {
    fn from(e: teleportsim::Error) -> Self {
        let code = if e.is_input_error() {
            EXIT_INPUT
        } else {
            EXIT_NUMERIC
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "teleportsim",
    version,
    about = "Time-bin teleportation link: model, fits, bounds and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output directory for the report, curves and manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form case probabilities, fidelity and rate.
    Model(RunArgs),
    /// Single-photon bounds from a decoy gain table, or from simulated runs.
    Decoy(RunArgs),
    /// Pulse-level Monte Carlo of the link.
    Simulate(RunArgs),
    /// HOM dip fit (file or simulated scan) and optional fringe fit.
    Hom(RunArgs),
    /// Drift and feedback loops over a run.
    Drift(RunArgs),
    /// Fidelity and rate along each configured parameter axis.
    Sweep(RunArgs),
    /// State reconstruction from projection counts.
    Tomography(RunArgs),
    /// Pump-power scan fits, CAR and pair number.
    Pairs(RunArgs),
    /// Rerun a recorded command and compare outputs byte for byte.
    Replay {
        manifest: PathBuf,
        /// Defaults to `replay/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    command: String,
    version: String,
    seed: Option<u64>,
    format: Format,
    config_path: String,
    config_dir: PathBuf,
    config_sha256: String,
    config_text: String,
    /// Data files read, by path.
    inputs: BTreeMap<String, String>,
    /// Files written next to the manifest.
    outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn dispatch(command: &str, l: &Loaded) -> Result<commands::Output, CliError> {
    match command {
        "model" => commands::model(l),
        "decoy" => commands::decoy(l),
        "simulate" => commands::simulate(l),
        "hom" => commands::hom(l),
        "drift" => commands::drift(l),
        "sweep" => commands::sweep_cmd(l),
        "tomography" => commands::tomography(l),
        "pairs" => commands::pairs(l),
        other => Err(CliError::input(format!("unknown command {other:?}"))),
    }
}

/// Runs `command` and returns the rendered files keyed by name, plus the
/// hashed inputs.
fn produce(
    command: &str,
    mut l: Loaded,
    seed: Option<u64>,
    format: Format,
) -> Result<(BTreeMap<String, Vec<u8>>, BTreeMap<String, String>), CliError> {
    if let Some(s) = seed {
        l.override_seed(s);
    }
    let out = dispatch(command, &l)?;
    let mut files = BTreeMap::new();
    files.insert(
        format!("report.{}", format.extension()),
        out.report.render(format)?,
    );
    for c in &out.curves {
        files.insert(c.file.clone(), c.render()?);
    }
    let mut inputs = BTreeMap::new();
    for p in &out.inputs {
        inputs.insert(p.display().to_string(), sha256_hex(&std::fs::read(p)?));
    }
    Ok((files, inputs))
}

fn write_files(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn run_command(command: &str, args: &RunArgs) -> Result<(), CliError> {
    let l = Loaded::from_file(&args.config)?;
    let manifest_base = (l.text.clone(), l.dir.clone());
    let (files, inputs) = produce(command, l, args.seed, args.format)?;
    write_files(&args.out, &files)?;
    let report = &files[&format!("report.{}", args.format.extension())];
    print!("{}", String::from_utf8_lossy(report));

    let manifest = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.seed,
        format: args.format,
        config_path: args.config.display().to_string(),
        config_dir: manifest_base.1,
        config_sha256: sha256_hex(manifest_base.0.as_bytes()),
        config_text: manifest_base.0,
        inputs,
        outputs: files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    std::fs::write(args.out.join("manifest.json"), text)?;
    Ok(())
}

fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", manifest_path.display())))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", manifest_path.display())))?;
    if sha256_hex(m.config_text.as_bytes()) != m.config_sha256 {
        return Err(CliError::input("manifest config text does not match its hash"));
    }
    if m.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, replaying with {}",
            m.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let l = Loaded::from_text(m.config_text.clone(), m.config_dir.clone(), "manifest config")?;
    let (files, inputs) = produce(&m.command, l, m.seed, m.format)?;
    for (path, hash) in &m.inputs {
        if inputs.get(path) != Some(hash) {
            return Err(CliError::input(format!(
                "input {path} changed since the recorded run"
            )));
        }
    }
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    write_files(&dir, &files)?;

    let mut identical = files.len() == m.outputs.len();
    for (name, want) in &m.outputs {
        let got = files.get(name).map(|b| sha256_hex(b));
        let ok = got.as_ref() == Some(want);
        identical &= ok;
        println!("{} {name}", if ok { "identical" } else { "DIFFERS  " });
    }
    Ok(identical)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Replay { manifest, out } => replay(manifest, out.as_deref()).map(|same| {
            if same {
                ExitCode::SUCCESS
            } else {
                eprintln!("replay outputs differ from the manifest");
                ExitCode::from(EXIT_MISMATCH)
            }
        }),
        cmd => {
            let (name, args) = match cmd {
                Command::Model(a) => ("model", a),
                Command::Decoy(a) => ("decoy", a),
                Command::Simulate(a) => ("simulate", a),
                Command::Hom(a) => ("hom", a),
                Command::Drift(a) => ("drift", a),
                Command::Sweep(a) => ("sweep", a),
                Command::Tomography(a) => ("tomography", a),
                Command::Pairs(a) => ("pairs", a),
                Command::Replay { .. } => unreachable!("handled above"),
            };
            run_command(name, args).map(|()| ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.code)
    })
}
