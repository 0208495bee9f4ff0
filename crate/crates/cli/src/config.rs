use std::path::{Path, PathBuf};

use serde::Deserialize;
use teleportsim::model::{P022Form, SweepSpec};
use teleportsim::pairs::Weighting;
use teleportsim::sim::{DecoyIntensities, DriftConfig, HomScanConfig, SimConfig};
use teleportsim::stats::BootstrapConfig;
use teleportsim::{SystemParams, TimeBinQubit};

use crate::CliError;

/// Whole experiment description. Only `[system]` is mandatory; each
/// subcommand checks for the sections it needs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemParams,
    #[serde(default)]
    pub model: ModelSection,
    pub sim: Option<SimConfig>,
    pub decoy: Option<DecoyIntensities>,
    #[serde(default)]
    pub sweep: Vec<SweepSpec>,
    pub hom: Option<HomSection>,
    pub drift: Option<DriftSection>,
    pub tomography: Option<TomographySection>,
    pub pairs: Option<PairsSection>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub io: IoPaths,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub correction_db: f64,
    #[serde(default)]
    pub p022_form: P022Form,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            correction_db: 0.0,
            p022_form: P022Form::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomSection {
    /// Simulated delays run over `[-span, span]`.
    pub delay_span_ps: f64,
    pub delay_step_ps: f64,
    pub scan: HomScanConfig,
}

impl HomSection {
    pub fn delays(&self) -> Result<Vec<f64>, CliError> {
        if !(self.delay_step_ps > 0.0 && self.delay_span_ps > 0.0) {
            return Err(CliError::input(
                "[hom] delay_span_ps and delay_step_ps must be > 0",
            ));
        }
        let n = (self.delay_span_ps / self.delay_step_ps).floor() as i64;
        Ok((-n..=n).map(|k| k as f64 * self.delay_step_ps).collect())
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub duration_s: f64,
    #[serde(default)]
    pub loops: DriftConfig,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySection {
    /// State Alice prepared; the reference is its `sigma_y` image.
    pub input_state: TimeBinQubit,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsSection {
    /// Heralding efficiencies used to turn net coincidences into pairs.
    pub t_s: f64,
    pub t_i: f64,
    #[serde(default)]
    pub weighting: Weighting,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoPaths {
    pub decoy_table: Option<PathBuf>,
    pub hom_scan: Option<PathBuf>,
    pub fringe: Option<PathBuf>,
    pub tomography: Option<PathBuf>,
    pub power_scan: Option<PathBuf>,
}

/// A parsed config together with the text and directory it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub text: String,
    pub dir: PathBuf,
}

impl Loaded {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let dir = std::path::absolute(&dir).unwrap_or(dir);
        Self::from_text(text, dir, &path.display().to_string())
    }

    pub fn from_text(text: String, dir: PathBuf, origin: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::input(format!("{origin}: {e}")))?;
        config.system.validate()?;
        Ok(Loaded { config, text, dir })
    }

    /// Resolves an `[io]` path against the config directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    /// `--seed` replaces every seed in the file.
    pub fn override_seed(&mut self, seed: u64) {
        let c = &mut self.config;
        if let Some(sim) = c.sim.as_mut() {
            sim.seed = seed;
        }
        if let Some(hom) = c.hom.as_mut() {
            hom.scan.seed = seed;
        }
        if let Some(drift) = c.drift.as_mut() {
            drift.loops.seed = seed;
        }
        c.bootstrap.seed = seed;
    }
}

pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::input(format!("config has no [{name}] section")))
}
