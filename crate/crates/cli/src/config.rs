//! Sweep run configuration: a single JSON document with dotted-path
//! `--set key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use spadsim_core::photon::SensorConfig;
use spadsim_core::simulator::{ConventionalCameraConfig, SceneSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sensor: SensorSection,
    #[serde(default)]
    pub conventional: ConventionalCameraConfig,
    pub scene: SceneSpec,
    pub sweep: SweepSection,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub eta: f64,
    pub dark_rate: f64,
    /// Preset binary exposure; sweep cells derive their own from the
    /// equivalent exposure and bit depth.
    #[serde(default = "default_tau_bin")]
    pub tau_bin: f64,
    pub width: u32,
    pub height: u32,
}

fn default_tau_bin() -> f64 {
    1e-5
}

impl SensorSection {
    /// Materialize a [`SensorConfig`], optionally replacing the preset
    /// binary exposure (sweep cells derive theirs per exposure setting).
    pub fn sensor_config(&self, tau_bin: Option<f64>) -> Result<SensorConfig> {
        SensorConfig::new(
            self.eta,
            self.dark_rate,
            tau_bin.unwrap_or(self.tau_bin),
            self.width,
            self.height,
        )
        .context("invalid sensor section")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Illumination levels as direct flux multipliers; labels are
    /// free-form metadata (e.g. lux descriptions).
    pub illuminations: Vec<Illumination>,
    /// Total (equivalent) exposures in seconds.
    pub exposures_s: Vec<f64>,
    #[serde(default = "default_spad_bit_depth")]
    pub spad_bit_depth: u8,
}

fn default_spad_bit_depth() -> u8 {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Illumination {
    pub label: String,
    pub flux_scale: f64,
}

/// Parse a config file, apply `--set` overrides, and validate the grid.
pub fn load_run_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("config {} is not valid JSON", path.display()))?;
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    let config: RunConfig =
        serde_json::from_value(value).context("config does not match the expected schema")?;
    if config.sweep.illuminations.is_empty() || config.sweep.exposures_s.is_empty() {
        bail!("sweep grid must list at least one illumination and one exposure");
    }
    if !(1..=16).contains(&config.sweep.spad_bit_depth) {
        bail!(
            "spad_bit_depth must be in 1..=16, got {}",
            config.sweep.spad_bit_depth
        );
    }
    for exposure in &config.sweep.exposures_s {
        if !(exposure.is_finite() && *exposure > 0.0) {
            bail!("sweep exposures must be finite and positive, got {exposure}");
        }
    }
    Ok(config)
}

/// Apply one `key.path=value` override to a JSON document. The value is
/// parsed as JSON when possible and falls back to a plain string.
pub fn apply_override(root: &mut serde_json::Value, item: &str) -> Result<()> {
    let (path, raw_value) = item
        .split_once('=')
        .with_context(|| format!("override {item:?} is not of the form key=value"))?;
    let value: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));

    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let last = i == segments.len() - 1;
        match cursor {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert((*segment).to_string(), value);
                    return Ok(());
                }
                cursor = map
                    .entry((*segment).to_string())
                    .or_insert_with(|| serde_json::Value::Object(Default::default()));
            }
            serde_json::Value::Array(items) => {
                let index: usize = segment
                    .parse()
                    .with_context(|| format!("{segment:?} is not an array index in {path:?}"))?;
                let slot = items
                    .get_mut(index)
                    .with_context(|| format!("index {index} out of bounds in {path:?}"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                cursor = slot;
            }
            other => bail!("cannot descend into {other} at {segment:?} in {path:?}"),
        }
    }
    unreachable!("override paths always terminate on the last segment")
}
