//! Run configuration: file sections merged with command-line overrides.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use lesiontrack::metrics::EvalConfig;
use lesiontrack::registration::RegistrationConfig;
use lesiontrack::synth::{ImageAugParams, LesionTransformParams, PhantomSpec};
use lesiontrack::tracking::{BaselineSegmenter, TrackingConfig};

use crate::fail::{code, fail};

/// Everything a config file may set. Each section is optional; unknown keys
/// are rejected so typos do not silently fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
    pub phantom: PhantomSpec,
    pub lesion: LesionTransformParams,
    pub aug: ImageAugParams,
    pub registration: RegistrationConfig,
    pub tracking: TrackingConfig,
    pub segmenter: BaselineSegmenter,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parse a `.toml` or `.json` file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false);
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| fail(code::INVALID, format!("config {}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| fail(code::INVALID, format!("config {}: {e}", path.display())))?
        };
        Ok(parsed)
    }
}
