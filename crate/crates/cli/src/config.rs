//! The run configuration file (TOML). Every section is optional and unknown
//! keys are rejected.

use std::path::Path;

use anyhow::Context;
use facetouch::extract::ExtractConfig;
use facetouch::pipeline::{PipelineSpec, Protocol};
use facetouch::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub extract: ExtractConfig,
    pub pipeline: PipelineSpec,
    pub evaluation: EvaluationConfig,
    pub correlation: CorrelationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Seed for the grouped half split of dataset B and the random-chance predictor.
    pub split_seed: u64,
    pub configurations: Vec<Protocol>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { split_seed: 0, configurations: Protocol::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationConfig {
    pub cutoff_months: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self { cutoff_months: 5.0 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<RunConfig> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// SHA-256 of the canonical JSON form, independent of file formatting.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Header lines written at the top of every output file.
pub fn provenance(command: &str, config: &RunConfig, seeds: &[(&str, u64)]) -> Vec<String> {
    let mut lines = vec![
        format!("facetouch {} {command}", env!("CARGO_PKG_VERSION")),
        format!("config_sha256 {}", config.hash()),
    ];
    for (name, seed) in seeds {
        lines.push(format!("seed {name} {seed}"));
    }
    lines
}
