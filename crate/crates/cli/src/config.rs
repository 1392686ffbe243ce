//! Run configuration: a TOML file, then environment overrides, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use confalign::backend::BackendSettings;
use confalign::confidence::DEFAULT_FAILURE_THRESHOLD;
use confalign::data::DatasetSpec;
use confalign::pipeline::GenerateOptions;
use serde::Deserialize;

pub const ENV_ENDPOINT: &str = "CONFALIGN_ENDPOINT";
pub const ENV_MODEL: &str = "CONFALIGN_MODEL";
pub const ENV_API_KEY: &str = "CONFALIGN_API_KEY";
pub const ENV_TIMEOUT: &str = "CONFALIGN_TIMEOUT_SECS";
pub const ENV_MAX_ATTEMPTS: &str = "CONFALIGN_MAX_ATTEMPTS";
pub const ENV_PARALLELISM: &str = "CONFALIGN_PARALLELISM";

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: String,
    /// Read the answer token's share of the choice-letter mass instead of its
    /// raw probability.
    pub renormalize: bool,
    /// Explicit internal-confidence reader; overrides `renormalize`.
    pub extractor: Option<String>,
    /// Sampling seed for datasets sampled from the command line, and the
    /// permutation test's seed.
    pub seed: u64,
    pub failure_threshold: f64,
    pub output_dir: PathBuf,
    pub generation: GenerateOptions,
    pub remote: confalign::backend::RemoteConfig,
    pub mock: confalign::backend::ConfidenceProfile,
    pub datasets: Vec<DatasetSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: "mock".into(),
            renormalize: false,
            extractor: None,
            seed: 0,
            failure_threshold: DEFAULT_FAILURE_THRESHOLD,
            output_dir: PathBuf::from("out"),
            generation: GenerateOptions::default(),
            remote: Default::default(),
            mock: Default::default(),
            datasets: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let mut cfg: RunConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                // Relative dataset paths are relative to the config file.
                if let Some(dir) = p.parent() {
                    for d in &mut cfg.datasets {
                        if d.path.is_relative() {
                            d.path = dir.join(&d.path);
                        }
                    }
                }
                cfg
            }
            None => RunConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = get(ENV_ENDPOINT) {
            self.remote.base_url = v;
        }
        if let Some(v) = get(ENV_MODEL) {
            self.remote.model = v;
        }
        if let Some(v) = get(ENV_API_KEY) {
            self.remote.api_key = Some(v);
        }
        if let Some(v) = get(ENV_TIMEOUT) {
            self.remote.timeout_secs = v.parse().with_context(|| format!("{ENV_TIMEOUT}={v}"))?;
        }
        if let Some(v) = get(ENV_MAX_ATTEMPTS) {
            self.remote.max_attempts = v.parse().with_context(|| format!("{ENV_MAX_ATTEMPTS}={v}"))?;
        }
        if let Some(v) = get(ENV_PARALLELISM) {
            self.generation.parallelism = v.parse().with_context(|| format!("{ENV_PARALLELISM}={v}"))?;
        }
        Ok(())
    }

    pub fn backend_settings(&self) -> BackendSettings {
        BackendSettings {
            remote: self.remote.clone(),
            mock: self.mock.clone(),
        }
    }

    pub fn extractor_name(&self) -> &str {
        match (&self.extractor, self.renormalize) {
            (Some(name), _) => name,
            (None, true) => "renormalized",
            (None, false) => "token-prob",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.failure_threshold) {
            bail!("failure_threshold {} outside [0, 1]", self.failure_threshold);
        }
        if self.generation.parallelism == 0 {
            bail!("parallelism must be at least 1");
        }
        if self.output_dir.is_file() {
            bail!("output directory {} is a file", self.output_dir.display());
        }
        for d in &self.datasets {
            if !d.path.is_file() {
                bail!("dataset `{}`: {} does not exist", d.name, d.path.display());
            }
        }
        Ok(())
    }
}
