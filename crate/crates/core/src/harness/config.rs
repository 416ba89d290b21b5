use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::AgentConfig;
use crate::error::{Error, Result};
use crate::mdp::{EnvironmentDocument, LinearMdp, MixtureSpec};

use super::presets;

pub const CONFIG_FORMAT_VERSION: &str = "vbmle-config/1";

fn default_format() -> String {
    CONFIG_FORMAT_VERSION.to_string()
}
fn default_horizon() -> usize {
    500
}
fn default_trials() -> usize {
    20
}
fn default_checkpoints() -> Vec<usize> {
    vec![25, 50, 100, 200, 500]
}
fn default_true() -> bool {
    true
}
fn default_delta() -> f64 {
    0.1
}

/// Where the environment comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSource {
    Generate(MixtureSpec),
    /// Environment JSON file; relative paths resolve against the config file's directory.
    File(PathBuf),
    Inline(Box<EnvironmentDocument>),
    /// A built-in instance, e.g. `closed_loop`.
    Preset(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_format")]
    pub format: String,
    pub environment: EnvironmentSource,
    pub agents: Vec<AgentConfig>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Trial `i` uses seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    /// Overrides the environment's discount.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
    #[serde(default = "default_true")]
    pub diagnostics: bool,
    /// Confidence level of the ellipsoid radius.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Write per-step records (`steps.csv`), needed to re-check a run.
    #[serde(default = "default_true")]
    pub record_steps: bool,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Directory that relative environment paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(environment: EnvironmentSource, agents: Vec<AgentConfig>) -> Self {
        Self {
            format: default_format(),
            environment,
            agents,
            horizon: default_horizon(),
            trials: default_trials(),
            seed: 0,
            gamma: None,
            checkpoints: default_checkpoints(),
            diagnostics: true,
            delta: default_delta(),
            record_steps: true,
            output_dir: None,
            threads: None,
            base_dir: None,
        }
    }

    /// Parses a config, reporting schema violations with the JSON pointer of the offending value.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = json_pointer(e.path());
            Error::config(pointer, e.inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CONFIG_FORMAT_VERSION {
            return Err(Error::config(
                "/format",
                format!("unsupported format {:?}, expected {CONFIG_FORMAT_VERSION:?}", self.format),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("/horizon", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("/trials", "must be at least 1"));
        }
        if self.agents.is_empty() {
            return Err(Error::config("/agents", "at least one agent is required"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            a.validate(&format!("/agents/{i}"))?;
        }
        let mut labels: Vec<String> = self.agents.iter().map(AgentConfig::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config("/agents", format!("duplicate agent label {:?}", w[0])));
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::config("/gamma", format!("must lie in [0, 1), got {g}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("/delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(i) = self.checkpoints.iter().position(|&t| t == 0) {
            return Err(Error::config(format!("/checkpoints/{i}"), "checkpoints start at 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("/threads", "must be at least 1"));
        }
        Ok(())
    }

    /// Checkpoints within the horizon, sorted, plus the horizon itself.
    pub fn effective_checkpoints(&self) -> Vec<usize> {
        let mut cps: Vec<usize> = self.checkpoints.iter().copied().filter(|&t| t <= self.horizon).collect();
        cps.push(self.horizon);
        cps.sort_unstable();
        cps.dedup();
        cps
    }

    pub fn load_environment(&self) -> Result<LinearMdp> {
        let mdp = match &self.environment {
            EnvironmentSource::Generate(spec) => spec.generate()?,
            EnvironmentSource::File(path) => {
                let path = match &self.base_dir {
                    Some(base) if path.is_relative() => base.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                LinearMdp::from_json(&text).map_err(|e| Error::config("/environment/file", e.to_string()))?
            }
            EnvironmentSource::Inline(doc) => {
                LinearMdp::try_from((**doc).clone()).map_err(|e| Error::config("/environment/inline", e.to_string()))?
            }
            EnvironmentSource::Preset(name) => presets::environment(name)
                .ok_or_else(|| Error::config("/environment/preset", format!("unknown environment preset {name:?}")))??,
        };
        match self.gamma {
            Some(g) => mdp.with_gamma(g),
            None => Ok(mdp),
        }
    }

    /// Canonical JSON of everything that determines the results.
    pub fn canonical_json(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        Ok(serde_json::to_string(&c)?)
    }

    /// SHA-256 of the canonical config and the resolved environment, hex encoded.
    pub fn hash(&self, mdp: &LinearMdp) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.canonical_json()?.as_bytes());
        h.update(b"\n");
        h.update(serde_json::to_string(mdp)?.as_bytes());
        Ok(hex::encode(h.finalize()))
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}
