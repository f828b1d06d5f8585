//! Application configuration: a TOML file overlaid by environment variables.
//!
//! ```toml
//! graph_dir = "graphs"
//! bind_addr = "127.0.0.1:8700"
//!
//! [llm]
//! endpoint = "http://localhost:8000/v1/complete"
//! api_key = "..."
//!
//! [embed]
//! endpoint = "http://localhost:8001/embed"
//!
//! [limits]
//! max_rounds = 7
//! max_tokens_per_round = 3000
//!
//! [synth]
//! max_retries = 3
//! target_one_two = 10
//! target_three_plus = 10
//! ```
//!
//! `LLM_ENDPOINT`, `LLM_API_KEY`, `EMBED_ENDPOINT` and `TOOL_BIND_ADDR` take
//! precedence over the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeLimits, DEFAULT_MAX_ROUNDS, DEFAULT_MAX_TOKENS_PER_ROUND};
use crate::synth::SynthConfig;

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8700";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("graph_dir {0} does not exist")]
    MissingGraphDir(String),
    #[error("invalid bind address '{0}'")]
    BadBindAddr(String),
    #[error("limits must be positive")]
    BadLimits,
    #[error("synth: {0}")]
    Synth(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub max_rounds: usize,
    pub max_tokens_per_round: usize,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            max_tokens_per_round: DEFAULT_MAX_TOKENS_PER_ROUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub graph_dir: Option<PathBuf>,
    pub bind_addr: String,
    pub llm: LlmSection,
    pub embed: EmbedSection,
    pub limits: LimitsSection,
    pub synth: SynthConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            graph_dir: None,
            bind_addr: DEFAULT_BIND_ADDR.to_string(),
            llm: LlmSection::default(),
            embed: EmbedSection::default(),
            limits: LimitsSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Overrides fields from the environment, looked up through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(v) = var("LLM_ENDPOINT") {
            self.llm.endpoint = Some(v);
        }
        if let Some(v) = var("LLM_API_KEY") {
            self.llm.api_key = Some(v);
        }
        if let Some(v) = var("EMBED_ENDPOINT") {
            self.embed.endpoint = Some(v);
        }
        if let Some(v) = var("TOOL_BIND_ADDR") {
            self.bind_addr = v;
        }
    }

    /// Reads `path` if given (defaults otherwise), applies the process
    /// environment and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with(path, |k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }

    pub fn load_with(path: Option<&Path>, var: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml_str(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(var);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(dir) = &self.graph_dir {
            if !dir.is_dir() {
                return Err(ConfigError::MissingGraphDir(dir.display().to_string()));
            }
        }
        self.bind_socket_addr()?;
        self.limits()?;
        self.synth.validate().map_err(|e| ConfigError::Synth(e.to_string()))
    }

    pub fn bind_socket_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.bind_addr
            .parse()
            .map_err(|_| ConfigError::BadBindAddr(self.bind_addr.clone()))
    }

    pub fn limits(&self) -> Result<EpisodeLimits, ConfigError> {
        EpisodeLimits::new(self.limits.max_rounds, self.limits.max_tokens_per_round).map_err(|_| ConfigError::BadLimits)
    }
}
