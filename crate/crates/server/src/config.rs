//! Server configuration file (TOML).

use std::path::{Path, PathBuf};

use safekeeper_core::enclave::{DEFAULT_ATTEMPTS_MAX, DEFAULT_WINDOW_SECS};
use safekeeper_core::proxy::DEFAULT_SIGRL_REFRESH_SECS;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0} must be positive")]
    Zero(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_attempts_max")]
    pub attempts_max: u32,
    #[serde(default = "default_window")]
    pub window_seconds: u64,
    #[serde(default = "default_sigrl_refresh")]
    pub sigrl_refresh_seconds: u64,
    /// Verification service base URL. Unset: this process hosts the
    /// simulated service itself under /ias.
    #[serde(default)]
    pub proxy_url: Option<String>,
    /// Measurement whitelist published at /whitelist.json. Created with
    /// the running enclave's measurement if missing.
    #[serde(default)]
    pub whitelist_file: Option<PathBuf>,
    pub db_path: PathBuf,
    pub sealed_state_path: PathBuf,

    #[serde(default = "default_listen")]
    pub listen: String,
    /// Start with a new SafeKey when the sealed blob cannot be opened.
    /// Every existing record becomes unverifiable.
    #[serde(default)]
    pub allow_fresh_key: bool,
    /// Simulated machine state (counter, sealing secret, time nonce).
    /// Defaults to `<sealed_state_path>.platform.json`.
    #[serde(default)]
    pub platform_state_path: Option<PathBuf>,
    #[serde(default = "default_platform_id")]
    pub platform_id: String,
    /// Seeds the simulated platform and the salt generator. Unset: random.
    #[serde(default)]
    pub sim_seed: Option<u64>,
    /// Seeds the simulated quoting authority, verification service and
    /// revocation authority. Everything trusting this deployment must use
    /// the same value.
    #[serde(default = "default_trust_seed")]
    pub trust_seed: String,
    #[serde(default = "default_reset_interval")]
    pub reset_interval_seconds: u64,
    #[serde(default)]
    pub demo_dir: Option<PathBuf>,
}

fn default_attempts_max() -> u32 {
    DEFAULT_ATTEMPTS_MAX
}
fn default_window() -> u64 {
    DEFAULT_WINDOW_SECS
}
fn default_sigrl_refresh() -> u64 {
    DEFAULT_SIGRL_REFRESH_SECS
}
fn default_listen() -> String {
    "127.0.0.1:8080".into()
}
fn default_platform_id() -> String {
    "host-0".into()
}
fn default_trust_seed() -> String {
    "safekeeper-sim".into()
}
fn default_reset_interval() -> u64 {
    60
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text)?;
        if c.window_seconds == 0 {
            return Err(ConfigError::Zero("window_seconds"));
        }
        if c.sigrl_refresh_seconds == 0 {
            return Err(ConfigError::Zero("sigrl_refresh_seconds"));
        }
        if c.reset_interval_seconds == 0 {
            return Err(ConfigError::Zero("reset_interval_seconds"));
        }
        Ok(c)
    }

    pub fn platform_state_path(&self) -> PathBuf {
        self.platform_state_path.clone().unwrap_or_else(|| {
            let mut p = self.sealed_state_path.clone().into_os_string();
            p.push(".platform.json");
            p.into()
        })
    }
}
