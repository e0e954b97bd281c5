use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use skynav::protocol::{DEFAULT_MAX_STEPS, ImageMode};
use skynav::raster::DEFAULT_RESOLUTION;

use crate::error::ServiceError;

/// Service configuration. Every field has a default; a TOML file and
/// `SKYNAV_*` environment variables override them in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Directory of `<env_id>.png` + `<env_id>.json` bundles.
    pub env_dir: PathBuf,
    /// Optional JSONL dataset whose episodes can seed sessions.
    pub dataset: Option<PathBuf>,
    /// Static follower UI assets, served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Where finished sessions are appended as JSONL.
    pub transcript_dir: Option<PathBuf>,
    pub idle_timeout_secs: u64,
    pub sweep_interval_secs: u64,
    pub resolution: u32,
    pub max_steps: usize,
    /// Send observations by URL instead of inline data URLs.
    pub reference_images: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            env_dir: PathBuf::from("envs"),
            dataset: None,
            static_dir: None,
            transcript_dir: None,
            idle_timeout_secs: 1800,
            sweep_interval_secs: 60,
            resolution: DEFAULT_RESOLUTION,
            max_steps: DEFAULT_MAX_STEPS,
            reference_images: false,
        }
    }
}

impl ServiceConfig {
    /// Reads `path` (if any), then applies process environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_overrides(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn apply_overrides(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        fn parse<T: std::str::FromStr>(key: &str, v: String) -> Result<T, ServiceError> {
            v.parse().map_err(|_| ServiceError::Config(format!("{key}={v} is not valid")))
        }
        if let Some(v) = var("SKYNAV_HOST") {
            self.host = v;
        }
        if let Some(v) = var("SKYNAV_PORT") {
            self.port = parse("SKYNAV_PORT", v)?;
        }
        if let Some(v) = var("SKYNAV_ENV_DIR") {
            self.env_dir = v.into();
        }
        if let Some(v) = var("SKYNAV_DATASET") {
            self.dataset = Some(v.into());
        }
        if let Some(v) = var("SKYNAV_STATIC_DIR") {
            self.static_dir = Some(v.into());
        }
        if let Some(v) = var("SKYNAV_TRANSCRIPT_DIR") {
            self.transcript_dir = Some(v.into());
        }
        if let Some(v) = var("SKYNAV_IDLE_TIMEOUT_SECS") {
            self.idle_timeout_secs = parse("SKYNAV_IDLE_TIMEOUT_SECS", v)?;
        }
        if let Some(v) = var("SKYNAV_MAX_STEPS") {
            self.max_steps = parse("SKYNAV_MAX_STEPS", v)?;
        }
        Ok(())
    }

    pub fn addr(&self) -> Result<SocketAddr, ServiceError> {
        format!("{}:{}", self.host, self.port)
            .parse()
            .map_err(|e| ServiceError::Config(format!("address {}:{}: {e}", self.host, self.port)))
    }

    pub fn idle_timeout(&self) -> Duration {
        Duration::from_secs(self.idle_timeout_secs)
    }

    pub(crate) fn image_mode(&self, session_id: &str) -> ImageMode {
        if self.reference_images {
            ImageMode::Reference {
                prefix: format!("/sessions/{session_id}/observations/"),
            }
        } else {
            ImageMode::Inline
        }
    }
}
