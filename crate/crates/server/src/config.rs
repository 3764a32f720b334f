//! Server configuration, read from TOML.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use medsync_core::{DoctorId, ServerId};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("tls.cert and tls.key are required unless test_mode is set")]
    TlsRequired,
    #[error("peer {0} must use an https:// url unless test_mode is set")]
    PlainPeer(ServerId),
    #[error("peer {0} is listed twice")]
    DuplicatePeer(ServerId),
    #[error("a server cannot peer with itself")]
    SelfPeer,
    #[error("staleness_threshold_hours must be at least 1")]
    ZeroThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerConfig {
    pub id: ServerId,
    /// Base url, e.g. `https://global-gh.example.org:8443`.
    pub url: String,
    /// Shared secret both ends present on sync calls.
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlsConfig {
    pub cert: PathBuf,
    pub key: PathBuf,
    /// Extra root certificate trusted when dialling peers.
    #[serde(default)]
    pub ca: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportConfig {
    /// Writes each message to the log.
    #[default]
    Log,
    /// Appends each message as a JSON line to a file for a gateway to pick up.
    Outbox { path: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportsConfig {
    #[serde(default)]
    pub email: TransportConfig,
    #[serde(default)]
    pub sms: TransportConfig,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([0, 0, 0, 0], 8443))
}

fn default_threshold() -> u64 {
    24
}

fn default_sync_period() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub server_id: ServerId,
    pub role: Role,
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    #[serde(default)]
    pub peers: Vec<PeerConfig>,
    #[serde(default)]
    pub homed_users: Vec<DoctorId>,
    #[serde(default = "default_threshold")]
    pub staleness_threshold_hours: u64,
    #[serde(default = "default_sync_period")]
    pub sync_period_secs: u64,
    #[serde(default)]
    pub tls: Option<TlsConfig>,
    #[serde(default)]
    pub transports: TransportsConfig,
    /// Allows plain HTTP for local testing.
    #[serde(default)]
    pub test_mode: bool,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.staleness_threshold_hours == 0 {
            return Err(ConfigError::ZeroThreshold);
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.peers {
            if p.id == self.server_id {
                return Err(ConfigError::SelfPeer);
            }
            if !seen.insert(&p.id) {
                return Err(ConfigError::DuplicatePeer(p.id.clone()));
            }
            if !self.test_mode && !p.url.starts_with("https://") {
                return Err(ConfigError::PlainPeer(p.id.clone()));
            }
        }
        if !self.test_mode && self.tls.is_none() {
            return Err(ConfigError::TlsRequired);
        }
        Ok(())
    }

    pub fn log_path(&self) -> PathBuf {
        self.data_dir.join("events.jsonl")
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.data_dir.join("snapshot.json")
    }
}
