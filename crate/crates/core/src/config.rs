//! Deployment configuration, one TOML file.
//!
//! ```toml
//! [store]
//! path = "uclog.db"
//!
//! [ingest]
//! drop_dir = "drop"
//! allowed_senders = ["sensor0@alerts.example.edu"]
//! resolver = "system"          # or "none"
//!
//! [correlator]
//! cache_dir = "flow-cache"
//! max_parallel_per_source = 2
//!
//! [sources.netflow]
//! display_name = "Border NetFlow"
//! transport = "remote"
//! endpoint = "logs@flowhost"
//! path_pattern = "/data/flows/{date}.flows"
//! command_template = "flowgrep.sh {path} {ip} {start} {end}"
//! cache_ttl = 0
//!
//! [api]
//! listen = "127.0.0.1:8080"
//! session_ttl_secs = 3600
//!
//! [auth]
//! strict_binary = false
//! admin_user = "admin"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::auth::{AccessPolicy, PasswordHasher, DEFAULT_PBKDF2_ROUNDS};
use crate::clock::Clock;
use crate::correlator::{
    Correlator, CorrelatorError, FlowCache, LogSource, SshRunner, TransportKind, DEFAULT_MAX_PARALLEL_PER_SOURCE,
};
use crate::ingest::{NoResolver, Resolver, SenderPolicy, SystemResolver};
use crate::store::Store;

pub const CONFIG_ENV: &str = "UCLOG_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("no configuration file given and {CONFIG_ENV} is not set")]
    Missing,
    #[error("flow cache {path}: {source}")]
    Cache { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolverKind {
    #[default]
    System,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub drop_dir: Option<PathBuf>,
    pub allowed_senders: Option<Vec<String>>,
    #[serde(default)]
    pub resolver: ResolverKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorSection {
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_parallel")]
    pub max_parallel_per_source: usize,
    #[serde(default = "default_ssh")]
    pub ssh_program: String,
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("flow-cache")
}

fn default_parallel() -> usize {
    DEFAULT_MAX_PARALLEL_PER_SOURCE
}

fn default_ssh() -> String {
    "ssh".into()
}

impl Default for CorrelatorSection {
    fn default() -> Self {
        Self {
            cache_dir: default_cache_dir(),
            max_parallel_per_source: default_parallel(),
            ssh_program: default_ssh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub display_name: Option<String>,
    #[serde(default)]
    pub transport: TransportKind,
    pub endpoint: Option<String>,
    pub path_pattern: String,
    pub command_template: String,
    #[serde(default)]
    pub cache_ttl: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSection {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_session_ttl")]
    pub session_ttl_secs: u64,
    pub static_dir: Option<PathBuf>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_session_ttl() -> u64 {
    3600
}

impl Default for ApiSection {
    fn default() -> Self {
        Self {
            listen: default_listen(),
            session_ttl_secs: default_session_ttl(),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthSection {
    #[serde(default)]
    pub strict_binary: bool,
    #[serde(default = "default_admin")]
    pub admin_user: String,
    #[serde(default = "default_rounds")]
    pub pbkdf2_rounds: u32,
}

fn default_admin() -> String {
    "admin".into()
}

fn default_rounds() -> u32 {
    DEFAULT_PBKDF2_ROUNDS
}

impl Default for AuthSection {
    fn default() -> Self {
        Self {
            strict_binary: false,
            admin_user: default_admin(),
            pbkdf2_rounds: default_rounds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub store: StoreSection,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub correlator: CorrelatorSection,
    #[serde(default)]
    pub sources: BTreeMap<String, SourceSection>,
    #[serde(default)]
    pub api: ApiSection,
    #[serde(default)]
    pub auth: AuthSection,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    /// Parses configuration text; relative paths are taken from `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base.to_path_buf(),
            source: Box::new(e),
        })?;
        absolutize(base, &mut cfg.store.path);
        if let Some(d) = cfg.ingest.drop_dir.as_mut() {
            absolutize(base, d);
        }
        absolutize(base, &mut cfg.correlator.cache_dir);
        if let Some(d) = cfg.api.static_dir.as_mut() {
            absolutize(base, d);
        }
        if cfg.correlator.max_parallel_per_source == 0 {
            return Err(ConfigError::Invalid("correlator.max_parallel_per_source must be at least 1".into()));
        }
        for s in cfg.log_sources() {
            s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    /// Loads the explicit path, or the one named by `UCLOG_CONFIG`.
    pub fn locate(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) => Self::load(Path::new(&p)),
                None => Err(ConfigError::Missing),
            },
        }
    }

    pub fn log_sources(&self) -> Vec<LogSource> {
        self.sources
            .iter()
            .map(|(id, s)| LogSource {
                source_id: id.clone(),
                display_name: s.display_name.clone().unwrap_or_else(|| id.clone()),
                transport: s.transport,
                endpoint: s.endpoint.clone(),
                path_pattern: s.path_pattern.clone(),
                command_template: s.command_template.clone(),
                cache_ttl: s.cache_ttl,
            })
            .collect()
    }

    pub fn sender_policy(&self) -> SenderPolicy {
        SenderPolicy {
            allowed_senders: self.ingest.allowed_senders.clone(),
            signature: None,
        }
    }

    pub fn access_policy(&self) -> AccessPolicy {
        AccessPolicy {
            strict_binary: self.auth.strict_binary,
        }
    }

    pub fn password_hasher(&self) -> PasswordHasher {
        PasswordHasher {
            rounds: self.auth.pbkdf2_rounds,
        }
    }

    pub fn resolver(&self) -> Arc<dyn Resolver> {
        match self.ingest.resolver {
            ResolverKind::System => Arc::new(SystemResolver),
            ResolverKind::None => Arc::new(NoResolver),
        }
    }

    /// Correlator over the configured sources and cache, auditing into `store`.
    pub fn correlator(&self, store: Arc<Store>, clock: Arc<dyn Clock>) -> Result<Correlator, ConfigError> {
        let cache = FlowCache::open(&self.correlator.cache_dir).map_err(|source| ConfigError::Cache {
            path: self.correlator.cache_dir.clone(),
            source,
        })?;
        let ssh = SshRunner {
            program: self.correlator.ssh_program.clone(),
            ..SshRunner::default()
        };
        Ok(Correlator::new(self.log_sources(), cache)?
            .with_remote_runner(Arc::new(ssh))
            .with_store(store)
            .with_clock(clock)
            .with_max_parallel(self.correlator.max_parallel_per_source))
    }
}
