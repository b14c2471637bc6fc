use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Carrier {
    QueryString,
    FormBody,
    JsonBody,
    PathSegment,
    Header,
    Cookie,
}

impl Carrier {
    pub const ALL: [Carrier; 6] = [
        Carrier::QueryString,
        Carrier::FormBody,
        Carrier::JsonBody,
        Carrier::PathSegment,
        Carrier::Header,
        Carrier::Cookie,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    String,
    Url,
    Integer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codec {
    pub carrier: Carrier,
    pub fields: Vec<(String, Transform)>,
    /// Fixed wire fields that identify the constructor, e.g. `["status", "ok"]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tag: Vec<(String, String)>,
    /// Leading path for the path-segment carrier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerConfig {
    #[serde(default)]
    pub origin: String,
    #[serde(default = "default_worker_path")]
    pub path: String,
    #[serde(default = "default_scope")]
    pub scope: String,
}

fn default_worker_path() -> String {
    "/bulwark-sw.js".into()
}

fn default_scope() -> String {
    "/".into()
}

/// Mapping from abstract symbols and constructors to concrete HTTP shapes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    #[serde(default)]
    pub symbols: BTreeMap<String, String>,
    #[serde(default)]
    pub constructors: BTreeMap<String, Codec>,
    #[serde(default = "default_cookie")]
    pub session_cookie: String,
    #[serde(default)]
    pub tables: BTreeMap<String, String>,
    #[serde(default)]
    pub listen: String,
    #[serde(default)]
    pub upstream: String,
    /// Port on which the monitored participant's outgoing requests are intercepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward_listen: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<WorkerConfig>,
}

fn default_cookie() -> String {
    "sid".into()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("constructor `{name}` has {fields} codec fields but arity {arity}")]
    Arity { name: String, fields: usize, arity: usize },
    #[error("no mapping for symbols: {}", .0.join(", "))]
    Missing(Vec<String>),
}

impl ProtocolConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn codec(&self, ctor: &str) -> Option<&Codec> {
        self.constructors.get(ctor)
    }

    pub fn symbol(&self, name: &str) -> Option<&str> {
        self.symbols.get(name).map(String::as_str)
    }

    pub fn worker(&self) -> WorkerConfig {
        self.worker.clone().unwrap_or_else(|| WorkerConfig {
            origin: String::new(),
            path: default_worker_path(),
            scope: default_scope(),
        })
    }
}
