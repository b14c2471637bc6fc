use std::fmt;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use super::config::Carrier;

/// Bytes escaped inside query, form and cookie components.
const COMPONENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'&')
    .add(b'+')
    .add(b';')
    .add(b',')
    .add(b'<')
    .add(b'=')
    .add(b'>')
    .add(b'?')
    .add(b'[')
    .add(b'\\')
    .add(b']')
    .add(b'^')
    .add(b'`')
    .add(b'{')
    .add(b'|')
    .add(b'}');

/// Path segments additionally escape `/`.
const SEGMENT: &AsciiSet = &COMPONENT.add(b'/');

pub fn escape(s: &str) -> String {
    utf8_percent_encode(s, COMPONENT).to_string()
}

pub fn escape_segment(s: &str) -> String {
    utf8_percent_encode(s, SEGMENT).to_string()
}

pub fn unescape(s: &str) -> Result<String, String> {
    let spaced = s.replace('+', " ");
    percent_decode_str(&spaced)
        .decode_utf8()
        .map(|c| c.into_owned())
        .map_err(|_| format!("invalid percent-encoding in `{s}`"))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UrlValue {
    pub scheme: String,
    pub host: String,
    pub path: String,
    pub query: Vec<(String, String)>,
    /// Written without `scheme://` on the wire.
    #[serde(default)]
    pub bare: bool,
}

impl UrlValue {
    pub fn parse(s: &str) -> Result<UrlValue, String> {
        let s = s.split('#').next().unwrap_or_default();
        let (scheme, rest, bare) = match s.split_once("://") {
            Some((sc, rest))
                if !sc.is_empty() && sc.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c)) =>
            {
                (sc.to_string(), rest, false)
            }
            Some(_) => return Err(format!("invalid url `{s}`")),
            None => ("https".to_string(), s, true),
        };
        let (hostpath, query) = match rest.split_once('?') {
            Some((a, b)) => (a, Some(b)),
            None => (rest, None),
        };
        let (host, path) = match hostpath.find('/') {
            Some(i) => (&hostpath[..i], &hostpath[i..]),
            None => (hostpath, ""),
        };
        if host.is_empty() || host.contains(char::is_whitespace) {
            return Err(format!("invalid url `{s}`"));
        }
        Ok(UrlValue {
            scheme,
            host: host.to_string(),
            path: path.to_string(),
            query: match query {
                Some(q) => parse_pairs(q, '&')?,
                None => Vec::new(),
            },
            bare,
        })
    }

    pub fn origin(&self) -> String {
        format!("{}://{}", self.scheme, self.host)
    }

    /// Path plus query string, as sent in a request line.
    pub fn target(&self) -> String {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        if self.query.is_empty() {
            path.to_string()
        } else {
            format!("{path}?{}", join_pairs(&self.query, "&"))
        }
    }
}

impl fmt::Display for UrlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.bare {
            write!(f, "{}://", self.scheme)?;
        }
        write!(f, "{}{}", self.host, self.path)?;
        if !self.query.is_empty() {
            write!(f, "?{}", join_pairs(&self.query, "&"))?;
        }
        Ok(())
    }
}

pub fn parse_pairs(s: &str, sep: char) -> Result<Vec<(String, String)>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(sep)
        .map(str::trim_start)
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            Ok((unescape(k)?, unescape(v)?))
        })
        .collect()
}

pub fn join_pairs(pairs: &[(String, String)], sep: &str) -> String {
    pairs.iter().map(|(k, v)| format!("{}={}", escape(k), escape(v))).collect::<Vec<_>>().join(sep)
}

/// Request headers as seen by a monitor.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeaderSet {
    pub headers: Vec<(String, String)>,
    pub cookies: Vec<(String, String)>,
}

impl HeaderSet {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn cookie(&self, name: &str) -> Option<&str> {
        self.cookies.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

/// Runtime image of a term.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Value {
    Str(String),
    Url(UrlValue),
    /// Carrier fields in wire order.
    Fields(Carrier, Vec<(String, String)>),
    Body {
        content_type: String,
        bytes: Vec<u8>,
    },
    Headers(HeaderSet),
    Ctor(String, Vec<Value>),
    Tuple(Vec<Value>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Representation-independent form used for equality and table storage.
    pub fn canon(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            Value::Url(u) => {
                let mut q = u.query.clone();
                q.sort();
                let path = if u.path.is_empty() { "/" } else { &u.path };
                format!("{}://{}{}?{}", u.scheme, u.host.to_ascii_lowercase(), path, join_pairs(&q, "&"))
            }
            Value::Fields(_, fs) => {
                let mut fs = fs.clone();
                fs.sort();
                format!("{{{}}}", join_pairs(&fs, "&"))
            }
            Value::Body { content_type, bytes } => canon_body(content_type, bytes),
            Value::Headers(h) => {
                let mut hs: Vec<_> = h.headers.iter().map(|(k, v)| (k.to_ascii_lowercase(), v.clone())).collect();
                hs.sort();
                format!("headers{hs:?}{:?}", h.cookies)
            }
            Value::Ctor(f, args) => {
                format!("{f}({})", args.iter().map(Value::canon).collect::<Vec<_>>().join(","))
            }
            Value::Tuple(vs) => format!("({})", vs.iter().map(Value::canon).collect::<Vec<_>>().join(",")),
        }
    }

    pub fn same(&self, other: &Value) -> bool {
        self == other || self.canon() == other.canon()
    }
}

fn canon_body(content_type: &str, bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    if content_type.starts_with("application/json") {
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&text) {
            let mut fs: Vec<(String, String)> = map
                .into_iter()
                .map(|(k, v)| match v {
                    serde_json::Value::String(s) => (k, s),
                    other => (k, other.to_string()),
                })
                .collect();
            fs.sort();
            return format!("{{{}}}", join_pairs(&fs, "&"));
        }
    }
    if content_type.starts_with("application/x-www-form-urlencoded") {
        if let Ok(mut fs) = parse_pairs(&text, '&') {
            fs.sort();
            return format!("{{{}}}", join_pairs(&fs, "&"));
        }
    }
    format!("body:{text}")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => write!(f, "{s}"),
            Value::Url(u) => write!(f, "{u}"),
            Value::Body { bytes, .. } => write!(f, "{}", String::from_utf8_lossy(bytes)),
            other => write!(f, "{}", other.canon()),
        }
    }
}
