//! Carrier codecs: constructor arguments to and from wire fields.

use super::config::{Carrier, Codec, Transform};
use super::value::{escape, escape_segment, join_pairs, parse_pairs, unescape, HeaderSet, UrlValue, Value};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    /// The value does not have the shape of this constructor; not fatal.
    #[error("no match: {0}")]
    Mismatch(String),
    #[error("malformed carrier: {0}")]
    Malformed(String),
}

pub const FORM: &str = "application/x-www-form-urlencoded";
pub const JSON: &str = "application/json";

fn to_wire(v: &Value, t: Transform) -> Result<String, CodecError> {
    match t {
        Transform::String => Ok(v.to_string()),
        Transform::Url => match v {
            Value::Url(u) => Ok(u.to_string()),
            Value::Str(s) => UrlValue::parse(s).map(|_| s.clone()).map_err(CodecError::Malformed),
            other => Err(CodecError::Malformed(format!("`{other}` is not a url"))),
        },
        Transform::Integer => {
            let s = v.to_string();
            integer(&s).map(|_| s)
        }
    }
}

fn integer(s: &str) -> Result<i64, CodecError> {
    match s.parse::<i64>() {
        Ok(n) if n.to_string() == s => Ok(n),
        _ => Err(CodecError::Malformed(format!("`{s}` is not an integer"))),
    }
}

fn from_wire(s: &str, t: Transform) -> Result<Value, CodecError> {
    match t {
        Transform::String => Ok(Value::Str(s.to_string())),
        Transform::Url => UrlValue::parse(s).map(Value::Url).map_err(CodecError::Malformed),
        Transform::Integer => integer(s).map(|n| Value::Str(n.to_string())),
    }
}

fn pairs(codec: &Codec, args: &[Value]) -> Result<Vec<(String, String)>, CodecError> {
    if args.len() != codec.fields.len() {
        return Err(CodecError::Malformed(format!("expected {} arguments, got {}", codec.fields.len(), args.len())));
    }
    let mut out = codec.tag.clone();
    for ((name, t), v) in codec.fields.iter().zip(args) {
        out.push((name.clone(), to_wire(v, *t)?));
    }
    Ok(out)
}

/// Builds the wire value of `ctor(args)`.
pub fn encode(codec: &Codec, args: &[Value]) -> Result<Value, CodecError> {
    let fields = pairs(codec, args)?;
    Ok(match codec.carrier {
        Carrier::QueryString | Carrier::Header | Carrier::Cookie => Value::Fields(codec.carrier, fields),
        Carrier::FormBody => Value::Body { content_type: FORM.into(), bytes: join_pairs(&fields, "&").into_bytes() },
        Carrier::JsonBody => Value::Body { content_type: JSON.into(), bytes: json_text(codec, &fields).into_bytes() },
        Carrier::PathSegment => Value::Str(path_text(codec, &fields)),
    })
}

fn json_text(codec: &Codec, fields: &[(String, String)]) -> String {
    let mut map = serde_json::Map::new();
    for (i, (k, v)) in fields.iter().enumerate() {
        let numeric = i >= codec.tag.len() && codec.fields[i - codec.tag.len()].1 == Transform::Integer;
        let jv = match v.parse::<i64>() {
            Ok(n) if numeric => serde_json::Value::from(n),
            _ => serde_json::Value::String(v.clone()),
        };
        map.insert(k.clone(), jv);
    }
    serde_json::Value::Object(map).to_string()
}

fn path_text(codec: &Codec, fields: &[(String, String)]) -> String {
    let mut out = codec.prefix.clone().unwrap_or_default();
    for (_, v) in fields.iter().skip(codec.tag.len()) {
        out.push('/');
        out.push_str(&escape_segment(v));
    }
    out
}

/// Serialized carrier text, as written on the wire.
pub fn encode_wire(codec: &Codec, args: &[Value]) -> Result<String, CodecError> {
    let fields = pairs(codec, args)?;
    Ok(match codec.carrier {
        Carrier::QueryString | Carrier::FormBody => join_pairs(&fields, "&"),
        Carrier::JsonBody => json_text(codec, &fields),
        Carrier::PathSegment => path_text(codec, &fields),
        Carrier::Header => {
            for (k, v) in &fields {
                if k.contains([':', '\r', '\n']) || v.contains(['\r', '\n']) {
                    return Err(CodecError::Malformed(format!("header `{k}` cannot carry `{v}`")));
                }
            }
            fields.iter().map(|(k, v)| format!("{k}: {v}\r\n")).collect()
        }
        Carrier::Cookie => fields.iter().map(|(k, v)| format!("{k}={}", escape(v))).collect::<Vec<_>>().join("; "),
    })
}

/// Parses serialized carrier text into the value `decode` accepts.
pub fn parse_wire(carrier: Carrier, text: &str) -> Result<Value, CodecError> {
    Ok(match carrier {
        Carrier::QueryString => Value::Fields(carrier, parse_pairs(text, '&').map_err(CodecError::Malformed)?),
        Carrier::FormBody => Value::Body { content_type: FORM.into(), bytes: text.as_bytes().to_vec() },
        Carrier::JsonBody => Value::Body { content_type: JSON.into(), bytes: text.as_bytes().to_vec() },
        Carrier::PathSegment => Value::Str(text.to_string()),
        Carrier::Header => {
            let mut headers = Vec::new();
            for line in text.split("\r\n").filter(|l| !l.is_empty()) {
                let (k, v) = line
                    .split_once(':')
                    .ok_or_else(|| CodecError::Malformed(format!("header line `{line}` has no colon")))?;
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            Value::Fields(carrier, headers)
        }
        Carrier::Cookie => Value::Fields(carrier, parse_cookie(text)?),
    })
}

pub fn parse_cookie(text: &str) -> Result<Vec<(String, String)>, CodecError> {
    text.split(';')
        .map(str::trim)
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            Ok((k.to_string(), unescape(v).map_err(CodecError::Malformed)?))
        })
        .collect()
}

pub fn decode_wire(codec: &Codec, text: &str) -> Result<Vec<Value>, CodecError> {
    decode(codec, &parse_wire(codec.carrier, text)?)
}

fn wire_fields(codec: &Codec, v: &Value) -> Result<Vec<(String, String)>, CodecError> {
    let mismatch = || CodecError::Mismatch(format!("`{v}` is not a {:?} carrier", codec.carrier));
    match (codec.carrier, v) {
        (Carrier::QueryString | Carrier::FormBody, Value::Fields(Carrier::QueryString | Carrier::FormBody, fs)) => {
            Ok(fs.clone())
        }
        (Carrier::QueryString | Carrier::FormBody, Value::Body { content_type, bytes })
            if content_type.starts_with(FORM) =>
        {
            parse_pairs(&String::from_utf8_lossy(bytes), '&').map_err(CodecError::Malformed)
        }
        (Carrier::JsonBody, Value::Body { bytes, .. }) => {
            let parsed: serde_json::Value = serde_json::from_slice(bytes).map_err(|_| mismatch())?;
            let serde_json::Value::Object(map) = parsed else {
                return Err(mismatch());
            };
            Ok(map
                .into_iter()
                .map(|(k, v)| match v {
                    serde_json::Value::String(s) => (k, s),
                    other => (k, other.to_string()),
                })
                .collect())
        }
        (Carrier::Header, Value::Fields(Carrier::Header, fs)) => Ok(fs.clone()),
        (Carrier::Header, Value::Headers(HeaderSet { headers, .. })) => Ok(headers.clone()),
        (Carrier::Cookie, Value::Fields(Carrier::Cookie, fs)) => Ok(fs.clone()),
        (Carrier::Cookie, Value::Headers(HeaderSet { cookies, .. })) => Ok(cookies.clone()),
        _ => Err(mismatch()),
    }
}

/// Splits a wire value into the constructor's arguments.
pub fn decode(codec: &Codec, v: &Value) -> Result<Vec<Value>, CodecError> {
    if codec.carrier == Carrier::PathSegment {
        return decode_path(codec, v);
    }
    let fields = wire_fields(codec, v)?;
    let ci = matches!(codec.carrier, Carrier::Header);
    let lookup = |name: &str| {
        fields.iter().find(|(k, _)| if ci { k.eq_ignore_ascii_case(name) } else { k == name }).map(|(_, v)| v)
    };
    for (k, expected) in &codec.tag {
        if lookup(k) != Some(expected) {
            return Err(CodecError::Mismatch(format!("tag `{k}` is not `{expected}`")));
        }
    }
    if matches!(codec.carrier, Carrier::QueryString | Carrier::FormBody | Carrier::JsonBody) {
        let expected = codec.tag.len() + codec.fields.len();
        if fields.len() != expected {
            return Err(CodecError::Mismatch(format!("expected {expected} fields, found {}", fields.len())));
        }
    }
    codec
        .fields
        .iter()
        .map(|(name, t)| match lookup(name) {
            Some(raw) => from_wire(raw, *t),
            None => Err(CodecError::Mismatch(format!("missing field `{name}`"))),
        })
        .collect()
}

fn decode_path(codec: &Codec, v: &Value) -> Result<Vec<Value>, CodecError> {
    let Value::Str(path) = v else {
        return Err(CodecError::Mismatch(format!("`{v}` is not a path")));
    };
    let prefix = codec.prefix.as_deref().unwrap_or("");
    let rest = path.strip_prefix(prefix).ok_or_else(|| CodecError::Mismatch(format!("`{path}` lacks `{prefix}`")))?;
    let segments: Vec<&str> = if rest.is_empty() {
        Vec::new()
    } else if let Some(r) = rest.strip_prefix('/') {
        r.split('/').collect()
    } else {
        return Err(CodecError::Mismatch(format!("`{path}` lacks `{prefix}`")));
    };
    if segments.len() != codec.fields.len() {
        return Err(CodecError::Mismatch(format!("expected {} segments in `{path}`", codec.fields.len())));
    }
    segments
        .iter()
        .zip(&codec.fields)
        .map(|(seg, (_, t))| from_wire(&unescape(seg).map_err(CodecError::Malformed)?, *t))
        .collect()
}
