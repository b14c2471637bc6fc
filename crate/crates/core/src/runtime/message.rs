//! Language-neutral HTTP messages and their image as monitor values.

use serde::{Deserialize, Serialize};

use super::codec::{parse_cookie, FORM};
use super::config::ProtocolConfig;
use super::value::{HeaderSet, UrlValue, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Request,
    Response,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpMessage {
    pub direction: Direction,
    pub method: String,
    pub scheme: String,
    pub host: String,
    pub path: String,
    pub query: Vec<(String, String)>,
    /// Every header except `Cookie`, which is split into `cookies`.
    pub headers: Vec<(String, String)>,
    pub cookies: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub status: Option<u16>,
    pub corr: u64,
}

impl HttpMessage {
    pub fn request(method: &str, url: &UrlValue) -> HttpMessage {
        HttpMessage {
            direction: Direction::Request,
            method: method.to_string(),
            scheme: url.scheme.clone(),
            host: url.host.clone(),
            path: if url.path.is_empty() { "/".into() } else { url.path.clone() },
            query: url.query.clone(),
            headers: Vec::new(),
            cookies: Vec::new(),
            body: Vec::new(),
            status: None,
            corr: 0,
        }
    }

    pub fn response(status: u16) -> HttpMessage {
        HttpMessage {
            direction: Direction::Response,
            method: String::new(),
            scheme: String::new(),
            host: String::new(),
            path: String::new(),
            query: Vec::new(),
            headers: Vec::new(),
            cookies: Vec::new(),
            body: Vec::new(),
            status: Some(status),
            corr: 0,
        }
    }

    pub fn url(&self) -> UrlValue {
        UrlValue {
            scheme: self.scheme.clone(),
            host: self.host.clone(),
            path: self.path.clone(),
            query: self.query.clone(),
            bare: false,
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn set_header(&mut self, name: &str, value: impl Into<String>) {
        self.headers.retain(|(k, _)| !k.eq_ignore_ascii_case(name));
        self.headers.push((name.to_string(), value.into()));
    }

    pub fn remove_header(&mut self, name: &str) {
        self.headers.retain(|(k, _)| !k.eq_ignore_ascii_case(name));
    }

    pub fn content_type(&self) -> &str {
        self.header("content-type").unwrap_or_default()
    }

    /// Value of the session cookie set by this response, if any.
    pub fn set_cookie(&self, name: &str) -> Option<String> {
        self.headers.iter().filter(|(k, _)| k.eq_ignore_ascii_case("set-cookie")).find_map(|(_, v)| {
            let first = v.split(';').next()?;
            let (k, val) = first.split_once('=')?;
            (k.trim() == name).then(|| val.trim().to_string())
        })
    }

    pub fn add_cookie_header(&mut self, raw: &str) {
        if let Ok(cs) = parse_cookie(raw) {
            self.cookies.extend(cs);
        }
    }

    pub fn cookie_header(&self) -> Option<String> {
        if self.cookies.is_empty() {
            None
        } else {
            Some(self.cookies.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("; "))
        }
    }

    pub fn corr_value(&self) -> Value {
        Value::str(format!("corr-{}", self.corr))
    }
}

pub fn corr_of(v: &Value) -> Option<u64> {
    v.as_str()?.strip_prefix("corr-")?.parse().ok()
}

pub fn method_value(msg: &HttpMessage) -> Value {
    match msg.method.as_str() {
        "GET" => Value::Ctor("httpGet".into(), Vec::new()),
        "POST" => Value::Ctor(
            "httpPost".into(),
            vec![Value::Body {
                content_type: if msg.content_type().is_empty() { FORM.into() } else { msg.content_type().into() },
                bytes: msg.body.clone(),
            }],
        ),
        other => Value::Ctor("httpMethod".into(), vec![Value::str(other)]),
    }
}

pub fn header_value(msg: &HttpMessage) -> Value {
    Value::Headers(HeaderSet { headers: msg.headers.clone(), cookies: msg.cookies.clone() })
}

/// `(uri, headers, method, corr)`, the image of a request.
pub fn request_value(msg: &HttpMessage) -> Value {
    Value::Tuple(vec![Value::Url(msg.url()), header_value(msg), method_value(msg), msg.corr_value()])
}

/// The response component: `httpOk(body)`, `httpRedirect(uri)` or `httpStatus(code)`.
pub fn response_body_value(msg: &HttpMessage) -> Value {
    let status = msg.status.unwrap_or(200);
    match status {
        200 => Value::Ctor(
            "httpOk".into(),
            vec![Value::Body { content_type: msg.content_type().to_string(), bytes: msg.body.clone() }],
        ),
        301 | 302 | 303 | 307 | 308 => match msg.header("location").map(UrlValue::parse) {
            Some(Ok(u)) => Value::Ctor("httpRedirect".into(), vec![Value::Url(u)]),
            _ => Value::Ctor("httpStatus".into(), vec![Value::str(status.to_string())]),
        },
        _ => Value::Ctor("httpStatus".into(), vec![Value::str(status.to_string())]),
    }
}

/// `(uri, response, cookie, referrer policy, corr)`, the image of a response
/// to a request for `url` that carried `cookie`.
pub fn response_value(url: &UrlValue, cookie: &str, msg: &HttpMessage, cfg: &ProtocolConfig) -> Value {
    let cookie = msg.set_cookie(&cfg.session_cookie).unwrap_or_else(|| cookie.to_string());
    Value::Tuple(vec![
        Value::Url(url.clone()),
        response_body_value(msg),
        Value::Str(cookie),
        Value::str(msg.header("referrer-policy").unwrap_or_default()),
        msg.corr_value(),
    ])
}

/// Writes a request tuple back to a message, starting from `template`.
pub fn request_from_value(v: &Value, template: Option<&HttpMessage>, cfg: &ProtocolConfig) -> Option<HttpMessage> {
    let Value::Tuple(parts) = v else { return None };
    let [u, hs, m, corr] = parts.as_slice() else { return None };
    let Value::Url(url) = u else { return None };
    let mut msg = match template {
        Some(t) => {
            let mut t = t.clone();
            t.scheme = url.scheme.clone();
            t.host = url.host.clone();
            t.path = if url.path.is_empty() { "/".into() } else { url.path.clone() };
            t.query = url.query.clone();
            t
        }
        None => HttpMessage::request("GET", url),
    };
    msg.corr = corr_of(corr).unwrap_or(msg.corr);
    match hs {
        Value::Headers(h) => {
            msg.headers = h.headers.clone();
            msg.cookies = h.cookies.clone();
        }
        Value::Ctor(f, parts) if f == "headers" && parts.len() == 3 => {
            if let Value::Url(r) = &parts[0] {
                msg.set_header("Referer", r.to_string());
            }
            let cookie = parts[1].to_string();
            msg.cookies.retain(|(k, _)| k != &cfg.session_cookie);
            if !cookie.is_empty() {
                msg.cookies.push((cfg.session_cookie.clone(), cookie));
            }
        }
        _ => {}
    }
    match m {
        Value::Ctor(f, _) if f == "httpGet" => {
            msg.method = "GET".into();
            msg.body.clear();
        }
        Value::Ctor(f, args) if f == "httpPost" => {
            msg.method = "POST".into();
            match args.first() {
                Some(Value::Body { content_type, bytes }) => {
                    msg.body = bytes.clone();
                    msg.set_header("Content-Type", content_type.clone());
                }
                Some(Value::Fields(_, fs)) => {
                    msg.body = super::value::join_pairs(fs, "&").into_bytes();
                    msg.set_header("Content-Type", FORM);
                }
                _ => {}
            }
        }
        Value::Ctor(f, args) if f == "httpMethod" => msg.method = args.first()?.to_string(),
        _ => return None,
    }
    Some(msg)
}

/// Writes a response tuple back to a message, starting from `template`.
/// `request_cookie` is the session cookie the answered request carried.
pub fn response_from_value(
    v: &Value,
    template: Option<&HttpMessage>,
    request_cookie: &str,
    cfg: &ProtocolConfig,
) -> Option<HttpMessage> {
    let Value::Tuple(parts) = v else { return None };
    let [_, resp, cookie, policy, corr] = parts.as_slice() else { return None };
    let mut msg = template.cloned().unwrap_or_else(|| HttpMessage::response(200));
    msg.corr = corr_of(corr).unwrap_or(msg.corr);
    let unchanged = template.is_some_and(|t| response_body_value(t).same(resp));
    if !unchanged {
        match resp {
            Value::Ctor(f, args) if f == "httpOk" => {
                msg.status = Some(200);
                msg.remove_header("location");
                match args.first() {
                    Some(Value::Body { content_type, bytes }) => {
                        msg.body = bytes.clone();
                        msg.set_header("Content-Type", content_type.clone());
                    }
                    Some(other) => {
                        msg.body = other.to_string().into_bytes();
                        msg.set_header("Content-Type", "text/plain");
                    }
                    None => msg.body.clear(),
                }
            }
            Value::Ctor(f, args) if f == "httpRedirect" => {
                msg.status = Some(302);
                msg.body.clear();
                msg.set_header("Location", args.first()?.to_string());
            }
            Value::Ctor(f, args) if f == "httpStatus" => {
                msg.status = args.first()?.to_string().parse().ok();
            }
            _ => return None,
        }
    }
    let cookie = cookie.to_string();
    let set = msg.set_cookie(&cfg.session_cookie);
    if set.as_deref() != Some(cookie.as_str()) && cookie != request_cookie && !cookie.is_empty() {
        msg.headers.retain(|(k, v)| {
            !(k.eq_ignore_ascii_case("set-cookie") && v.starts_with(&format!("{}=", cfg.session_cookie)))
        });
        msg.headers.push(("Set-Cookie".into(), format!("{}={cookie}; Path=/", cfg.session_cookie)));
    }
    let policy = policy.to_string();
    if !policy.is_empty() {
        msg.set_header("Referrer-Policy", policy);
    }
    Some(msg)
}
