//! Conversions between [`HttpMessage`] and the axum / reqwest types.

use axum::body::Body;
use axum::http::{HeaderName, HeaderValue, Request, Response, StatusCode};

use super::message::{Direction, HttpMessage};

pub const BODY_LIMIT: usize = 1 << 20;

const HOP: &[&str] = &["host", "content-length", "connection", "transfer-encoding", "proxy-connection", "keep-alive"];

fn skip(name: &str) -> bool {
    HOP.iter().any(|h| name.eq_ignore_ascii_case(h))
}

/// Reads an incoming request. Absolute-form targets (forward proxying)
/// keep their own host; origin-form ones use the `Host` header.
pub async fn from_axum(req: Request<Body>, scheme: &str) -> Result<HttpMessage, String> {
    let (parts, body) = req.into_parts();
    let bytes = axum::body::to_bytes(body, BODY_LIMIT).await.map_err(|e| format!("request body: {e}"))?;
    let host = match parts.uri.authority() {
        Some(a) => a.to_string(),
        None => parts.headers.get("host").and_then(|h| h.to_str().ok()).unwrap_or_default().to_string(),
    };
    let scheme = parts.uri.scheme_str().unwrap_or(scheme).to_string();
    let mut msg = HttpMessage {
        direction: Direction::Request,
        method: parts.method.to_string(),
        scheme,
        host,
        path: parts.uri.path().to_string(),
        query: match parts.uri.query() {
            Some(q) => super::value::parse_pairs(q, '&')?,
            None => Vec::new(),
        },
        headers: Vec::new(),
        cookies: Vec::new(),
        body: bytes.to_vec(),
        status: None,
        corr: 0,
    };
    for (k, v) in &parts.headers {
        let v = v.to_str().unwrap_or_default();
        if k.as_str() == "cookie" {
            msg.add_cookie_header(v);
        } else if !skip(k.as_str()) {
            msg.headers.push((k.to_string(), v.to_string()));
        }
    }
    Ok(msg)
}

pub fn to_axum(msg: &HttpMessage) -> Response<Body> {
    let mut resp = Response::new(Body::from(msg.body.clone()));
    *resp.status_mut() = StatusCode::from_u16(msg.status.unwrap_or(200)).unwrap_or(StatusCode::BAD_GATEWAY);
    for (k, v) in &msg.headers {
        if skip(k) {
            continue;
        }
        if let (Ok(k), Ok(v)) = (HeaderName::try_from(k.as_str()), HeaderValue::from_str(v)) {
            resp.headers_mut().append(k, v);
        }
    }
    resp
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder().no_proxy().redirect(reqwest::redirect::Policy::none()).build().expect("http client")
}

/// Client whose requests all go through the forward proxy at `proxy`.
pub fn proxied_client(proxy: &str) -> reqwest::Client {
    reqwest::Client::builder()
        .proxy(reqwest::Proxy::all(proxy).expect("proxy url"))
        .redirect(reqwest::redirect::Policy::none())
        .build()
        .expect("http client")
}

pub async fn send(client: &reqwest::Client, msg: &HttpMessage) -> Result<HttpMessage, String> {
    let url = format!("{}://{}{}", msg.scheme, msg.host, msg.url().target());
    let method = reqwest::Method::from_bytes(msg.method.as_bytes()).map_err(|e| e.to_string())?;
    let mut req = client.request(method, &url);
    for (k, v) in &msg.headers {
        if !skip(k) {
            req = req.header(k.as_str(), v.as_str());
        }
    }
    if let Some(c) = msg.cookie_header() {
        req = req.header("cookie", c);
    }
    if !msg.body.is_empty() {
        req = req.body(msg.body.clone());
    }
    let resp = req.send().await.map_err(|e| format!("{url}: {e}"))?;
    let mut out = HttpMessage::response(resp.status().as_u16());
    for (k, v) in resp.headers() {
        if !skip(k.as_str()) {
            out.headers.push((k.to_string(), v.to_str().unwrap_or_default().to_string()));
        }
    }
    out.body = resp.bytes().await.map_err(|e| e.to_string())?.to_vec();
    out.corr = msg.corr;
    Ok(out)
}
