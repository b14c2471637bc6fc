//! A scripted user agent with an optional service-worker per origin.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::runtime::eval::{apply, Env};
use crate::runtime::exec::{Accept, Context, Io, Outcome, Program};
use crate::runtime::http;
use crate::runtime::message::{corr_of, method_value, response_body_value, response_from_value};
use crate::runtime::{Blocked, EventTrace, HttpMessage, ProtocolConfig, TableStore, UrlValue, Value};
use crate::transform::Monitor;

const MAX_REDIRECTS: usize = 10;

struct Worker {
    program: Program,
    base: Env,
    cfg: Arc<ProtocolConfig>,
}

pub struct Browser {
    pub id: String,
    client: reqwest::Client,
    /// Cookies by `host:port`; ports keep same-host servers apart.
    jar: Mutex<BTreeMap<String, BTreeMap<String, String>>>,
    workers: BTreeMap<String, Worker>,
    tables: Arc<TableStore>,
    trace: Arc<EventTrace>,
    blocked: Mutex<Vec<Blocked>>,
    corr: AtomicU64,
}

impl Browser {
    pub fn new(id: impl Into<String>, trace: Arc<EventTrace>) -> Browser {
        Browser {
            id: id.into(),
            client: reqwest::Client::builder()
                .no_proxy()
                .redirect(reqwest::redirect::Policy::none())
                .timeout(Duration::from_secs(20))
                .build()
                .expect("http client"),
            jar: Mutex::new(BTreeMap::new()),
            workers: BTreeMap::new(),
            tables: Arc::new(TableStore::default()),
            trace,
            blocked: Mutex::new(Vec::new()),
            corr: AtomicU64::new(1),
        }
    }

    /// Registers `monitor` as the service worker of `host`.
    pub fn install_worker(&mut self, host: &str, monitor: &Monitor, cfg: Arc<ProtocolConfig>) -> Result<(), String> {
        let program = Program::new(&monitor.process)?;
        let mut env = Env::new();
        if let Some((b, _)) = monitor.process.params.first() {
            env.insert(b.clone(), Value::str(&self.id));
        }
        let base = program.base_env(env, &cfg).map_err(|e| e.to_string())?;
        self.workers.insert(host.to_string(), Worker { program, base, cfg });
        Ok(())
    }

    pub fn has_worker(&self, host: &str) -> bool {
        self.workers.contains_key(host)
    }

    pub fn set_cookie(&self, host: &str, name: &str, value: &str) {
        self.jar.lock().expect("jar").entry(host.to_string()).or_default().insert(name.into(), value.into());
    }

    pub fn cookie(&self, host: &str, name: &str) -> Option<String> {
        self.jar.lock().expect("jar").get(host)?.get(name).cloned()
    }

    pub fn blocked(&self) -> Vec<Blocked> {
        self.blocked.lock().expect("log").clone()
    }

    pub fn event(&self, name: &str, args: Vec<String>) {
        self.trace.append(name, args, &self.id);
    }

    /// Sends `msg` straight to the network with this browser's cookies.
    async fn network(&self, mut msg: HttpMessage) -> Result<HttpMessage, String> {
        if let Some(cs) = self.jar.lock().expect("jar").get(&msg.host) {
            msg.cookies = cs.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        }
        let resp = http::send(&self.client, &msg).await?;
        for (k, v) in &resp.headers {
            if !k.eq_ignore_ascii_case("set-cookie") {
                continue;
            }
            if let Some((name, value)) = v.split(';').next().and_then(|c| c.split_once('=')) {
                self.set_cookie(&msg.host, name.trim(), value.trim());
            }
        }
        Ok(resp)
    }

    /// One request, through the target origin's service worker if it has one.
    pub async fn fetch(&self, msg: HttpMessage) -> Result<HttpMessage, String> {
        match self.workers.get(&msg.host) {
            Some(w) => self.through_worker(w, msg).await,
            None => self.network(msg).await,
        }
    }

    pub async fn get(&self, url: &UrlValue) -> Result<HttpMessage, String> {
        self.fetch(HttpMessage::request("GET", url)).await
    }

    /// Follows redirects from `url`; returns the last url and its response.
    pub async fn navigate(&self, url: &UrlValue) -> Result<(UrlValue, HttpMessage), String> {
        let mut cur = url.clone();
        for _ in 0..MAX_REDIRECTS {
            let resp = self.get(&cur).await?;
            let status = resp.status.unwrap_or(200);
            if !(300..400).contains(&status) {
                return Ok((cur, resp));
            }
            let loc = resp.header("location").ok_or("redirect without location")?;
            cur = UrlValue::parse(loc)?;
        }
        Err(format!("too many redirects from {url}"))
    }

    async fn through_worker(&self, w: &Worker, msg: HttpMessage) -> Result<HttpMessage, String> {
        let referer = match msg.header("referer").map(UrlValue::parse) {
            Some(Ok(u)) => Value::Url(u),
            _ => Value::str(w.cfg.symbol("noneUri").unwrap_or_default()),
        };
        let ajax = apply("notajax", Vec::new(), &w.cfg).map_err(|e| e.to_string())?;
        let fetch = Value::Tuple(vec![Value::Url(msg.url()), method_value(&msg), referer, Value::str(""), ajax]);
        let Some((branch, env)) = w.program.dispatch("serviceWorkerFetch", &fetch, &w.base, &w.cfg) else {
            return self.network(msg).await;
        };
        let path = msg.path.clone();
        let mut io = WorkerIo {
            browser: self,
            cfg: w.cfg.clone(),
            request: msg,
            inbox: VecDeque::new(),
            templates: HashMap::new(),
            answer: None,
        };
        let ctx = Context {
            cfg: w.cfg.clone(),
            tables: self.tables.clone(),
            trace: self.trace.clone(),
            session: self.id.clone(),
        };
        match w.program.run(branch, env, &mut io, &ctx).await {
            Outcome::Blocked { check, reason } => {
                tracing::warn!(browser = %self.id, check, reason, path, "service worker blocked request");
                self.blocked.lock().expect("log").push(Blocked { check: check.clone(), reason, path });
                let mut m = HttpMessage::response(403);
                m.set_header("Content-Type", "text/plain");
                m.set_header("X-Bulwark-Check", format!("failed {check}"));
                m.body = b"Request blocked by security monitor".to_vec();
                Ok(m)
            }
            Outcome::Done => io.answer.ok_or_else(|| "service worker ended without a response".into()),
        }
    }
}

struct WorkerIo<'a> {
    browser: &'a Browser,
    cfg: Arc<ProtocolConfig>,
    request: HttpMessage,
    inbox: VecDeque<(String, Value)>,
    templates: HashMap<u64, HttpMessage>,
    answer: Option<HttpMessage>,
}

impl Io for WorkerIo<'_> {
    async fn send(&mut self, chan: &str, v: Value) -> Result<(), String> {
        let Value::Tuple(parts) = &v else { return Err(format!("`{chan}` expects a tuple")) };
        match (chan, parts.as_slice()) {
            ("rawRequest", [Value::Url(u), m, ..]) => {
                let mut msg = self.request.clone();
                msg.scheme = u.scheme.clone();
                msg.host = u.host.clone();
                msg.path = if u.path.is_empty() { "/".into() } else { u.path.clone() };
                msg.query = u.query.clone();
                match m {
                    Value::Ctor(f, _) if f == "httpGet" => {
                        msg.method = "GET".into();
                        msg.body.clear();
                    }
                    Value::Ctor(f, args) if f == "httpPost" => {
                        msg.method = "POST".into();
                        if let Some(Value::Body { content_type, bytes }) = args.first() {
                            msg.body = bytes.clone();
                            msg.set_header("Content-Type", content_type.clone());
                        }
                    }
                    other => return Err(format!("unsupported method `{other}`")),
                }
                let mut resp = self.browser.network(msg).await?;
                resp.corr = self.browser.corr.fetch_add(1, Ordering::Relaxed);
                let value = Value::Tuple(vec![
                    Value::Url(u.clone()),
                    response_body_value(&resp),
                    Value::str(resp.header("referrer-policy").unwrap_or_default()),
                    Value::str(""),
                    resp.corr_value(),
                ]);
                self.templates.insert(resp.corr, resp);
                self.inbox.push_back(("serviceWorkerResult".into(), value));
                Ok(())
            }
            ("serviceWorkerSendHttpResponse", [u, resp, policy, _, corr]) => {
                let template = corr_of(corr).and_then(|c| self.templates.get(&c));
                let msg = match template {
                    Some(t) if response_body_value(t).same(resp) => t.clone(),
                    _ => {
                        let shaped =
                            Value::Tuple(vec![u.clone(), resp.clone(), Value::str(""), policy.clone(), corr.clone()]);
                        response_from_value(&shaped, template, "", &self.cfg).ok_or("cannot encode worker response")?
                    }
                };
                self.answer = Some(msg);
                Ok(())
            }
            _ => Err(format!("service worker cannot send on `{chan}`")),
        }
    }

    async fn recv(&mut self, chan: &str, accept: Accept) -> Result<Value, String> {
        let i = self
            .inbox
            .iter()
            .position(|(c, v)| c == chan && accept(v))
            .ok_or_else(|| format!("no message on `{chan}`"))?;
        Ok(self.inbox.remove(i).expect("indexed").1)
    }
}
