//! The reverse-proxy deployment of a monitor.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::Request;
use axum::response::Response;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use super::exec::{Accept, Context, Io, Outcome, Program};
use super::http;
use super::message::{corr_of, request_from_value, request_value, response_from_value, response_value, HttpMessage};
use super::table::TableStore;
use super::trace::EventTrace;
use super::value::{UrlValue, Value};
use super::{ProtocolConfig, RuntimeError};
use crate::transform::{relay_map, Monitor, REQUEST, RESPONSE};

pub const WAIT: Duration = Duration::from_secs(10);

/// A check that stopped a request, as written to the structured log.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Blocked {
    pub check: String,
    pub reason: String,
    pub path: String,
}

struct Relays {
    /// Monitor forwards a received request to the participant.
    forward: String,
    /// Participant's answer to a forwarded request.
    answer: String,
    /// Participant's own outgoing request.
    outgoing: String,
    /// Monitor hands the participant the answer to its outgoing request.
    deliver: String,
}

struct Rendezvous {
    value: Value,
    msg: HttpMessage,
    reply: oneshot::Sender<HttpMessage>,
}

struct Waiter {
    accept: Accept,
    tx: oneshot::Sender<Rendezvous>,
}

struct Shared {
    program: Program,
    base: super::eval::Env,
    cfg: Arc<ProtocolConfig>,
    relays: Relays,
    upstream: UrlValue,
    tables: Arc<TableStore>,
    trace: Arc<EventTrace>,
    client: reqwest::Client,
    waiters: Mutex<Vec<Waiter>>,
    corr: AtomicU64,
    blocked: Mutex<Vec<Blocked>>,
}

/// A running proxy. Dropping it stops the listeners.
pub struct ProxyHandle {
    pub listen: SocketAddr,
    pub forward: Option<SocketAddr>,
    shared: Arc<Shared>,
    tasks: Vec<JoinHandle<()>>,
}

impl ProxyHandle {
    pub fn trace(&self) -> Arc<EventTrace> {
        self.shared.trace.clone()
    }

    pub fn tables(&self) -> Arc<TableStore> {
        self.shared.tables.clone()
    }

    pub fn blocked(&self) -> Vec<Blocked> {
        self.shared.blocked.lock().expect("log lock").clone()
    }
}

impl Drop for ProxyHandle {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

pub struct ProxyOptions {
    pub tables: Arc<TableStore>,
    pub trace: Arc<EventTrace>,
    /// Already bound sockets to use instead of `listen` and `forward_listen`.
    pub listener: Option<TcpListener>,
    pub forward_listener: Option<TcpListener>,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        ProxyOptions {
            tables: Arc::new(TableStore::default()),
            trace: Arc::new(EventTrace::default()),
            listener: None,
            forward_listener: None,
        }
    }
}

/// Serves `monitor` in front of `cfg.upstream`, listening on `cfg.listen`
/// and intercepting the participant's own requests on `cfg.forward_listen`.
pub async fn run_proxy(
    monitor: &Monitor,
    cfg: ProtocolConfig,
    opts: ProxyOptions,
) -> Result<ProxyHandle, RuntimeError> {
    let program = Program::new(&monitor.process).map_err(RuntimeError::Monitor)?;
    let missing = super::missing_symbols(&monitor.process, &cfg);
    if !missing.is_empty() {
        return Err(RuntimeError::Config(super::ConfigError::Missing(missing)));
    }
    let relays = relay_map(monitor);
    let pick = |c: &str| relays.get(c).cloned().unwrap_or_else(|| (format!("{c}_out"), format!("{c}_in")));
    let (req_out, req_in) = pick(REQUEST);
    let (resp_out, resp_in) = pick(RESPONSE);
    let upstream = UrlValue::parse(&cfg.upstream).map_err(|e| RuntimeError::Upstream(e.to_string()))?;
    tokio::net::TcpStream::connect(&upstream.host)
        .await
        .map_err(|e| RuntimeError::Upstream(format!("{}: {e}", upstream.host)))?;
    let base = program.base_env(Default::default(), &cfg).map_err(|e| RuntimeError::Monitor(e.to_string()))?;
    let listener = match opts.listener {
        Some(l) => l,
        None => TcpListener::bind(&cfg.listen).await.map_err(|e| RuntimeError::Bind(cfg.listen.clone(), e))?,
    };
    let forward_listener = match (opts.forward_listener, &cfg.forward_listen) {
        (Some(l), _) => Some(l),
        (None, Some(addr)) => Some(TcpListener::bind(addr).await.map_err(|e| RuntimeError::Bind(addr.clone(), e))?),
        (None, None) => None,
    };
    let shared = Arc::new(Shared {
        program,
        base,
        cfg: Arc::new(cfg),
        relays: Relays { forward: req_out, answer: resp_in, outgoing: req_in, deliver: resp_out },
        upstream,
        tables: opts.tables,
        trace: opts.trace,
        client: http::client(),
        waiters: Mutex::new(Vec::new()),
        corr: AtomicU64::new(1),
        blocked: Mutex::new(Vec::new()),
    });
    let listen = listener.local_addr().map_err(|e| RuntimeError::Bind("listen".into(), e))?;
    let mut tasks = Vec::new();
    let app = Router::new().fallback(inbound).with_state(shared.clone());
    tasks.push(tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    }));
    let mut forward = None;
    if let Some(l) = forward_listener {
        forward = Some(l.local_addr().map_err(|e| RuntimeError::Bind("forward".into(), e))?);
        let app = Router::new().fallback(outbound).with_state(shared.clone());
        tasks.push(tokio::spawn(async move {
            let _ = axum::serve(l, app).await;
        }));
    }
    Ok(ProxyHandle { listen, forward, shared, tasks })
}

fn forbidden(check: &str) -> HttpMessage {
    let mut m = HttpMessage::response(403);
    m.set_header("Content-Type", "text/plain");
    m.set_header("X-Bulwark-Check", format!("failed {check}"));
    m.body = b"Request blocked by security monitor".to_vec();
    m
}

fn bad_gateway(reason: &str) -> HttpMessage {
    let mut m = HttpMessage::response(502);
    m.set_header("Content-Type", "text/plain");
    m.body = format!("Bad gateway: {reason}").into_bytes();
    m
}

impl Shared {
    fn next_corr(&self) -> u64 {
        self.corr.fetch_add(1, Ordering::Relaxed)
    }

    fn upstream_msg(&self, mut msg: HttpMessage) -> HttpMessage {
        msg.scheme = self.upstream.scheme.clone();
        msg.host = self.upstream.host.clone();
        msg
    }

    fn log(&self, check: &str, reason: &str, path: &str) {
        tracing::warn!(monitor = %self.program.name, check, reason, path, "request blocked");
        self.blocked.lock().expect("log lock").push(Blocked {
            check: check.to_string(),
            reason: reason.to_string(),
            path: path.to_string(),
        });
    }
}

async fn inbound(State(s): State<Arc<Shared>>, req: Request<Body>) -> Response {
    let mut msg = match http::from_axum(req, "http").await {
        Ok(m) => m,
        Err(e) => return http::to_axum(&bad_gateway(&e)),
    };
    msg.corr = s.next_corr();
    let value = request_value(&msg);
    let Some((branch, env)) = s.program.dispatch(REQUEST, &value, &s.base, &s.cfg) else {
        return match http::send(&s.client, &s.upstream_msg(msg)).await {
            Ok(resp) => http::to_axum(&resp),
            Err(e) => http::to_axum(&bad_gateway(&e)),
        };
    };
    let (tx, rx) = oneshot::channel();
    let path = msg.path.clone();
    let cookie = msg.cookies.iter().find(|(k, _)| *k == s.cfg.session_cookie).map(|(_, v)| v.clone());
    let shared = s.clone();
    tokio::spawn(async move {
        let (mtx, mrx) = mpsc::unbounded_channel();
        let mut io = RequestIo {
            shared: shared.clone(),
            trigger: msg,
            cookie: cookie.unwrap_or_default(),
            reply: Some(tx),
            mailbox_tx: mtx,
            mailbox: mrx,
            stash: Vec::new(),
            templates: HashMap::new(),
            pending: HashMap::new(),
        };
        let ctx = Context {
            cfg: shared.cfg.clone(),
            tables: shared.tables.clone(),
            trace: shared.trace.clone(),
            session: io.cookie.clone(),
        };
        let outcome = shared.program.run(branch, env, &mut io, &ctx).await;
        match outcome {
            Outcome::Blocked { check, reason } => {
                shared.log(&check, &reason, &path);
                io.finish(forbidden(&check));
            }
            Outcome::Done => io.finish(bad_gateway("monitor ended without a response")),
        }
    });
    match rx.await {
        Ok(resp) => http::to_axum(&resp),
        Err(_) => http::to_axum(&bad_gateway("monitor failed")),
    }
}

async fn outbound(State(s): State<Arc<Shared>>, req: Request<Body>) -> Response {
    let mut msg = match http::from_axum(req, "http").await {
        Ok(m) => m,
        Err(e) => return http::to_axum(&bad_gateway(&e)),
    };
    msg.corr = s.next_corr();
    let value = request_value(&msg);
    let waiter = {
        let mut ws = s.waiters.lock().expect("waiter lock");
        ws.retain(|w| !w.tx.is_closed());
        ws.iter().position(|w| (w.accept)(&value)).map(|i| ws.remove(i))
    };
    let Some(w) = waiter else {
        return match http::send(&s.client, &msg).await {
            Ok(resp) => http::to_axum(&resp),
            Err(e) => http::to_axum(&bad_gateway(&e)),
        };
    };
    let (tx, rx) = oneshot::channel();
    let path = msg.path.clone();
    if w.tx.send(Rendezvous { value, msg, reply: tx }).is_err() {
        return http::to_axum(&bad_gateway("monitor went away"));
    }
    match rx.await {
        Ok(resp) => http::to_axum(&resp),
        Err(_) => {
            tracing::warn!(path, "outgoing request not released by the monitor");
            http::to_axum(&forbidden("relay"))
        }
    }
}

struct Mail {
    chan: String,
    value: Value,
}

/// Channel bindings for one monitored request.
struct RequestIo {
    shared: Arc<Shared>,
    trigger: HttpMessage,
    cookie: String,
    reply: Option<oneshot::Sender<HttpMessage>>,
    mailbox_tx: mpsc::UnboundedSender<(Mail, Option<HttpMessage>)>,
    mailbox: mpsc::UnboundedReceiver<(Mail, Option<HttpMessage>)>,
    stash: Vec<Mail>,
    /// Responses received so far, by correlation id.
    templates: HashMap<u64, HttpMessage>,
    /// Intercepted outgoing requests of the participant awaiting an answer.
    pending: HashMap<u64, (HttpMessage, oneshot::Sender<HttpMessage>)>,
}

impl RequestIo {
    fn finish(&mut self, resp: HttpMessage) {
        if let Some(tx) = self.reply.take() {
            let _ = tx.send(resp);
        }
        for (_, (_, tx)) in self.pending.drain() {
            let _ = tx.send(forbidden("relay"));
        }
    }

    fn spawn_request(&self, msg: HttpMessage, url: UrlValue, cookie: String, answer_on: String) {
        let shared = self.shared.clone();
        let tx = self.mailbox_tx.clone();
        tokio::spawn(async move {
            let resp = match http::send(&shared.client, &msg).await {
                Ok(r) => r,
                Err(e) => {
                    let mut r = bad_gateway(&e);
                    r.corr = msg.corr;
                    r
                }
            };
            let value = response_value(&url, &cookie, &resp, &shared.cfg);
            let _ = tx.send((Mail { chan: answer_on, value }, Some(resp)));
        });
    }

    async fn next_mail(&mut self) -> Result<Mail, String> {
        match tokio::time::timeout(WAIT, self.mailbox.recv()).await {
            Ok(Some((mail, template))) => {
                if let Some(t) = template {
                    self.templates.insert(t.corr, t);
                }
                Ok(mail)
            }
            Ok(None) => Err("mailbox closed".into()),
            Err(_) => Err("timed out waiting for a message".into()),
        }
    }
}

impl Io for RequestIo {
    async fn send(&mut self, chan: &str, v: Value) -> Result<(), String> {
        let cfg = self.shared.cfg.clone();
        if chan == self.shared.relays.forward {
            let msg = request_from_value(&v, Some(&self.trigger), &cfg).ok_or("cannot encode forwarded request")?;
            let url = msg.url();
            let cookie = self.cookie.clone();
            let msg = self.shared.upstream_msg(msg);
            self.spawn_request(msg, url, cookie, self.shared.relays.answer.clone());
            Ok(())
        } else if chan == RESPONSE {
            let corr = response_corr(&v);
            let resp = response_from_value(&v, corr.and_then(|c| self.templates.get(&c)), &self.cookie, &cfg)
                .ok_or("cannot encode response")?;
            if let Some(tx) = self.reply.take() {
                let _ = tx.send(resp);
            }
            Ok(())
        } else if chan == REQUEST {
            let corr = request_corr(&v);
            let template = corr.and_then(|c| self.pending.get(&c)).map(|(m, _)| m.clone());
            let msg = request_from_value(&v, template.as_ref(), &cfg).ok_or("cannot encode outgoing request")?;
            let cookie = msg.cookies.iter().find(|(k, _)| *k == cfg.session_cookie).map(|(_, v)| v.clone());
            self.spawn_request(msg.clone(), msg.url(), cookie.unwrap_or_default(), RESPONSE.to_string());
            Ok(())
        } else if chan == self.shared.relays.deliver {
            let corr = response_corr(&v).ok_or("response without correlation")?;
            let (req, tx) = self.pending.remove(&corr).ok_or("no pending outgoing request")?;
            let cookie = req.cookies.iter().find(|(k, _)| *k == cfg.session_cookie).map(|(_, v)| v.clone());
            let resp = response_from_value(&v, self.templates.get(&corr), &cookie.unwrap_or_default(), &cfg)
                .ok_or("cannot encode relayed response")?;
            let _ = tx.send(resp);
            Ok(())
        } else {
            Err(format!("proxy cannot send on `{chan}`"))
        }
    }

    async fn recv(&mut self, chan: &str, accept: Accept) -> Result<Value, String> {
        if chan == self.shared.relays.outgoing {
            let (tx, mut rx) = oneshot::channel();
            self.shared.waiters.lock().expect("waiter lock").push(Waiter { accept, tx });
            let deadline = tokio::time::sleep(WAIT);
            tokio::pin!(deadline);
            tokio::select! {
                r = &mut rx => {
                    let r: Rendezvous = r.map_err(|_| "interception closed".to_string())?;
                    self.pending.insert(r.msg.corr, (r.msg, r.reply));
                    return Ok(r.value);
                }
                m = self.mailbox.recv() => {
                    let Some((mail, template)) = m else { return Err("mailbox closed".into()) };
                    if let Some(t) = template {
                        self.templates.insert(t.corr, t);
                    }
                    return Err(format!("participant answered on `{}` before sending the expected request", mail.chan));
                }
                _ = &mut deadline => return Err("timed out waiting for the participant's request".into()),
            }
        }
        if let Some(i) = self.stash.iter().position(|m| m.chan == chan) {
            return Ok(self.stash.remove(i).value);
        }
        loop {
            let mail = self.next_mail().await?;
            if mail.chan == chan {
                return Ok(mail.value);
            }
            self.stash.push(mail);
        }
    }
}

fn request_corr(v: &Value) -> Option<u64> {
    match v {
        Value::Tuple(ps) if ps.len() == 4 => corr_of(&ps[3]),
        _ => None,
    }
}

fn response_corr(v: &Value) -> Option<u64> {
    match v {
        Value::Tuple(ps) if ps.len() == 5 => corr_of(&ps[4]),
        _ => None,
    }
}
