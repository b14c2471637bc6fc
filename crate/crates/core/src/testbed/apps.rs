//! The simulated participants: an OAuth relying party and provider, a shop,
//! a payment provider and an attacker-controlled site.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::future::Future;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::State;
use axum::http::Request;
use axum::response::Response;
use axum::Router;
use hmac::{Hmac, KeyInit, Mac};
use rand::Rng;
use sha2::Sha256;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::Vuln;
use crate::runtime::codec::{self, FORM};
use crate::runtime::{http, Carrier, EventTrace, HttpMessage, ProtocolConfig, UrlValue, Value};

pub trait Handler: Send + Sync + 'static {
    fn handle(self: Arc<Self>, msg: HttpMessage) -> impl Future<Output = HttpMessage> + Send;
}

async fn entry<H: Handler>(State(h): State<Arc<H>>, req: Request<Body>) -> Response {
    match http::from_axum(req, "http").await {
        Ok(m) => http::to_axum(&h.handle(m).await),
        Err(e) => http::to_axum(&text(400, &e)),
    }
}

pub fn serve<H: Handler>(listener: TcpListener, h: Arc<H>) -> JoinHandle<()> {
    let app = Router::new().fallback(entry::<H>).with_state(h);
    tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    })
}

pub fn random_id() -> String {
    let bytes: [u8; 12] = rand::rng().random();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn text(status: u16, body: &str) -> HttpMessage {
    let mut m = HttpMessage::response(status);
    m.set_header("Content-Type", "text/plain");
    m.body = body.as_bytes().to_vec();
    m
}

fn redirect(to: &UrlValue) -> HttpMessage {
    let mut m = HttpMessage::response(302);
    m.set_header("Location", to.to_string());
    m
}

pub fn sym(cfg: &ProtocolConfig, name: &str) -> String {
    cfg.symbol(name).unwrap_or_default().to_string()
}

/// `scheme://host/path?query` with each part taken from a config symbol.
pub fn url(cfg: &ProtocolConfig, host: &str, path: &str, query: Vec<(String, String)>) -> UrlValue {
    UrlValue { scheme: sym(cfg, "https"), host: sym(cfg, host), path: sym(cfg, path), query, bare: false }
}

/// Wire fields of `ctor(args)`.
pub fn pairs(cfg: &ProtocolConfig, ctor: &str, args: &[&str]) -> Vec<(String, String)> {
    let Some(c) = cfg.codec(ctor) else { return Vec::new() };
    let vs: Vec<Value> = args.iter().map(|a| Value::str(*a)).collect();
    match codec::encode(c, &vs) {
        Ok(Value::Fields(_, fs)) => fs,
        Ok(Value::Body { bytes, .. }) => {
            crate::runtime::value::parse_pairs(&String::from_utf8_lossy(&bytes), '&').unwrap_or_default()
        }
        _ => Vec::new(),
    }
}

/// Serialized body of `ctor(args)`.
pub fn wire(cfg: &ProtocolConfig, ctor: &str, args: &[&str]) -> String {
    let vs: Vec<Value> = args.iter().map(|a| Value::str(*a)).collect();
    cfg.codec(ctor).and_then(|c| codec::encode_wire(c, &vs).ok()).unwrap_or_default()
}

/// Arguments of `ctor` read from `v`, if it has that shape.
pub fn read(cfg: &ProtocolConfig, ctor: &str, v: &Value) -> Option<Vec<String>> {
    let c = cfg.codec(ctor)?;
    codec::decode(c, v).ok().map(|vs| vs.iter().map(Value::to_string).collect())
}

pub fn query_of(msg: &HttpMessage) -> Value {
    Value::Fields(Carrier::QueryString, msg.query.clone())
}

pub fn body_of(msg: &HttpMessage) -> Value {
    Value::Body { content_type: msg.content_type().to_string(), bytes: msg.body.clone() }
}

pub fn page(cfg: &ProtocolConfig, ctor: &str, args: &[&str]) -> HttpMessage {
    let mut m = HttpMessage::response(200);
    m.set_header("Content-Type", codec::JSON);
    m.body = wire(cfg, ctor, args).into_bytes();
    m
}

fn is(msg: &HttpMessage, cfg: &ProtocolConfig, path: &str) -> bool {
    msg.path == sym(cfg, path)
}

async fn outgoing(client: &reqwest::Client, msg: HttpMessage) -> Result<HttpMessage, String> {
    http::send(client, &msg).await
}

#[derive(Clone, Debug, Default)]
pub struct RpSession {
    pub state: Option<String>,
    pub login_started: bool,
    pub user: Option<String>,
}

pub struct RelyingParty {
    pub cfg: Arc<ProtocolConfig>,
    pub flags: BTreeSet<Vuln>,
    pub stateless: bool,
    pub trace: Arc<EventTrace>,
    pub client: reqwest::Client,
    pub sessions: Mutex<HashMap<String, RpSession>>,
}

impl RelyingParty {
    pub fn user_of(&self, sid: &str) -> Option<String> {
        self.sessions.lock().expect("sessions").get(sid).and_then(|s| s.user.clone())
    }

    fn with_cookie(&self, mut resp: HttpMessage, sid: &str) -> HttpMessage {
        resp.headers.push(("Set-Cookie".into(), format!("{}={sid}; Path=/", self.cfg.session_cookie)));
        resp
    }

    fn reduri(&self) -> UrlValue {
        url(&self.cfg, "h", "callbackpath", Vec::new())
    }

    fn login(&self) -> HttpMessage {
        let cfg = &self.cfg;
        let sid = random_id();
        let state = random_id();
        let reduri = self.reduri().to_string();
        let appid = sym(cfg, "appid");
        let (params, begin) = if self.stateless {
            (
                pairs(cfg, "codereqparams", &[&appid, &reduri]),
                vec![sym(cfg, "h"), sym(cfg, "fb"), sid.clone(), appid.clone(), reduri.clone()],
            )
        } else {
            (
                pairs(cfg, "codereqparams", &[&appid, &reduri, &state]),
                vec![sym(cfg, "h"), sym(cfg, "fb"), sid.clone(), appid.clone(), reduri.clone(), state.clone()],
            )
        };
        let session = RpSession { state: (!self.stateless).then(|| state.clone()), login_started: true, user: None };
        self.sessions.lock().expect("sessions").insert(sid.clone(), session);
        self.trace.append("rp_begin", begin, &sid);
        let link = url(cfg, "fb", "oauthpath", params).to_string();
        let mut resp = page(cfg, "pagewithlink", &[&link]);
        resp.set_header("Referrer-Policy", "unsafe-url");
        self.with_cookie(resp, &sid)
    }

    async fn callback(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let Some(args) = read(cfg, "coderesparams", &query_of(msg)) else {
            return text(400, "malformed callback");
        };
        let code = args[0].clone();
        let state = args.get(1).cloned();
        let existing = msg.cookies.iter().find(|(k, _)| *k == cfg.session_cookie).map(|(_, v)| v.clone());
        let known = existing.as_ref().and_then(|sid| self.sessions.lock().expect("sessions").get(sid).cloned());
        let lax = self.flags.contains(&Vuln::NoStateCheck) || self.flags.contains(&Vuln::StatelessRp);
        let accepted = match &known {
            Some(s) if self.stateless => s.login_started,
            Some(s) => s.state.is_some() && s.state == state,
            None => false,
        };
        if !accepted && !lax {
            return text(403, "unexpected authorization response");
        }
        let reduri = self.reduri().to_string();
        let (appid, secret) = (sym(cfg, "appid"), sym(cfg, "appsecret"));
        let token_url = url(cfg, "fb", "tokenpath", pairs(cfg, "tokenreqparams", &[&appid, &reduri, &secret, &code]));
        let resp = match outgoing(&self.client, HttpMessage::request("GET", &token_url)).await {
            Ok(r) if r.status == Some(200) => r,
            Ok(r) => return text(502, &format!("token endpoint answered {}", r.status.unwrap_or_default())),
            Err(e) => return text(502, &e),
        };
        let Some(token) = read(cfg, "tokenresjson", &body_of(&resp)).and_then(|a| a.into_iter().next()) else {
            return text(502, "malformed token response");
        };
        let me =
            UrlValue { path: "/me".into(), query: vec![("access_token".into(), token.clone())], ..token_url.clone() };
        let user = match outgoing(&self.client, HttpMessage::request("GET", &me)).await {
            Ok(r) if r.status == Some(200) => serde_json::from_slice::<serde_json::Value>(&r.body)
                .ok()
                .and_then(|v| v.get("user").and_then(|u| u.as_str()).map(str::to_string)),
            _ => None,
        };
        let Some(user) = user else { return text(502, "cannot identify user") };
        let fresh = existing.is_none();
        let sid = existing.unwrap_or_else(random_id);
        let mut sessions = self.sessions.lock().expect("sessions");
        let s = sessions.entry(sid.clone()).or_default();
        s.user = Some(user);
        drop(sessions);
        let mut end = vec![sym(cfg, "h"), sym(cfg, "fb"), sid.clone(), appid, reduri, secret];
        end.extend(state);
        end.extend([code, token]);
        self.trace.append("rp_end", end, &sid);
        let resp = page(cfg, "success", &[]);
        if fresh {
            self.with_cookie(resp, &sid)
        } else {
            resp
        }
    }
}

impl Handler for RelyingParty {
    async fn handle(self: Arc<Self>, msg: HttpMessage) -> HttpMessage {
        let cfg = self.cfg.clone();
        if is(&msg, &cfg, "loginpath") {
            self.login()
        } else if is(&msg, &cfg, "callbackpath") {
            self.callback(&msg).await
        } else if msg.path == "/" {
            let has = msg.cookies.iter().any(|(k, _)| *k == cfg.session_cookie);
            let resp = text(200, "welcome");
            if has {
                resp
            } else {
                let sid = random_id();
                self.sessions.lock().expect("sessions").insert(sid.clone(), RpSession::default());
                self.with_cookie(resp, &sid)
            }
        } else {
            text(404, "not found")
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grant {
    pub user: String,
    pub client_id: String,
    pub reduri: String,
    pub used: bool,
}

pub struct Provider {
    pub cfg: Arc<ProtocolConfig>,
    pub flags: BTreeSet<Vuln>,
    pub stateless: bool,
    pub trace: Arc<EventTrace>,
    pub codes: Mutex<HashMap<String, Grant>>,
    pub tokens: Mutex<HashMap<String, String>>,
}

pub const IDP_COOKIE: &str = "idp_user";

impl Provider {
    fn authorize(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let Some(user) = msg.cookies.iter().find(|(k, _)| k == IDP_COOKIE).map(|(_, v)| v.clone()) else {
            return text(401, "not logged in");
        };
        let Some(args) = read(cfg, "codereqparams", &query_of(msg)) else {
            return text(400, "malformed authorization request");
        };
        let (aid, reduri) = (args[0].clone(), args[1].clone());
        if aid != sym(cfg, "appid") {
            return text(400, "unknown client");
        }
        let Ok(target) = UrlValue::parse(&reduri) else { return text(400, "bad redirect_uri") };
        let code = random_id();
        let grant = Grant { user, client_id: aid.clone(), reduri: reduri.clone(), used: false };
        self.codes.lock().expect("codes").insert(code.clone(), grant);
        self.trace.append("ttp_code", vec![sym(cfg, "fb"), aid, reduri, code.clone()], "");
        let query = match args.get(2) {
            Some(state) => pairs(cfg, "coderesparams", &[&code, state]),
            None => pairs(cfg, "coderesparams", &[&code]),
        };
        redirect(&UrlValue { query, ..target })
    }

    fn token(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let Some(args) = read(cfg, "tokenreqparams", &query_of(msg)) else {
            return text(400, "malformed token request");
        };
        let [aid, reduri, secret, code] = <[String; 4]>::try_from(args).expect("four fields");
        if aid != sym(cfg, "appid") || secret != sym(cfg, "appsecret") {
            return text(401, "bad client credentials");
        }
        let mut codes = self.codes.lock().expect("codes");
        let Some(grant) = codes.get_mut(&code) else { return text(400, "unknown code") };
        if grant.used || grant.client_id != aid {
            return text(400, "invalid code");
        }
        if grant.reduri != reduri && !self.flags.contains(&Vuln::NoReduriBinding) {
            return text(400, "redirect_uri mismatch");
        }
        grant.used = true;
        let user = grant.user.clone();
        drop(codes);
        let token = random_id();
        self.tokens.lock().expect("tokens").insert(token.clone(), user);
        page(cfg, "tokenresjson", &[&token])
    }

    fn me(&self, msg: &HttpMessage) -> HttpMessage {
        let token = msg.query.iter().find(|(k, _)| k == "access_token").map(|(_, v)| v.as_str()).unwrap_or("");
        match self.tokens.lock().expect("tokens").get(token) {
            Some(user) => {
                let mut m = HttpMessage::response(200);
                m.set_header("Content-Type", codec::JSON);
                m.body = serde_json::json!({ "user": user }).to_string().into_bytes();
                m
            }
            None => text(401, "invalid token"),
        }
    }
}

impl Handler for Provider {
    async fn handle(self: Arc<Self>, msg: HttpMessage) -> HttpMessage {
        let cfg = self.cfg.clone();
        if is(&msg, &cfg, "oauthpath") {
            self.authorize(&msg)
        } else if is(&msg, &cfg, "tokenpath") {
            self.token(&msg)
        } else if msg.path == "/me" {
            self.me(&msg)
        } else {
            text(404, "not found")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Order {
    pub item: String,
    pub amount: String,
    pub paid: bool,
}

pub struct Shop {
    pub cfg: Arc<ProtocolConfig>,
    pub flags: BTreeSet<Vuln>,
    pub trace: Arc<EventTrace>,
    pub client: reqwest::Client,
    pub orders: Mutex<BTreeMap<String, Order>>,
    /// (invoice, transaction, amount) confirmed by a notification.
    pub payments: Mutex<Vec<(String, String, String)>>,
}

pub fn price(item: &str) -> &'static str {
    match item {
        "book" => "4999",
        "pen" => "150",
        _ => "1000",
    }
}

impl Shop {
    fn checkout(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let Some(args) = read(cfg, "itemparams", &query_of(msg)) else { return text(400, "no item") };
        let item = args[0].clone();
        let amount = price(&item).to_string();
        let invoice = random_id();
        let merchant = sym(cfg, "merchant");
        self.orders
            .lock()
            .expect("orders")
            .insert(invoice.clone(), Order { item, amount: amount.clone(), paid: false });
        self.trace.append("shop_order", vec![sym(cfg, "s"), merchant.clone(), invoice.clone(), amount.clone()], "");
        let ret = url(cfg, "s", "returnpath", Vec::new()).to_string();
        let notify = url(cfg, "s", "ipnpath", Vec::new()).to_string();
        let pay = url(cfg, "pp", "paypath", pairs(cfg, "payparams", &[&merchant, &amount, &invoice, &ret, &notify]));
        page(cfg, "payform", &[&pay.to_string()])
    }

    async fn ipn(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let Some(args) = read(cfg, "ipnparams", &body_of(msg)) else { return text(400, "malformed notification") };
        let [business, amount, invoice, _payer, tx, _sig] = <[String; 6]>::try_from(args).expect("six fields");
        if business != sym(cfg, "merchant") && !self.flags.contains(&Vuln::NoMerchantCheck) {
            return text(400, "wrong merchant");
        }
        let order = self.orders.lock().expect("orders").get(&invoice).cloned();
        let Some(order) = order else { return text(400, "unknown invoice") };
        if order.amount != amount && !self.flags.contains(&Vuln::NoIpnRevalidation) {
            return text(400, "amount mismatch");
        }
        let mut check = HttpMessage::request("POST", &url(cfg, "pp", "verifypath", Vec::new()));
        check.set_header("Content-Type", FORM);
        check.body = msg.body.clone();
        let ok = match outgoing(&self.client, check).await {
            Ok(r) if r.status == Some(200) => read(cfg, "verified", &body_of(&r)).is_some(),
            _ => false,
        };
        if !ok {
            return text(400, "notification not verified");
        }
        self.payments.lock().expect("payments").push((invoice, tx, amount));
        page(cfg, "ack", &[])
    }

    fn ret(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let Some(args) = read(cfg, "returnparams", &query_of(msg)) else { return text(400, "malformed return") };
        let (invoice, tx) = (args[0].clone(), args[1].clone());
        let found = self
            .payments
            .lock()
            .expect("payments")
            .iter()
            .find(|(i, t, _)| *t == tx && (*i == invoice || self.flags.contains(&Vuln::NoTokenFreshness)))
            .cloned();
        let Some((paid_for, _, paid)) = found else { return text(402, "payment not found") };
        let mut orders = self.orders.lock().expect("orders");
        let Some(order) = orders.get_mut(&invoice) else { return text(400, "unknown invoice") };
        order.paid = true;
        let amount = if paid_for == invoice { paid } else { order.amount.clone() };
        drop(orders);
        self.trace.append("shop_done", vec![sym(cfg, "s"), sym(cfg, "merchant"), invoice.clone(), amount, tx], "");
        page(cfg, "receipt", &[&invoice])
    }

    pub fn order(&self, invoice: &str) -> Option<Order> {
        self.orders.lock().expect("orders").get(invoice).cloned()
    }
}

impl Handler for Shop {
    async fn handle(self: Arc<Self>, msg: HttpMessage) -> HttpMessage {
        let cfg = self.cfg.clone();
        if is(&msg, &cfg, "checkoutpath") {
            self.checkout(&msg)
        } else if is(&msg, &cfg, "ipnpath") && msg.method == "POST" {
            self.ipn(&msg).await
        } else if is(&msg, &cfg, "returnpath") {
            self.ret(&msg)
        } else {
            text(404, "not found")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Payment {
    pub business: String,
    pub amount: String,
    pub invoice: String,
    pub tx: String,
    pub payer: String,
}

pub struct PayPal {
    pub cfg: Arc<ProtocolConfig>,
    pub trace: Arc<EventTrace>,
    pub client: reqwest::Client,
    pub key: [u8; 32],
    pub ledger: Mutex<Vec<Payment>>,
}

pub const PAYER_COOKIE: &str = "pp_user";

impl PayPal {
    fn sign(&self, fields: &[&str]) -> String {
        let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.key).expect("any key length");
        mac.update(fields.join("|").as_bytes());
        mac.finalize().into_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    async fn pay(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let Some(payer) = msg.cookies.iter().find(|(k, _)| k == PAYER_COOKIE).map(|(_, v)| v.clone()) else {
            return text(401, "not logged in");
        };
        let Some(args) = read(cfg, "payparams", &query_of(msg)) else { return text(400, "malformed payment") };
        let [business, amount, invoice, ret, notify] = <[String; 5]>::try_from(args).expect("five fields");
        let (Ok(ret), Ok(notify)) = (UrlValue::parse(&ret), UrlValue::parse(&notify)) else {
            return text(400, "bad urls");
        };
        let tx = random_id();
        let p = Payment {
            business: business.clone(),
            amount: amount.clone(),
            invoice: invoice.clone(),
            tx: tx.clone(),
            payer: payer.clone(),
        };
        self.ledger.lock().expect("ledger").push(p);
        self.trace.append("pp_paid", vec![business.clone(), amount.clone(), invoice.clone(), tx.clone()], "");
        let sig = self.sign(&[&business, &amount, &invoice, &payer, &tx]);
        let mut ipn = HttpMessage::request("POST", &notify);
        ipn.set_header("Content-Type", FORM);
        ipn.body = wire(cfg, "ipnparams", &[&business, &amount, &invoice, &payer, &tx, &sig]).into_bytes();
        if let Err(e) = outgoing(&self.client, ipn).await {
            tracing::warn!(error = %e, "notification failed");
        }
        redirect(&UrlValue { query: pairs(cfg, "returnparams", &[&invoice, &tx]), ..ret })
    }

    fn verify(&self, msg: &HttpMessage) -> HttpMessage {
        let cfg = &self.cfg;
        let valid = read(cfg, "ipnparams", &body_of(msg))
            .is_some_and(|a| a[5] == self.sign(&[&a[0], &a[1], &a[2], &a[3], &a[4]]));
        if valid {
            page(cfg, "verified", &[])
        } else {
            let mut m = HttpMessage::response(200);
            m.set_header("Content-Type", codec::JSON);
            m.body = br#"{"status":"INVALID"}"#.to_vec();
            m
        }
    }

    pub fn paid(&self, invoice: &str) -> Vec<Payment> {
        self.ledger.lock().expect("ledger").iter().filter(|p| p.invoice == invoice).cloned().collect()
    }
}

impl Handler for PayPal {
    async fn handle(self: Arc<Self>, msg: HttpMessage) -> HttpMessage {
        let cfg = self.cfg.clone();
        if is(&msg, &cfg, "verifypath") && msg.method == "POST" {
            self.verify(&msg)
        } else if is(&msg, &cfg, "paypath") {
            self.pay(&msg).await
        } else {
            text(404, "not found")
        }
    }
}

/// Records every request it receives.
#[derive(Default)]
pub struct AttackerSite {
    pub seen: Mutex<Vec<UrlValue>>,
}

impl Handler for AttackerSite {
    async fn handle(self: Arc<Self>, msg: HttpMessage) -> HttpMessage {
        self.seen.lock().expect("seen").push(msg.url());
        text(200, "thanks")
    }
}
