//! A local multi-party web application testbed: OAuth and PayPal-style
//! participants with switchable vulnerabilities, scripted browsers and
//! attacks, and an oracle that decides whether a deployment is secure.

pub mod apps;
pub mod attacks;
pub mod browser;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::ast::SystemSpec;
use crate::deploy::{Candidate, DeployedMonitor, MonitorKind, ThreatModel, VerifierHook};
use crate::parser::parse_spec;
use crate::pretty;
use crate::runtime::{
    check_correspondence, http, run_proxy, Blocked, EventTrace, ProtocolConfig, ProxyHandle, ProxyOptions, TraceEntry,
};

pub use browser::Browser;

pub const OAUTH_SPEC: &str = include_str!("../../specs/oauth.bw.pv");
pub const OAUTH_STATELESS_SPEC: &str = include_str!("../../specs/oauth_stateless.bw.pv");
pub const PAYPAL_SPEC: &str = include_str!("../../specs/paypal.bw.pv");

const CONFIGS: [(&str, &str); 8] = [
    ("cs1", include_str!("../../configs/cs1.json")),
    ("cs2", include_str!("../../configs/cs2.json")),
    ("cs3", include_str!("../../configs/cs3.json")),
    ("cs4", include_str!("../../configs/cs4.json")),
    ("cs5", include_str!("../../configs/cs5.json")),
    ("cs6", include_str!("../../configs/cs6.json")),
    ("cs7", include_str!("../../configs/cs7.json")),
    ("cs8", include_str!("../../configs/cs8.json")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Vuln {
    NoStateCheck,
    StatelessRp,
    NoReduriBinding,
    NoIpnRevalidation,
    NoMerchantCheck,
    NoTokenFreshness,
}

impl Vuln {
    pub const ALL: [Vuln; 6] = [
        Vuln::NoStateCheck,
        Vuln::StatelessRp,
        Vuln::NoReduriBinding,
        Vuln::NoIpnRevalidation,
        Vuln::NoMerchantCheck,
        Vuln::NoTokenFreshness,
    ];

    pub fn number(self) -> u32 {
        match self {
            Vuln::NoStateCheck => 13,
            Vuln::StatelessRp => 14,
            Vuln::NoReduriBinding => 17,
            Vuln::NoIpnRevalidation => 18,
            Vuln::NoMerchantCheck => 20,
            Vuln::NoTokenFreshness => 21,
        }
    }

    pub fn from_number(n: u32) -> Option<Vuln> {
        Vuln::ALL.into_iter().find(|v| v.number() == n)
    }

    /// Role of the participant whose implementation has the flaw.
    pub fn role(self) -> &'static str {
        match self {
            Vuln::NoReduriBinding => "TTP",
            _ => "RP",
        }
    }

    pub fn attack_name(self) -> &'static str {
        match self {
            Vuln::NoStateCheck => "session-swapping",
            Vuln::StatelessRp => "stateless-session-swapping",
            Vuln::NoReduriBinding => "code-redirection",
            Vuln::NoIpnRevalidation => "amount-tampering",
            Vuln::NoMerchantCheck => "merchant-tampering",
            Vuln::NoTokenFreshness => "transaction-replay",
        }
    }

    /// Accepts an attack name, a flag name such as `no-state-check`, or a number.
    pub fn parse(s: &str) -> Option<Vuln> {
        let s = s.trim();
        if let Ok(n) = s.trim_start_matches('#').parse() {
            return Vuln::from_number(n);
        }
        let flag = |v: &Vuln| serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string));
        Vuln::ALL.into_iter().find(|v| v.attack_name() == s || flag(v).as_deref() == Some(s))
    }

    pub fn describe(self) -> &'static str {
        match self {
            Vuln::NoStateCheck => "session swapping",
            Vuln::StatelessRp => "login CSRF on a stateless client",
            Vuln::NoReduriBinding => "code theft through redirect_uri",
            Vuln::NoIpnRevalidation => "gross amount changed in the payment",
            Vuln::NoMerchantCheck => "payment to another merchant",
            Vuln::NoTokenFreshness => "transaction replayed for another order",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    OauthExplicit,
    PaypalIpn,
}

impl Protocol {
    /// Config symbols holding the public hosts of the RP and TTP roles.
    pub fn host_symbols(self) -> (&'static str, &'static str) {
        match self {
            Protocol::OauthExplicit => ("h", "fb"),
            Protocol::PaypalIpn => ("s", "pp"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error("unknown case study `{0}`")]
    UnknownCase(String),
    #[error("specification: {0}")]
    Spec(String),
    #[error("config: {0}")]
    Config(String),
    #[error("startup: {0}")]
    Startup(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    pub name: String,
    pub protocol: Protocol,
    pub flags: BTreeSet<Vuln>,
    pub threat: ThreatModel,
    #[serde(skip)]
    pub spec: SystemSpec,
    pub config: ProtocolConfig,
}

impl Scenario {
    pub fn case(name: &str) -> Result<Scenario, TestbedError> {
        use Vuln::*;
        let (protocol, flags): (Protocol, &[Vuln]) = match name {
            "cs1" => (Protocol::OauthExplicit, &[NoStateCheck, NoReduriBinding]),
            "cs2" | "cs3" | "cs4" => (Protocol::OauthExplicit, &[NoStateCheck]),
            "cs5" => (Protocol::OauthExplicit, &[NoStateCheck, StatelessRp]),
            "cs6" => (Protocol::PaypalIpn, &[NoIpnRevalidation, NoMerchantCheck]),
            "cs7" => (Protocol::PaypalIpn, &[NoIpnRevalidation]),
            "cs8" => (Protocol::PaypalIpn, &[NoTokenFreshness]),
            _ => return Err(TestbedError::UnknownCase(name.into())),
        };
        let flags: BTreeSet<Vuln> = flags.iter().copied().collect();
        let spec_text = match protocol {
            Protocol::OauthExplicit if flags.contains(&StatelessRp) => OAUTH_STATELESS_SPEC,
            Protocol::OauthExplicit => OAUTH_SPEC,
            Protocol::PaypalIpn => PAYPAL_SPEC,
        };
        let spec = parse_spec(spec_text).map_err(|e| TestbedError::Spec(e.to_string()))?;
        let cfg_text = CONFIGS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).expect("config per case");
        let config = ProtocolConfig::from_json(cfg_text).map_err(|e| TestbedError::Config(e.to_string()))?;
        let threat = match protocol {
            Protocol::OauthExplicit => ThreatModel::TRUSTED,
            Protocol::PaypalIpn => ThreatModel::UNTRUSTED,
        };
        Ok(Scenario { name: name.into(), protocol, flags, threat, spec, config })
    }

    pub fn stateless(&self) -> bool {
        self.flags.contains(&Vuln::StatelessRp)
    }

    /// Flags of the participants in `inattentive`; the others behave ideally.
    pub fn active_flags(&self, inattentive: &BTreeSet<String>) -> BTreeSet<Vuln> {
        let roles: BTreeSet<&str> = inattentive.iter().filter_map(|p| self.spec.role_of(p)).collect();
        self.flags.iter().copied().filter(|v| roles.contains(v.role())).collect()
    }

    pub fn participant_for(&self, role: &str) -> Option<String> {
        self.spec.participant_for_role(role).map(|p| p.name.clone())
    }
}

/// The ten case-study experiments: scenario name and inattentive participants.
pub fn experiments() -> Vec<(String, BTreeSet<String>)> {
    let set = |ps: &[&str]| ps.iter().map(|p| p.to_string()).collect::<BTreeSet<_>>();
    vec![
        ("cs1".into(), set(&["TTPApp"])),
        ("cs1".into(), set(&["RPApp"])),
        ("cs1".into(), set(&["RPApp", "TTPApp"])),
        ("cs2".into(), set(&["RPApp"])),
        ("cs3".into(), set(&["RPApp"])),
        ("cs4".into(), set(&["RPApp"])),
        ("cs5".into(), set(&["RPApp"])),
        ("cs6".into(), set(&["ShopApp"])),
        ("cs7".into(), set(&["ShopApp"])),
        ("cs8".into(), set(&["ShopApp"])),
    ]
}

pub enum Parties {
    Oauth { rp: Arc<apps::RelyingParty>, ttp: Arc<apps::Provider> },
    Paypal { shop: Arc<apps::Shop>, paypal: Arc<apps::PayPal> },
}

/// Running participants, monitors and attacker site for one scenario.
pub struct World {
    pub cfg: Arc<ProtocolConfig>,
    pub trace: Arc<EventTrace>,
    pub monitor_trace: Arc<EventTrace>,
    pub rp_host: String,
    pub ttp_host: String,
    pub attacker_host: String,
    pub parties: Parties,
    pub attacker: Arc<apps::AttackerSite>,
    pub stateless: bool,
    workers: Vec<(String, crate::transform::Monitor)>,
    proxies: Vec<ProxyHandle>,
    browsers: Mutex<Vec<Arc<Browser>>>,
    tasks: Vec<JoinHandle<()>>,
}

impl Drop for World {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

async fn bind() -> Result<(TcpListener, SocketAddr), TestbedError> {
    let l = TcpListener::bind("127.0.0.1:0").await.map_err(|e| TestbedError::Startup(e.to_string()))?;
    let a = l.local_addr().map_err(|e| TestbedError::Startup(e.to_string()))?;
    Ok((l, a))
}

struct Slot {
    app: (TcpListener, SocketAddr),
    proxy: Option<((TcpListener, SocketAddr), (TcpListener, SocketAddr))>,
}

impl Slot {
    async fn new(proxied: bool) -> Result<Slot, TestbedError> {
        let app = bind().await?;
        let proxy = if proxied { Some((bind().await?, bind().await?)) } else { None };
        Ok(Slot { app, proxy })
    }

    fn public(&self) -> String {
        match &self.proxy {
            Some(((_, a), _)) => a.to_string(),
            None => self.app.1.to_string(),
        }
    }

    fn client(&self) -> reqwest::Client {
        match &self.proxy {
            Some((_, (_, f))) => http::proxied_client(&format!("http://{f}")),
            None => http::client(),
        }
    }
}

impl World {
    pub async fn start(
        sc: &Scenario,
        inattentive: &BTreeSet<String>,
        monitors: &[DeployedMonitor],
    ) -> Result<World, TestbedError> {
        let role_of = |m: &DeployedMonitor| sc.spec.role_of(&m.participant).unwrap_or_default().to_string();
        let proxied = |role: &str| monitors.iter().any(|m| m.kind == MonitorKind::Proxy && role_of(m) == role);
        let rp = Slot::new(proxied("RP")).await?;
        let ttp = Slot::new(proxied("TTP")).await?;
        let attacker = bind().await?;
        let (rp_sym, ttp_sym) = sc.protocol.host_symbols();
        let mut cfg = sc.config.clone();
        cfg.symbols.insert(rp_sym.into(), rp.public());
        cfg.symbols.insert(ttp_sym.into(), ttp.public());
        let cfg = Arc::new(cfg);
        let trace = Arc::new(EventTrace::default());
        let flags = sc.active_flags(inattentive);
        let flags_of = |role: &str| flags.iter().copied().filter(|v| v.role() == role).collect::<BTreeSet<_>>();
        let mut tasks = Vec::new();
        let site = Arc::new(apps::AttackerSite::default());
        let (rp_client, ttp_client) = (rp.client(), ttp.client());
        let (rp_addr, ttp_addr) = (rp.app.1, ttp.app.1);
        let (rp_proxy, ttp_proxy) = (rp.proxy, ttp.proxy);
        let parties = match sc.protocol {
            Protocol::OauthExplicit => {
                let r = Arc::new(apps::RelyingParty {
                    cfg: cfg.clone(),
                    flags: flags_of("RP"),
                    stateless: sc.stateless(),
                    trace: trace.clone(),
                    client: rp_client,
                    sessions: Default::default(),
                });
                let t = Arc::new(apps::Provider {
                    cfg: cfg.clone(),
                    flags: flags_of("TTP"),
                    stateless: sc.stateless(),
                    trace: trace.clone(),
                    codes: Default::default(),
                    tokens: Default::default(),
                });
                tasks.push(apps::serve(rp.app.0, r.clone()));
                tasks.push(apps::serve(ttp.app.0, t.clone()));
                Parties::Oauth { rp: r, ttp: t }
            }
            Protocol::PaypalIpn => {
                let s = Arc::new(apps::Shop {
                    cfg: cfg.clone(),
                    flags: flags_of("RP"),
                    trace: trace.clone(),
                    client: rp_client,
                    orders: Default::default(),
                    payments: Default::default(),
                });
                let p = Arc::new(apps::PayPal {
                    cfg: cfg.clone(),
                    trace: trace.clone(),
                    client: ttp_client,
                    key: rand::random(),
                    ledger: Default::default(),
                });
                tasks.push(apps::serve(rp.app.0, s.clone()));
                tasks.push(apps::serve(ttp.app.0, p.clone()));
                Parties::Paypal { shop: s, paypal: p }
            }
        };
        let attacker_host = attacker.1.to_string();
        tasks.push(apps::serve(attacker.0, site.clone()));
        let monitor_trace = Arc::new(EventTrace::default());
        let mut proxies = Vec::new();
        let mut workers = Vec::new();
        let mut slots = [("RP", rp_addr, rp_proxy), ("TTP", ttp_addr, ttp_proxy)];
        for m in monitors {
            let role = role_of(m);
            let Some(slot) = slots.iter_mut().find(|s| s.0 == role) else {
                return Err(TestbedError::Startup(format!("no testbed role for {}", m.participant)));
            };
            match m.kind {
                MonitorKind::ServiceWorker => {
                    let host = cfg.symbol(if role == "RP" { rp_sym } else { ttp_sym }).unwrap_or_default().to_string();
                    workers.push((host, m.monitor.clone()));
                }
                MonitorKind::Proxy => {
                    let Some(((listener, la), (forward, _))) = slot.2.take() else {
                        return Err(TestbedError::Startup(format!("two proxies for {role}")));
                    };
                    let mut pcfg = (*cfg).clone();
                    pcfg.listen = la.to_string();
                    pcfg.upstream = format!("http://{}", slot.1);
                    pcfg.forward_listen = None;
                    let opts = ProxyOptions {
                        trace: monitor_trace.clone(),
                        listener: Some(listener),
                        forward_listener: Some(forward),
                        ..ProxyOptions::default()
                    };
                    let h =
                        run_proxy(&m.monitor, pcfg, opts).await.map_err(|e| TestbedError::Startup(e.to_string()))?;
                    proxies.push(h);
                }
            }
        }
        Ok(World {
            cfg: cfg.clone(),
            trace,
            monitor_trace,
            rp_host: cfg.symbol(rp_sym).unwrap_or_default().to_string(),
            ttp_host: cfg.symbol(ttp_sym).unwrap_or_default().to_string(),
            attacker_host,
            parties,
            attacker: site,
            stateless: sc.stateless(),
            workers,
            proxies,
            browsers: Mutex::new(Vec::new()),
            tasks,
        })
    }

    /// A fresh browser of `user`, logged in at the TTP. Attackers run no
    /// service workers.
    pub fn browser(&self, user: &str, with_workers: bool) -> Arc<Browser> {
        let mut browsers = self.browsers.lock().expect("browsers");
        let mut b = Browser::new(format!("browser-{}", browsers.len() + 1), self.trace.clone());
        let cookie = match self.parties {
            Parties::Oauth { .. } => apps::IDP_COOKIE,
            Parties::Paypal { .. } => apps::PAYER_COOKIE,
        };
        b.set_cookie(&self.ttp_host, cookie, user);
        if with_workers {
            for (host, m) in &self.workers {
                if let Err(e) = b.install_worker(host, m, self.cfg.clone()) {
                    tracing::warn!(error = %e, "service worker not installed");
                }
            }
        }
        let b = Arc::new(b);
        browsers.push(b.clone());
        b
    }

    pub fn blocked(&self) -> Vec<Blocked> {
        let mut out: Vec<Blocked> = self.proxies.iter().flat_map(|p| p.blocked()).collect();
        for b in self.browsers.lock().expect("browsers").iter() {
            out.extend(b.blocked());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackOutcome {
    pub vuln: Vuln,
    pub number: u32,
    pub succeeded: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryVerdict {
    pub query: String,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub inattentive: Vec<String>,
    pub monitors: Vec<String>,
    pub honest_completed: bool,
    pub honest_detail: String,
    pub attacks: Vec<AttackOutcome>,
    pub queries: Vec<QueryVerdict>,
    pub blocked: Vec<Blocked>,
    pub trace: Vec<TraceEntry>,
}

impl RunReport {
    /// Why the deployment is not secure, if it is not.
    pub fn witness(&self) -> Option<String> {
        if !self.honest_completed {
            return Some(format!("honest flow did not complete: {}", self.honest_detail));
        }
        if let Some(a) = self.attacks.iter().find(|a| a.succeeded) {
            return Some(format!("attack #{} ({}) succeeded: {}", a.number, a.vuln.describe(), a.detail));
        }
        self.queries.iter().find(|q| !q.holds).map(|q| format!("query violated: {}", q.query))
    }

    pub fn secure(&self) -> bool {
        self.witness().is_none()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs the honest flow and then every attack enabled for `inattentive`,
/// all in one world with `monitors` deployed.
pub async fn run_scenario(
    sc: &Scenario,
    inattentive: &BTreeSet<String>,
    monitors: &[DeployedMonitor],
) -> Result<RunReport, TestbedError> {
    let effective: Vec<DeployedMonitor> =
        monitors.iter().filter(|m| sc.threat.client_trusted || m.kind != MonitorKind::ServiceWorker).cloned().collect();
    let world = World::start(sc, inattentive, &effective).await?;
    let (honest_completed, honest_detail) = match attacks::honest(&world).await {
        Ok(()) => (true, String::new()),
        Err(e) => (false, e),
    };
    let mut outcomes = Vec::new();
    for v in sc.active_flags(inattentive) {
        let (succeeded, detail) = match attacks::run(&world, v).await {
            Ok(true) => (true, "goal reached".to_string()),
            Ok(false) => (false, "goal not reached".to_string()),
            Err(e) => (false, e),
        };
        outcomes.push(AttackOutcome { vuln: v, number: v.number(), succeeded, detail });
    }
    let trace = world.trace.snapshot();
    let queries = sc
        .spec
        .queries
        .iter()
        .map(|q| QueryVerdict { query: pretty::query(q), holds: check_correspondence(&trace, q).holds() })
        .collect();
    Ok(RunReport {
        scenario: sc.name.clone(),
        inattentive: inattentive.iter().cloned().collect(),
        monitors: effective.iter().map(|m| format!("{} {:?}", m.participant, m.kind)).collect(),
        honest_completed,
        honest_detail,
        attacks: outcomes,
        queries,
        blocked: world.blocked(),
        trace,
    })
}

/// Blocking wrapper around [`run_scenario`] on its own runtime.
pub fn run_blocking(
    sc: &Scenario,
    inattentive: &BTreeSet<String>,
    monitors: &[DeployedMonitor],
) -> Result<RunReport, TestbedError> {
    std::thread::scope(|s| {
        s.spawn(|| {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .map_err(|e| TestbedError::Startup(e.to_string()))?;
            rt.block_on(run_scenario(sc, inattentive, monitors))
        })
        .join()
        .unwrap_or_else(|_| Err(TestbedError::Startup("testbed thread panicked".into())))
    })
}

/// Accepts a candidate when the honest flow completes, no attack reaches
/// its goal and every query holds on the recorded trace.
pub fn oracle_verify(sc: &Scenario, candidate: &Candidate) -> Result<(), String> {
    let inattentive = candidate.option.placements.keys().cloned().collect();
    let report = run_blocking(sc, &inattentive, &candidate.monitors).map_err(|e| e.to_string())?;
    match report.witness() {
        None => Ok(()),
        Some(w) => Err(w),
    }
}

pub struct TestbedOracle {
    pub scenario: Scenario,
}

impl VerifierHook for TestbedOracle {
    fn verify(&self, _spec: &SystemSpec, candidate: &Candidate) -> Result<(), String> {
        oracle_verify(&self.scenario, candidate)
    }
}
