//! Placement search: which participants get which monitors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::ast::{Ident, Participant, Process, SystemSpec, Term};
use crate::pretty;
use crate::transform::{a2m_proxy, a2m_sw, make_inattentive, monitor_declarations, Monitor, SynthOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreatModel {
    pub client_trusted: bool,
    pub network_attacker: bool,
}

impl ThreatModel {
    pub const TRUSTED: ThreatModel = ThreatModel { client_trusted: true, network_attacker: false };
    pub const UNTRUSTED: ThreatModel = ThreatModel { client_trusted: false, network_attacker: false };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    #[serde(rename = "sw")]
    ServiceWorker,
    Proxy,
    Both,
}

impl Placement {
    pub const ALL: [Placement; 3] = [Placement::ServiceWorker, Placement::Proxy, Placement::Both];

    /// Lower is easier to deploy.
    pub fn score(self) -> u32 {
        match self {
            Placement::ServiceWorker => 1,
            Placement::Proxy => 2,
            Placement::Both => 3,
        }
    }

    pub fn kinds(self) -> &'static [MonitorKind] {
        match self {
            Placement::ServiceWorker => &[MonitorKind::ServiceWorker],
            Placement::Proxy => &[MonitorKind::Proxy],
            Placement::Both => &[MonitorKind::ServiceWorker, MonitorKind::Proxy],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Placement::ServiceWorker => "sw",
            Placement::Proxy => "proxy",
            Placement::Both => "both",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentOption {
    pub placements: BTreeMap<String, Placement>,
}

impl DeploymentOption {
    pub fn score(&self) -> u32 {
        self.placements.values().map(|p| p.score()).sum()
    }

    pub fn describe(&self) -> String {
        if self.placements.is_empty() {
            return "no monitors".into();
        }
        self.placements.iter().map(|(p, pl)| format!("{p}: {}", pl.name())).collect::<Vec<_>>().join(", ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorKind {
    Proxy,
    ServiceWorker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeployedMonitor {
    pub participant: String,
    pub kind: MonitorKind,
    pub monitor: Monitor,
}

/// An option together with its synthesized monitors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub option: DeploymentOption,
    pub monitors: Vec<DeployedMonitor>,
}

impl Candidate {
    /// The monitors that remain in force under `threat`.
    pub fn effective(&self, threat: &ThreatModel) -> Candidate {
        let monitors = self
            .monitors
            .iter()
            .filter(|m| threat.client_trusted || m.kind != MonitorKind::ServiceWorker)
            .cloned()
            .collect();
        Candidate { option: self.option.clone(), monitors }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub option: DeploymentOption,
    pub witness: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonitoredSpec {
    #[serde(skip)]
    pub base: SystemSpec,
    pub inattentive: BTreeSet<String>,
    pub option: DeploymentOption,
    pub monitors: Vec<DeployedMonitor>,
    /// Per proxied participant, channel to (monitor-to-participant, participant-to-monitor).
    pub mch: BTreeMap<String, BTreeMap<Ident, (Ident, Ident)>>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("specification has no UA participant")]
    NoUserAgent,
    #[error("no placement passes verification ({} options rejected)", .0.len())]
    NoSecurePlacement(Vec<Rejection>),
}

/// Decides whether a monitored system is secure.
pub trait VerifierHook {
    /// `Err` carries a witness of the failure.
    fn verify(&self, spec: &SystemSpec, candidate: &Candidate) -> Result<(), String>;
}

impl<F: Fn(&SystemSpec, &Candidate) -> Result<(), String>> VerifierHook for F {
    fn verify(&self, spec: &SystemSpec, candidate: &Candidate) -> Result<(), String> {
        self(spec, candidate)
    }
}

/// Every option for `names`, easiest first. Ties keep the order of
/// `Placement::ALL` on the participants in the given order.
pub fn enumerate_options(names: &[String]) -> Vec<DeploymentOption> {
    let mut combos: Vec<Vec<Placement>> = vec![Vec::new()];
    for _ in names {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                Placement::ALL.iter().map(move |p| {
                    let mut c = c.clone();
                    c.push(*p);
                    c
                })
            })
            .collect();
    }
    combos.sort_by_key(|c| c.iter().map(|p| p.score()).sum::<u32>());
    combos.into_iter().map(|c| DeploymentOption { placements: names.iter().cloned().zip(c).collect() }).collect()
}

struct Synth<'a> {
    spec: &'a SystemSpec,
    ua: Option<&'a Participant>,
    cache: BTreeMap<(String, MonitorKind), Result<Monitor, String>>,
}

impl Synth<'_> {
    fn get(&mut self, name: &str, kind: MonitorKind) -> Result<Monitor, String> {
        let key = (name.to_string(), kind);
        if let Some(r) = self.cache.get(&key) {
            return r.clone();
        }
        let p = self.spec.participant(name).expect("checked participant");
        let r = match kind {
            MonitorKind::Proxy => a2m_proxy(self.spec, p, SynthOptions::default()).map_err(|e| e.to_string()),
            MonitorKind::ServiceWorker => match self.ua {
                Some(ua) => a2m_sw(self.spec, p, ua, SynthOptions::default()).map_err(|e| e.to_string()),
                None => Err(DeployError::NoUserAgent.to_string()),
            },
        };
        self.cache.insert(key, r.clone());
        r
    }
}

/// Finds the easiest placement for monitors of `inattentive` that `verify`
/// accepts. Service workers are left out of verification when the client
/// is not trusted.
pub fn search_deployment(
    spec: &SystemSpec,
    inattentive: &BTreeSet<String>,
    threat: ThreatModel,
    verify: &dyn VerifierHook,
) -> Result<MonitoredSpec, DeployError> {
    for name in inattentive {
        if spec.participant(name).is_none() {
            return Err(DeployError::UnknownParticipant(name.clone()));
        }
    }
    let names: Vec<String> =
        spec.participants.iter().map(|p| p.name.clone()).filter(|n| inattentive.contains(n)).collect();
    let mut synth = Synth { spec, ua: spec.participant_for_role("UA"), cache: BTreeMap::new() };
    let mut rejected = Vec::new();
    for option in enumerate_options(&names) {
        let mut monitors = Vec::new();
        let mut failure = None;
        for (name, placement) in &option.placements {
            for kind in placement.kinds() {
                match synth.get(name, *kind) {
                    Ok(monitor) => monitors.push(DeployedMonitor { participant: name.clone(), kind: *kind, monitor }),
                    Err(e) => failure = failure.or(Some(format!("{name} {}: {e}", placement.name()))),
                }
            }
        }
        if let Some(witness) = failure {
            rejected.push(Rejection { option, witness });
            continue;
        }
        let candidate = Candidate { option: option.clone(), monitors };
        if names.is_empty() {
            return Ok(monitored(spec, inattentive, candidate, rejected));
        }
        match verify.verify(spec, &candidate.effective(&threat)) {
            Ok(()) => return Ok(monitored(spec, inattentive, candidate, rejected)),
            Err(witness) => rejected.push(Rejection { option, witness }),
        }
    }
    Err(DeployError::NoSecurePlacement(rejected))
}

fn monitored(
    spec: &SystemSpec,
    inattentive: &BTreeSet<String>,
    c: Candidate,
    rejected: Vec<Rejection>,
) -> MonitoredSpec {
    let mch = c
        .monitors
        .iter()
        .filter(|m| m.kind == MonitorKind::Proxy)
        .map(|m| (m.participant.clone(), crate::transform::relay_map(&m.monitor)))
        .collect();
    MonitoredSpec {
        base: spec.clone(),
        inattentive: inattentive.clone(),
        option: c.option,
        monitors: c.monitors,
        mch,
        rejected,
    }
}

/// The monitored system as specification text: inattentive participants
/// talk to their proxies over the relay channels, service workers run
/// beside each browser, everything else is kept.
pub fn compose_spec(spec: &SystemSpec, candidate: &Candidate) -> String {
    let mut out = pretty::declarations(spec);
    let mut bodies = Vec::new();
    let mut extra: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut renamed_to: BTreeMap<String, String> = BTreeMap::new();
    let ua = spec.participant_for_role("UA").map(|p| p.name.clone()).unwrap_or_default();
    for (i, m) in candidate.monitors.iter().enumerate() {
        let renamed = rename_relays(&m.monitor, &format!("{}_", i + 1));
        out.push_str(&monitor_declarations(&renamed));
        let p = spec.participant(&m.participant).expect("monitored participant");
        match m.kind {
            MonitorKind::Proxy => {
                let relays = crate::transform::relay_map(&renamed);
                let body = make_inattentive(spec, &p.body).map_channels(&|c, is_out| match c {
                    Term::Name(n) => match relays.get(n) {
                        Some((to_p, from_p)) => Term::Name(if is_out { from_p.clone() } else { to_p.clone() }),
                        None => c.clone(),
                    },
                    other => other.clone(),
                });
                let name = format!("{}Inattentive", p.name);
                bodies.push(Participant { name: name.clone(), params: p.params.clone(), body });
                renamed_to.insert(p.name.clone(), name);
                extra.entry(p.name.clone()).or_default().push(renamed.process.name.clone());
            }
            MonitorKind::ServiceWorker => {
                extra.entry(ua.clone()).or_default().push(renamed.process.name.clone());
            }
        }
        bodies.push(renamed.process);
    }
    for p in &spec.participants {
        if renamed_to.contains_key(&p.name) {
            continue;
        }
        if candidate.option.placements.contains_key(&p.name) {
            let name = format!("{}Inattentive", p.name);
            bodies.push(Participant {
                name: name.clone(),
                params: p.params.clone(),
                body: make_inattentive(spec, &p.body),
            });
            renamed_to.insert(p.name.clone(), name);
        } else {
            bodies.push(p.clone());
        }
    }
    for b in &bodies {
        out.push('\n');
        out.push_str(&pretty::participant(b));
    }
    for q in &spec.queries {
        out.push('\n');
        out.push_str(&pretty::query(q));
    }
    let main = match &spec.main {
        Some(m) => m.clone(),
        None => spec
            .participants
            .iter()
            .map(|p| {
                Process::Repl(Box::new(Process::Call(
                    p.name.clone(),
                    p.params.iter().map(|(x, _)| Term::Var(x.clone())).collect(),
                )))
            })
            .reduce(|a, b| Process::Par(Box::new(a), Box::new(b)))
            .unwrap_or(Process::Nil),
    };
    let main = attach(&main, &renamed_to, &extra);
    out.push_str(&format!("\nprocess\n  {}\n", pretty::pretty_print(&main).trim()));
    out
}

/// Rewrites participant calls of the main composition: renamed bodies are
/// called by their new name and monitors run in parallel with the call.
fn attach(p: &Process, renamed: &BTreeMap<String, String>, extra: &BTreeMap<String, Vec<String>>) -> Process {
    match p {
        Process::Par(a, b) => Process::Par(Box::new(attach(a, renamed, extra)), Box::new(attach(b, renamed, extra))),
        Process::Repl(q) => Process::Repl(Box::new(attach(q, renamed, extra))),
        Process::New(x, t, q) => Process::New(x.clone(), t.clone(), Box::new(attach(q, renamed, extra))),
        Process::Call(name, args) => {
            let base = Process::Call(renamed.get(name).cloned().unwrap_or_else(|| name.clone()), args.clone());
            extra
                .get(name)
                .into_iter()
                .flatten()
                .fold(base, |acc, m| Process::Par(Box::new(acc), Box::new(Process::Call(m.clone(), args.clone()))))
        }
        other => other.clone(),
    }
}

fn rename_relays(m: &Monitor, prefix: &str) -> Monitor {
    if m.relays.is_empty() {
        return m.clone();
    }
    let map: BTreeMap<Ident, Ident> = m
        .relays
        .iter()
        .flat_map(|(_, o, i)| [o.clone(), i.clone()])
        .map(|n| (n.clone(), n.replacen("mC_", &format!("mC_{prefix}"), 1)))
        .collect();
    let body = m.process.body.map_channels(&|c, _| match c {
        Term::Name(n) => Term::Name(map.get(n).cloned().unwrap_or_else(|| n.clone())),
        other => other.clone(),
    });
    Monitor {
        process: Participant { body, ..m.process.clone() },
        relays: m.relays.iter().map(|(c, o, i)| (c.clone(), map[o].clone(), map[i].clone())).collect(),
        tables: m.tables.clone(),
    }
}

/// Runs a ProVerif-compatible tool on the composed system and reads its
/// `RESULT ... is true.` lines.
pub struct ExternalVerifier {
    pub program: PathBuf,
    pub workdir: PathBuf,
}

impl VerifierHook for ExternalVerifier {
    fn verify(&self, spec: &SystemSpec, candidate: &Candidate) -> Result<(), String> {
        let file = self.workdir.join(format!("monitored-{}.pv", candidate.option.score()));
        std::fs::write(&file, compose_spec(spec, candidate)).map_err(|e| format!("{}: {e}", file.display()))?;
        let out =
            Command::new(&self.program).arg(&file).output().map_err(|e| format!("{}: {e}", self.program.display()))?;
        parse_results(&String::from_utf8_lossy(&out.stdout))
    }
}

pub fn parse_results(stdout: &str) -> Result<(), String> {
    let mut seen = 0;
    for line in stdout.lines().map(str::trim).filter(|l| l.starts_with("RESULT")) {
        seen += 1;
        if !line.trim_end_matches('.').ends_with("is true") {
            return Err(line.to_string());
        }
    }
    if seen == 0 {
        return Err("verifier printed no RESULT lines".into());
    }
    Ok(())
}

/// Participant processes used as inattentive stand-ins, by name.
pub fn inattentive_processes(spec: &SystemSpec, names: &BTreeSet<String>) -> BTreeMap<String, Process> {
    names.iter().filter_map(|n| spec.participant(n).map(|p| (n.clone(), make_inattentive(spec, &p.body)))).collect()
}
