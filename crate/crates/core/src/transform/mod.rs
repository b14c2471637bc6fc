//! Inattentive-participant derivation and monitor synthesis.

mod engine;
mod inattentive;
mod optimize;
mod sw;

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;

pub use engine::{monitor_table, uri_path, Delayed, MonitorState, REQUEST, RESPONSE};
pub use inattentive::make_inattentive;
pub use optimize::{free_vars, optimize};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("delayed expression is never dischargeable: {0}")]
    Undischargeable(String),
    #[error("check unobservable at client: {0}")]
    Unobservable(String),
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthOptions {
    pub optimize: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { optimize: true }
    }
}

/// A synthesized monitor together with the relay channels it introduced,
/// as (participant channel, monitor-to-participant, participant-to-monitor).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Monitor {
    pub process: Participant,
    pub relays: Vec<(Ident, Ident, Ident)>,
    pub tables: Vec<TableDecl>,
}

fn monitor_name(spec: &SystemSpec, p: &Participant, suffix: &str) -> Ident {
    let base = spec.role_of(&p.name).map(str::to_string).unwrap_or_else(|| p.name.clone());
    format!("{base}{suffix}")
}

fn monitor_tables(spec: &SystemSpec, body: &Process) -> Vec<TableDecl> {
    let mut used = BTreeSet::new();
    body.visit(&mut |n| {
        if let Process::Insert(tb, _, _) | Process::Get(tb, _, _, _) = n {
            used.insert(tb.clone());
        }
    });
    spec.tables
        .iter()
        .filter(|t| used.contains(&monitor_table(&t.name)))
        .map(|t| TableDecl { name: monitor_table(&t.name), columns: t.columns.clone() })
        .collect()
}

/// Reverse-proxy monitor for the ideal participant `p`.
pub fn a2m_proxy(spec: &SystemSpec, p: &Participant, opts: SynthOptions) -> Result<Monitor, TransformError> {
    let mut synth = engine::Synth::new(spec, p, engine::Mode::Proxy);
    let st = synth.initial_state(p);
    let mut body = synth.go(&p.body, st)?;
    if opts.optimize {
        let params = p.params.iter().map(|(x, _)| x.clone()).collect();
        body = optimize(&body, &params);
    }
    Ok(Monitor {
        tables: monitor_tables(spec, &body),
        relays: synth.synth_channels(),
        process: Participant { name: monitor_name(spec, p, "Proxy"), params: p.params.clone(), body },
    })
}

/// Service-worker monitor for `p`, running in the browser modelled by `ua`.
pub fn a2m_sw(
    spec: &SystemSpec,
    p: &Participant,
    ua: &Participant,
    opts: SynthOptions,
) -> Result<Monitor, TransformError> {
    let visible = sw::observable_ctors(spec, &p.name, &ua.name);
    let (pre, branches) = sw::split_branches(&p.body);
    let mut kept = Vec::new();
    for b in branches {
        match sw::branch_path(&b) {
            Some(path) if !visible.contains(&path) => {
                if let Some(check) = sw::first_check(&b) {
                    return Err(TransformError::Unobservable(format!("{check} on the {path} branch")));
                }
            }
            _ => kept.push(b),
        }
    }
    let browser = match ua.params.first() {
        Some((b, _)) => b.clone(),
        None => "b".to_string(),
    };
    let visible_body = sw::rebuild(&pre, kept);
    let mode = engine::Mode::Worker { browser: browser.clone(), ua_checks: sw::ua_response_checks(&ua.body) };
    let view = Participant { name: p.name.clone(), params: p.params.clone(), body: visible_body };
    let mut synth = engine::Synth::new(spec, &view, mode);
    let st = synth.initial_state(&view);
    let mut body = synth.go(&view.body, st)?;
    if opts.optimize {
        body = optimize(&body, &BTreeSet::new());
    }
    let (pre, branches) = sw::split_branches(&body);
    let merged = sw::merge_handlers(branches)?;
    let body = sw::rebuild(&pre, vec![merged]);
    Ok(Monitor {
        tables: monitor_tables(spec, &body),
        relays: Vec::new(),
        process: Participant {
            name: monitor_name(spec, p, "ServiceWorker"),
            params: vec![(browser, "Browser".into())],
            body,
        },
    })
}

/// Declarations a parser needs to read a monitor back: its relay channels and tables.
pub fn monitor_declarations(m: &Monitor) -> String {
    let mut out = String::new();
    for (_, o, i) in &m.relays {
        out.push_str(&format!("free {o}, {i}: channel.\n"));
    }
    for t in &m.tables {
        out.push_str(&format!("table {}({}).\n", t.name, t.columns.join(", ")));
    }
    out
}

/// Relay-channel map of a proxy monitor, from participant channel to the
/// (monitor-to-participant, participant-to-monitor) pair.
pub fn relay_map(m: &Monitor) -> BTreeMap<Ident, (Ident, Ident)> {
    m.relays.iter().map(|(c, o, i)| (c.clone(), (o.clone(), i.clone()))).collect()
}
