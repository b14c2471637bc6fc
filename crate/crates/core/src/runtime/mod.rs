//! Executing monitors against real HTTP traffic.

pub mod codec;
pub mod config;
pub mod eval;
pub mod exec;
pub mod http;
pub mod message;
pub mod proxy;
pub mod table;
pub mod trace;
pub mod value;

use std::collections::BTreeMap;

pub use codec::CodecError;
pub use config::{Carrier, Codec, ConfigError, ProtocolConfig, Transform, WorkerConfig};
pub use eval::{Env, EvalError};
pub use message::HttpMessage;
pub use proxy::{run_proxy, Blocked, ProxyHandle, ProxyOptions};
pub use table::TableStore;
pub use trace::{check_correspondence, EventTrace, TraceEntry, Verdict};
pub use value::{UrlValue, Value};

use crate::ast::{Pattern, Process, Term};

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("monitor cannot be executed: {0}")]
    Monitor(String),
    #[error("upstream unreachable: {0}")]
    Upstream(String),
    #[error("cannot listen on {0}: {1}")]
    Bind(String, std::io::Error),
}

/// Matches `pattern` against the runtime view of `msg`, extending `env` on success.
pub fn decode(msg: &HttpMessage, pattern: &Pattern, env: &Env, cfg: &ProtocolConfig) -> Result<Option<Env>, EvalError> {
    let v = message::request_value(msg);
    let mut out = env.clone();
    Ok(eval::matches(pattern, &v, &mut out, cfg)?.then_some(out))
}

/// Evaluates `term` under `env` to a runtime value.
pub fn encode(env: &Env, term: &Term, cfg: &ProtocolConfig) -> Result<Value, EvalError> {
    eval::eval(term, env, cfg)
}

fn term_arities(t: &Term, out: &mut BTreeMap<String, usize>) {
    match t {
        Term::Ctor(f, args) => {
            out.entry(f.clone()).or_insert(args.len());
            args.iter().for_each(|a| term_arities(a, out));
        }
        Term::Tuple(ts) => ts.iter().for_each(|a| term_arities(a, out)),
        _ => {}
    }
}

fn pattern_arities(p: &Pattern, out: &mut BTreeMap<String, usize>) {
    match p {
        Pattern::Ctor(f, ps) => {
            out.entry(f.clone()).or_insert(ps.len());
            ps.iter().for_each(|a| pattern_arities(a, out));
        }
        Pattern::Tuple(ps) => ps.iter().for_each(|a| pattern_arities(a, out)),
        Pattern::Eq(t) => term_arities(t, out),
        Pattern::Bind(..) => {}
    }
}

/// Constructors used by a process with their arity.
pub fn ctor_arities(p: &Process) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    p.visit(&mut |n| match n {
        Process::In(c, pat, _) => {
            term_arities(c, &mut out);
            pattern_arities(pat, &mut out);
        }
        Process::Out(c, t, _) => {
            term_arities(c, &mut out);
            term_arities(t, &mut out);
        }
        Process::Let(pat, t, _, _) => {
            pattern_arities(pat, &mut out);
            term_arities(t, &mut out);
        }
        Process::Insert(_, ts, _) | Process::Event(_, ts, _) | Process::Call(_, ts) => {
            ts.iter().for_each(|t| term_arities(t, &mut out))
        }
        Process::Get(_, ps, _, _) => ps.iter().for_each(|p| pattern_arities(p, &mut out)),
        Process::If(a, b, _, _) => {
            term_arities(a, &mut out);
            term_arities(b, &mut out);
        }
        _ => {}
    });
    out
}

/// Non-builtin constructors of a monitor that the config gives no wire form.
pub fn missing_symbols(m: &crate::ast::Participant, cfg: &ProtocolConfig) -> Vec<String> {
    ctor_arities(&m.body)
        .into_iter()
        .filter(|(f, n)| *n > 0 && !eval::BUILTIN.contains(&f.as_str()) && cfg.codec(f).is_none())
        .filter(|(f, _)| !exec::CHANNEL_CTORS.contains(&f.as_str()))
        .map(|(f, _)| f)
        .collect()
}

/// Checks every codec agrees with the arity its constructor is used at.
pub fn validate(p: &Process, cfg: &ProtocolConfig) -> Result<(), ConfigError> {
    for (f, arity) in ctor_arities(p) {
        if let Some(c) = cfg.codec(&f) {
            if c.fields.len() != arity {
                return Err(ConfigError::Arity { name: f, fields: c.fields.len(), arity });
            }
        }
    }
    Ok(())
}
