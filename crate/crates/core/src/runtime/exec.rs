//! Executes a monitor process over runtime values.

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use rand::Rng;

use super::eval::{eval, matches, Env, EvalError};
use super::table::TableStore;
use super::trace::EventTrace;
use super::value::Value;
use super::ProtocolConfig;
use crate::ast::{Participant, Pattern, Process, Term};
use crate::pretty;

/// Constructors that only ever appear as channels.
pub const CHANNEL_CTORS: &[&str] = &[
    "serviceWorkerFetch",
    "serviceWorkerResult",
    "serviceWorkerSendHttpResponse",
    "rawRequest",
    "browserRequest",
    "browserResponse",
];

pub type Accept = Arc<dyn Fn(&Value) -> bool + Send + Sync>;

/// Channel side of an execution: where outputs go and inputs come from.
pub trait Io: Send {
    fn send(&mut self, chan: &str, v: Value) -> impl Future<Output = Result<(), String>> + Send;
    /// Next message on `chan` that `accept` admits.
    fn recv(&mut self, chan: &str, accept: Accept) -> impl Future<Output = Result<Value, String>> + Send;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// A check failed; `check` is an opaque id, `reason` stays in the logs.
    Blocked {
        check: String,
        reason: String,
    },
}

impl Outcome {
    pub fn blocked(&self) -> bool {
        matches!(self, Outcome::Blocked { .. })
    }
}

pub fn channel_key(c: &Term) -> String {
    match c {
        Term::Name(n) | Term::Var(n) | Term::Const(n) => n.clone(),
        Term::Ctor(f, _) => f.clone(),
        Term::Tuple(_) => pretty::term(c),
    }
}

pub struct Context {
    pub cfg: Arc<ProtocolConfig>,
    pub tables: Arc<TableStore>,
    pub trace: Arc<EventTrace>,
    pub session: String,
}

/// A monitor split into its shared definitions and the branches that each
/// start with an input.
pub struct Program {
    pub name: String,
    prelude: Vec<(Pattern, Term)>,
    branches: Vec<Process>,
    ids: HashMap<usize, usize>,
}

fn key(p: &Process) -> usize {
    p as *const Process as usize
}

impl Program {
    pub fn new(m: &Participant) -> Result<Program, String> {
        let mut prelude = Vec::new();
        let mut cur = &m.body;
        loop {
            match cur {
                Process::Repl(q) => cur = q,
                Process::Let(pat, t, q, None) => {
                    prelude.push((pat.clone(), t.clone()));
                    cur = q;
                }
                _ => break,
            }
        }
        let mut branches = Vec::new();
        fn leaves(p: &Process, out: &mut Vec<Process>) -> Result<(), String> {
            match p {
                Process::Par(a, b) => {
                    leaves(a, out)?;
                    leaves(b, out)
                }
                Process::Repl(a) => leaves(a, out),
                Process::Nil => Ok(()),
                Process::In(..) => {
                    out.push(p.clone());
                    Ok(())
                }
                other => {
                    Err(format!("monitor branch must start with an input, found `{}`", pretty::pretty_print(other)))
                }
            }
        }
        leaves(cur, &mut branches)?;
        let mut prog = Program { name: m.name.clone(), prelude, branches, ids: HashMap::new() };
        let mut ids = HashMap::new();
        let mut n = 0;
        for b in &prog.branches {
            b.visit(&mut |node| {
                n += 1;
                ids.insert(key(node), n);
            });
        }
        prog.ids = ids;
        Ok(prog)
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Channel each branch is triggered by.
    pub fn triggers(&self) -> Vec<String> {
        self.branches
            .iter()
            .map(|b| match b {
                Process::In(c, _, _) => channel_key(c),
                _ => unreachable!("branches start with an input"),
            })
            .collect()
    }

    pub fn base_env(&self, mut env: Env, cfg: &ProtocolConfig) -> Result<Env, EvalError> {
        for (pat, t) in &self.prelude {
            let v = eval(t, &env, cfg)?;
            matches(pat, &v, &mut env, cfg)?;
        }
        Ok(env)
    }

    /// Branch that handles `v` arriving on `chan`, chosen by its input
    /// pattern and the scheme, host and path of its uri selectors.
    pub fn dispatch(&self, chan: &str, v: &Value, env: &Env, cfg: &ProtocolConfig) -> Option<(usize, Env)> {
        for (i, b) in self.branches.iter().enumerate() {
            let Process::In(c, pat, body) = b else { continue };
            if channel_key(c) != chan {
                continue;
            }
            let mut e = env.clone();
            if !matches!(matches(pat, v, &mut e, cfg), Ok(true)) {
                continue;
            }
            let sels = selectors(body);
            if sels.is_empty() || sels.iter().any(|(p, t)| selector_matches(p, t, &e, cfg)) {
                return Some((i, e));
            }
        }
        None
    }

    pub fn prelude(&self) -> &[(Pattern, Term)] {
        &self.prelude
    }

    pub fn branches(&self) -> &[Process] {
        &self.branches
    }

    /// Opaque id of a node of one of `branches()`, as reported when it blocks.
    pub fn check_id(&self, p: &Process) -> String {
        format!("c{}", self.ids.get(&key(p)).copied().unwrap_or_default())
    }

    fn blocked(&self, p: &Process, reason: impl Into<String>) -> Outcome {
        Outcome::Blocked { check: self.check_id(p), reason: reason.into() }
    }

    /// Runs branch `i` after its triggering input has bound `env`.
    pub async fn run<I: Io>(&self, i: usize, mut env: Env, io: &mut I, ctx: &Context) -> Outcome {
        let Process::In(_, _, body) = &self.branches[i] else { unreachable!("branches start with an input") };
        let cfg = &ctx.cfg;
        let mut cur: &Process = body;
        loop {
            match cur {
                Process::Nil => return Outcome::Done,
                Process::Par(..) | Process::Repl(_) | Process::Call(..) => {
                    return self.blocked(cur, "unsupported construct inside a monitor branch");
                }
                Process::New(x, _, q) => {
                    let bytes: [u8; 12] = rand::rng().random();
                    env.insert(x.clone(), Value::Str(hex(&bytes)));
                    cur = q;
                }
                Process::In(c, pat, q) => {
                    let accept = acceptor(pat, &env, cfg);
                    let v = match io.recv(&channel_key(c), accept).await {
                        Ok(v) => v,
                        Err(e) => return self.blocked(cur, e),
                    };
                    match matches(pat, &v, &mut env, cfg) {
                        Ok(true) => cur = q,
                        Ok(false) => {
                            return self.blocked(cur, format!("input does not match {}", pretty::pattern(pat)))
                        }
                        Err(e) => return self.blocked(cur, e.to_string()),
                    }
                }
                Process::Out(c, t, q) => {
                    let v = match eval(t, &env, cfg) {
                        Ok(v) => v,
                        Err(e) => return self.blocked(cur, e.to_string()),
                    };
                    if let Err(e) = io.send(&channel_key(c), v).await {
                        return self.blocked(cur, e);
                    }
                    cur = q;
                }
                Process::Let(pat, t, q, els) => {
                    let mut e = env.clone();
                    let ok = match eval(t, &env, cfg) {
                        Ok(v) => matches(pat, &v, &mut e, cfg),
                        Err(err) => Err(err),
                    };
                    match ok {
                        Ok(true) => {
                            env = e;
                            cur = q;
                        }
                        Ok(false) => match els {
                            Some(other) if !(is_selector(pat) && selector_matches(pat, t, &env, cfg)) => cur = other,
                            _ => {
                                return self
                                    .blocked(cur, format!("let {} = {} failed", pretty::pattern(pat), pretty::term(t)))
                            }
                        },
                        Err(err) => return self.blocked(cur, err.to_string()),
                    }
                }
                Process::If(a, b, q, els) => {
                    let same = match (eval(a, &env, cfg), eval(b, &env, cfg)) {
                        (Ok(x), Ok(y)) => x.same(&y),
                        (Err(e), _) | (_, Err(e)) => return self.blocked(cur, e.to_string()),
                    };
                    match (same, els) {
                        (true, _) => cur = q,
                        (false, Some(other)) => cur = other,
                        (false, None) => {
                            return self.blocked(cur, format!("if {} = {} failed", pretty::term(a), pretty::term(b)))
                        }
                    }
                }
                Process::Insert(tb, args, q) => {
                    let vs: Result<Vec<Value>, _> = args.iter().map(|a| eval(a, &env, cfg)).collect();
                    match vs {
                        Ok(vs) => {
                            if let Err(e) = ctx.tables.insert(tb, vs) {
                                return self.blocked(cur, format!("table unavailable: {e}"));
                            }
                        }
                        Err(e) => return self.blocked(cur, e.to_string()),
                    }
                    cur = q;
                }
                Process::Get(tb, pats, q, els) => {
                    let mut bound = None;
                    let found = ctx.tables.find(tb, |row| {
                        if row.len() != pats.len() {
                            return false;
                        }
                        let mut e = env.clone();
                        for (p, v) in pats.iter().zip(row) {
                            if !matches!(matches(p, v, &mut e, cfg), Ok(true)) {
                                return false;
                            }
                        }
                        bound = Some(e);
                        true
                    });
                    match (found, bound, els) {
                        (Some(_), Some(e), _) => {
                            env = e;
                            cur = q;
                        }
                        (_, _, Some(other)) => cur = other,
                        _ => {
                            let shown: Vec<String> = pats.iter().map(pretty::pattern).collect();
                            return self.blocked(cur, format!("get {tb}({}) found no row", shown.join(", ")));
                        }
                    }
                }
                Process::Event(ev, args, q) => {
                    match args.iter().map(|a| eval(a, &env, cfg)).collect::<Result<Vec<_>, _>>() {
                        Ok(vs) => ctx.trace.append(ev, vs.iter().map(Value::to_string).collect(), &ctx.session),
                        Err(e) => return self.blocked(cur, e.to_string()),
                    }
                    cur = q;
                }
            }
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn acceptor(pat: &Pattern, env: &Env, cfg: &Arc<ProtocolConfig>) -> Accept {
    let (pat, env, cfg) = (pat.clone(), env.clone(), cfg.clone());
    Arc::new(move |v: &Value| {
        let mut e = env.clone();
        matches!(matches(&pat, v, &mut e, &cfg), Ok(true))
    })
}

pub fn is_selector(p: &Pattern) -> bool {
    crate::transform::uri_path(p).is_some()
}

/// The uri selectors reachable from the start of a branch through
/// pattern matches and their else branches.
pub fn selectors(p: &Process) -> Vec<(Pattern, Term)> {
    let mut out = Vec::new();
    let mut stack = vec![p];
    while let Some(cur) = stack.pop() {
        if let Process::Let(pat, t, q, els) = cur {
            if is_selector(pat) {
                out.push((pat.clone(), t.clone()));
            } else {
                stack.push(q);
            }
            if let Some(e) = els {
                stack.push(e);
            }
        }
    }
    out
}

/// Whether the scheme, host and path parts of a uri selector match,
/// ignoring its parameters.
fn selector_matches(pat: &Pattern, t: &Term, env: &Env, cfg: &ProtocolConfig) -> bool {
    let Pattern::Ctor(f, ps) = crate::alpha::normalize_pattern(pat) else { return false };
    if f != "uri" || ps.len() != 4 {
        return false;
    }
    let prefix =
        Pattern::Ctor(f, vec![ps[0].clone(), ps[1].clone(), ps[2].clone(), Pattern::Bind("_params".into(), None)]);
    let Ok(v) = eval(t, env, cfg) else { return false };
    let mut e = env.clone();
    matches!(matches(&prefix, &v, &mut e, cfg), Ok(true))
}
