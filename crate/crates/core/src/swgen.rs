//! Service-worker code generation from a worker monitor and its config.
//!
//! The emitted script is plain JavaScript linked against the browser-side
//! support library, which supplies the value model, codecs and storage.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use crate::ast::{Pattern, Process, Term};
use crate::runtime::exec::{is_selector, selectors, Program};
use crate::runtime::{missing_symbols, ProtocolConfig};
use crate::transform::Monitor;

pub const SUPPORT_SCRIPT: &str = "bulwark-support.js";

/// Channels a worker monitor may use, all indexed by the browser.
pub const WORKER_CHANNELS: [&str; 4] =
    ["serviceWorkerFetch", "rawRequest", "serviceWorkerResult", "serviceWorkerSendHttpResponse"];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EmitError {
    #[error("unsupported construct in worker monitor: {0}")]
    UnsupportedConstruct(String),
    #[error("no codec or symbol for: {}", .0.join(", "))]
    MissingCodec(Vec<String>),
    #[error("config has no worker origin")]
    MissingOrigin,
}

fn js_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

struct Gen<'a> {
    program: &'a Program,
    browser: String,
    out: String,
}

impl Gen<'_> {
    fn term(&self, t: &Term) -> String {
        match t {
            Term::Var(x) | Term::Name(x) | Term::Const(x) if *x == self.browser => "M.browser()".into(),
            Term::Var(x) | Term::Name(x) | Term::Const(x) => format!("M.get(env, {})", js_str(x)),
            Term::Tuple(ts) => format!("M.tuple([{}])", self.terms(ts)),
            Term::Ctor(f, args) => format!("M.apply({}, [{}])", js_str(f), self.terms(args)),
        }
    }

    fn terms(&self, ts: &[Term]) -> String {
        ts.iter().map(|t| self.term(t)).collect::<Vec<_>>().join(", ")
    }

    fn pattern(&self, p: &Pattern) -> String {
        match p {
            Pattern::Bind(x, _) => format!("M.bind({})", js_str(x)),
            Pattern::Eq(t) => format!("M.eq(() => {})", self.term(t)),
            Pattern::Tuple(ps) => format!("M.ptuple([{}])", self.patterns(ps)),
            Pattern::Ctor(f, ps) => format!("M.pctor({}, [{}])", js_str(f), self.patterns(ps)),
        }
    }

    fn patterns(&self, ps: &[Pattern]) -> String {
        ps.iter().map(|p| self.pattern(p)).collect::<Vec<_>>().join(", ")
    }

    fn line(&mut self, indent: usize, s: &str) {
        let _ = writeln!(self.out, "{}{s}", "  ".repeat(indent));
    }

    fn channel(&self, c: &Term) -> Result<String, EmitError> {
        match c {
            Term::Ctor(f, args) if args.len() == 1 && WORKER_CHANNELS.contains(&f.as_str()) => Ok(f.clone()),
            other => Err(EmitError::UnsupportedConstruct(format!("channel {}", crate::pretty::term(other)))),
        }
    }

    fn block(&self, p: &Process) -> String {
        format!("throw io.block({});", js_str(&self.program.check_id(p)))
    }

    fn otherwise(&mut self, node: &Process, els: &Option<Box<Process>>, indent: usize) -> Result<(), EmitError> {
        self.line(indent, "} else {");
        match els {
            Some(e) => self.process(e, indent + 1)?,
            None => {
                let b = self.block(node);
                self.line(indent + 1, &b);
            }
        }
        self.line(indent, "}");
        Ok(())
    }

    fn process(&mut self, p: &Process, indent: usize) -> Result<(), EmitError> {
        match p {
            Process::Nil => {
                let b = self.block(p);
                self.line(indent, &b);
            }
            Process::Par(..) | Process::Repl(_) | Process::Call(..) => {
                return Err(EmitError::UnsupportedConstruct(crate::pretty::pretty_print(p)));
            }
            Process::New(x, _, q) => {
                self.line(indent, &format!("env[{}] = M.fresh();", js_str(x)));
                self.process(q, indent)?;
            }
            Process::In(c, pat, q) => {
                let chan = self.channel(c)?;
                let line =
                    format!("if (!M.match({}, io.take({}), env)) {}", self.pattern(pat), js_str(&chan), self.block(p));
                self.line(indent, &line);
                self.process(q, indent)?;
            }
            Process::Out(c, t, q) => match self.channel(c)?.as_str() {
                "rawRequest" => {
                    self.line(indent, &format!("await io.rawRequest({});", self.term(t)));
                    self.process(q, indent)?;
                }
                "serviceWorkerSendHttpResponse" => {
                    if **q != Process::Nil {
                        return Err(EmitError::UnsupportedConstruct("process continues after the response".into()));
                    }
                    self.line(indent, &format!("return io.respond({});", self.term(t)));
                }
                other => return Err(EmitError::UnsupportedConstruct(format!("output on {other}"))),
            },
            Process::Let(pat, t, q, els) => {
                let (pj, tj) = (self.pattern(pat), self.term(t));
                self.line(indent, &format!("if (M.match({pj}, {tj}, env)) {{"));
                self.process(q, indent + 1)?;
                if els.is_some() && is_selector(pat) {
                    self.line(indent, &format!("}} else if (M.prefixMatches({pj}, {tj}, env)) {{"));
                    let b = self.block(p);
                    self.line(indent + 1, &b);
                }
                self.otherwise(p, els, indent)?;
            }
            Process::If(a, b, q, els) => {
                self.line(indent, &format!("if (M.same({}, {})) {{", self.term(a), self.term(b)));
                self.process(q, indent + 1)?;
                self.otherwise(p, els, indent)?;
            }
            Process::Insert(tb, args, q) => {
                self.line(indent, &format!("await io.store({}, [{}]);", js_str(tb), self.terms(args)));
                self.process(q, indent)?;
            }
            Process::Get(tb, pats, q, els) => {
                self.line(indent, &format!("if (await io.lookup({}, [{}], env)) {{", js_str(tb), self.patterns(pats)));
                self.process(q, indent + 1)?;
                self.otherwise(p, els, indent)?;
            }
            Process::Event(ev, args, q) => {
                self.line(indent, &format!("io.event({}, [{}]);", js_str(ev), self.terms(args)));
                self.process(q, indent)?;
            }
        }
        Ok(())
    }
}

/// Compiles worker monitor `m` into `bulwark-sw.js`.
pub fn emit_service_worker(m: &Monitor, cfg: &ProtocolConfig) -> Result<String, EmitError> {
    let worker = cfg.worker();
    if worker.origin.is_empty() {
        return Err(EmitError::MissingOrigin);
    }
    let missing = missing_symbols(&m.process, cfg);
    if !missing.is_empty() {
        return Err(EmitError::MissingCodec(missing));
    }
    let program = Program::new(&m.process).map_err(EmitError::UnsupportedConstruct)?;
    let browser = m.process.params.first().map(|(b, _)| b.clone()).unwrap_or_else(|| "b".into());
    let mut g = Gen { program: &program, browser, out: String::new() };
    let config = serde_json::to_string_pretty(cfg).expect("config serializes");
    g.line(0, &format!("// Service-worker monitor {} for {}", m.process.name, worker.origin));
    g.line(0, &format!("importScripts({});", js_str(SUPPORT_SCRIPT)));
    g.line(0, "");
    g.line(0, &format!("const CONFIG = {config};"));
    g.line(0, "const M = Bulwark.monitor(CONFIG);");
    g.line(0, "");
    g.line(0, "self.addEventListener(\"install\", (event) => event.waitUntil(self.skipWaiting()));");
    g.line(0, "self.addEventListener(\"activate\", (event) => event.waitUntil(self.clients.claim()));");
    g.line(0, "self.addEventListener(\"fetch\", (event) => {");
    g.line(1, "event.respondWith(M.run(event.request, monitor));");
    g.line(0, "});");
    g.line(0, "");
    g.line(0, "async function monitor(io) {");
    g.line(1, "const base = M.env();");
    g.line(1, "let env = base;");
    for (pat, t) in program.prelude() {
        let line = format!("if (!M.match({}, {}, env)) throw io.block(\"prelude\");", g.pattern(pat), g.term(t));
        g.line(1, &line);
    }
    for branch in program.branches() {
        let Process::In(c, pat, body) = branch else { continue };
        let chan = g.channel(c)?;
        if chan != "serviceWorkerFetch" {
            return Err(EmitError::UnsupportedConstruct(format!("branch triggered by {chan}")));
        }
        let sels: Vec<String> =
            selectors(body).iter().map(|(p, t)| format!("[{}, () => {}]", g.pattern(p), g.term(t))).collect();
        g.line(1, "env = M.scope(base);");
        let guard = if sels.is_empty() {
            format!("if (M.match({}, io.fetched(), env)) {{", g.pattern(pat))
        } else {
            format!("if (M.match({}, io.fetched(), env) && M.anyPrefix([{}], env)) {{", g.pattern(pat), sels.join(", "))
        };
        g.line(1, &guard);
        g.process(body, 2)?;
        g.line(1, "}");
    }
    g.line(1, "return io.passThrough();");
    g.line(0, "}");
    Ok(g.out)
}

/// Page snippet that installs the worker.
pub fn emit_registration_snippet(cfg: &ProtocolConfig) -> String {
    let w = cfg.worker();
    format!(
        "<script>\nif (\"serviceWorker\" in navigator) {{\n  navigator.serviceWorker\n    .register({}, {{ scope: {} }})\n    .catch((err) => console.error(\"bulwark: worker registration failed\", err));\n}}\n</script>\n",
        js_str(&w.path),
        js_str(&w.scope)
    )
}

#[derive(Debug, thiserror::Error)]
pub enum SyntaxError {
    #[error("no JavaScript engine available for syntax checking")]
    Unavailable,
    #[error("{0}")]
    Invalid(String),
}

/// Syntax check with `node --check`.
pub fn check_syntax(source: &str) -> Result<(), SyntaxError> {
    let dir = std::env::temp_dir().join(format!("bulwark-check-{}-{}", std::process::id(), rand::random::<u64>()));
    std::fs::create_dir_all(&dir).map_err(|e| SyntaxError::Invalid(e.to_string()))?;
    let file = dir.join("worker.js");
    std::fs::write(&file, source).map_err(|e| SyntaxError::Invalid(e.to_string()))?;
    let r = run_node(&file);
    let _ = std::fs::remove_dir_all(&dir);
    r
}

fn run_node(file: &Path) -> Result<(), SyntaxError> {
    let out = Command::new("node").arg("--check").arg(file).output().map_err(|_| SyntaxError::Unavailable)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(SyntaxError::Invalid(String::from_utf8_lossy(&out.stderr).into_owned()))
    }
}

/// The script inside a registration snippet.
pub fn snippet_script(html: &str) -> &str {
    let start = html.find("<script>").map_or(0, |i| i + "<script>".len());
    let end = html.rfind("</script>").unwrap_or(html.len());
    &html[start..end]
}
