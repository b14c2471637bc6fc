//! Event traces and correspondence checking.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ast::{EventAtom, Query, Term};
use crate::pretty;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub event: String,
    pub args: Vec<String>,
    /// Nanoseconds since the trace was created.
    pub at: u64,
    pub session: String,
}

impl TraceEntry {
    pub fn new(event: &str, args: Vec<String>, session: &str) -> TraceEntry {
        TraceEntry { event: event.to_string(), args, at: 0, session: session.to_string() }
    }
}

/// Append-only, totally ordered event log.
#[derive(Debug)]
pub struct EventTrace {
    start: Instant,
    entries: Mutex<Vec<TraceEntry>>,
}

impl Default for EventTrace {
    fn default() -> Self {
        EventTrace { start: Instant::now(), entries: Mutex::new(Vec::new()) }
    }
}

impl EventTrace {
    pub fn append(&self, event: &str, args: Vec<String>, session: &str) {
        let mut entries = self.entries.lock().expect("trace lock");
        let at = (self.start.elapsed().as_nanos() as u64).max(entries.last().map_or(0, |e| e.at + 1));
        entries.push(TraceEntry { event: event.to_string(), args, at, session: session.to_string() });
    }

    pub fn snapshot(&self) -> Vec<TraceEntry> {
        self.entries.lock().expect("trace lock").clone()
    }

    pub fn export(&self) -> String {
        export(&self.snapshot())
    }
}

/// One record per line: `event TAB session TAB comma-joined args`.
pub fn export(entries: &[TraceEntry]) -> String {
    entries.iter().map(|e| format!("{}\t{}\t{}\n", e.event, e.session, e.args.join(","))).collect()
}

pub fn import(text: &str) -> Vec<TraceEntry> {
    text.lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            let mut cols = l.splitn(3, '\t');
            let event = cols.next().unwrap_or_default().to_string();
            let session = cols.next().unwrap_or_default().to_string();
            let args = match cols.next() {
                Some("") | None => Vec::new(),
                Some(a) => a.split(',').map(str::to_string).collect(),
            };
            TraceEntry { event, args, at: i as u64, session }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    /// Trace positions matched by the premise and the resulting assignment.
    Violated {
        entries: Vec<usize>,
        assignment: BTreeMap<String, String>,
    },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

type Subst = BTreeMap<String, String>;

fn unify(atom: &EventAtom, e: &TraceEntry, s: &Subst) -> Option<Subst> {
    if atom.name != e.event || atom.args.len() != e.args.len() {
        return None;
    }
    let mut s = s.clone();
    for (t, a) in atom.args.iter().zip(&e.args) {
        match t {
            Term::Var(x) => match s.get(x) {
                Some(v) if v != a => return None,
                Some(_) => {}
                None => {
                    s.insert(x.clone(), a.clone());
                }
            },
            other => {
                if pretty::term(other) != *a {
                    return None;
                }
            }
        }
    }
    Some(s)
}

/// Checks a non-injective correspondence: every joint match of the premise
/// must be preceded by a matching conclusion event. The conclusion has to
/// occur before the last premise event of the match.
pub fn check_correspondence(trace: &[TraceEntry], q: &Query) -> Verdict {
    let Query::Correspondence { premise, conclusion } = q else {
        return Verdict::Holds;
    };
    let mut chosen = Vec::new();
    match search(trace, premise, conclusion, &Subst::new(), &mut chosen) {
        Some((entries, assignment)) => Verdict::Violated { entries, assignment },
        None => Verdict::Holds,
    }
}

fn search(
    trace: &[TraceEntry],
    premise: &[EventAtom],
    conclusion: &EventAtom,
    s: &Subst,
    chosen: &mut Vec<usize>,
) -> Option<(Vec<usize>, Subst)> {
    let Some((atom, rest)) = premise.split_first() else {
        let last = chosen.iter().copied().max().unwrap_or(trace.len());
        let justified = trace[..last].iter().any(|e| unify(conclusion, e, s).is_some());
        return (!justified).then(|| (chosen.clone(), s.clone()));
    };
    for (i, e) in trace.iter().enumerate() {
        if let Some(s2) = unify(atom, e, s) {
            chosen.push(i);
            let found = search(trace, rest, conclusion, &s2, chosen);
            chosen.pop();
            if found.is_some() {
                return found;
            }
        }
    }
    None
}
