//! Synthesis of runtime security monitors for multi-party web protocols.
//!
//! Participant processes written in an applied-pi dialect are turned into
//! reverse-proxy or service-worker monitors, which can then be executed
//! against a simulated OAuth / PayPal testbed.

pub mod alpha;
pub mod ast;
pub mod deploy;
pub mod interp;
pub mod parser;
pub mod pretty;
pub mod runtime;
pub mod swgen;
pub mod testbed;
pub mod transform;

pub use alpha::alpha_equiv;
pub use ast::{free_names, EventAtom, Participant, Pattern, Process, Query, SystemSpec, Term};
pub use parser::{parse_process, parse_query, parse_spec, parse_spec_extending, ParseError, SpecError};
pub use pretty::pretty_print;
