//! Evaluation of terms and matching of patterns over runtime values.

use std::collections::BTreeMap;

use super::codec::{self, CodecError};
use super::config::{Carrier, ProtocolConfig};
use super::value::{UrlValue, Value};
use crate::ast::{Ident, Pattern, Term};

pub type Env = BTreeMap<Ident, Value>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no value for `{0}`")]
    Unbound(String),
    #[error("constructor `{0}` has no runtime meaning")]
    Opaque(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

pub fn eval(t: &Term, env: &Env, cfg: &ProtocolConfig) -> Result<Value, EvalError> {
    match t {
        Term::Var(x) | Term::Name(x) | Term::Const(x) => match env.get(x) {
            Some(v) => Ok(v.clone()),
            None => cfg.symbol(x).map(Value::str).ok_or_else(|| EvalError::Unbound(x.clone())),
        },
        Term::Tuple(ts) => Ok(Value::Tuple(ts.iter().map(|t| eval(t, env, cfg)).collect::<Result<_, _>>()?)),
        Term::Ctor(f, args) => {
            let vs: Vec<Value> = args.iter().map(|t| eval(t, env, cfg)).collect::<Result<_, _>>()?;
            apply(f, vs, cfg)
        }
    }
}

/// Applies constructor `f` to already evaluated arguments.
pub fn apply(f: &str, vs: Vec<Value>, cfg: &ProtocolConfig) -> Result<Value, EvalError> {
    match (f, vs.as_slice()) {
        ("uri", [s, h, p, q]) => Ok(Value::Url(UrlValue {
            scheme: s.to_string(),
            host: h.to_string(),
            path: p.to_string(),
            query: match q {
                Value::Fields(_, fs) => fs.clone(),
                Value::Str(s) if s.is_empty() => Vec::new(),
                other => return Err(CodecError::Malformed(format!("`{other}` is not a query")).into()),
            },
            bare: false,
        })),
        ("getCookie", [Value::Headers(h)]) => Ok(Value::str(h.cookie(&cfg.session_cookie).unwrap_or_default())),
        ("getCookie", [Value::Ctor(g, parts)]) if g == "headers" && parts.len() == 3 => Ok(parts[1].clone()),
        _ => {
            if let Some(c) = cfg.codec(f) {
                return Ok(codec::encode(c, &vs)?);
            }
            if vs.is_empty() {
                if let Some(s) = cfg.symbol(f) {
                    return Ok(Value::str(s));
                }
            }
            if BUILTIN.contains(&f) || vs.is_empty() {
                return Ok(Value::Ctor(f.to_string(), vs));
            }
            Err(EvalError::Opaque(f.to_string()))
        }
    }
}

/// Constructors with a fixed meaning in the HTTP model.
pub const BUILTIN: &[&str] =
    &["uri", "headers", "getCookie", "httpGet", "httpPost", "httpOk", "httpRedirect", "httpStatus"];

/// Matches `v` against `p`, extending `env`. `Ok(false)` is an ordinary
/// mismatch; errors are malformed carriers.
pub fn matches(p: &Pattern, v: &Value, env: &mut Env, cfg: &ProtocolConfig) -> Result<bool, EvalError> {
    match p {
        Pattern::Bind(x, _) => {
            env.insert(x.clone(), v.clone());
            Ok(true)
        }
        Pattern::Eq(t) => Ok(eval(t, env, cfg)?.same(v)),
        Pattern::Tuple(ps) => match v {
            Value::Tuple(vs) if vs.len() == ps.len() => all(ps, vs, env, cfg),
            _ => Ok(false),
        },
        Pattern::Ctor(f, ps) => {
            if let Value::Ctor(g, vs) = v {
                if g == f {
                    return if vs.len() == ps.len() { all(ps, vs, env, cfg) } else { Ok(false) };
                }
            }
            match (f.as_str(), v) {
                ("uri", Value::Url(u)) if ps.len() == 4 => {
                    let parts = [
                        Value::str(&u.scheme),
                        Value::str(&u.host),
                        Value::str(&u.path),
                        Value::Fields(Carrier::QueryString, u.query.clone()),
                    ];
                    return all(ps, &parts, env, cfg);
                }
                ("headers", Value::Headers(h)) if ps.len() == 3 => {
                    let referer = match h.header("referer").map(UrlValue::parse) {
                        Some(Ok(u)) => Value::Url(u),
                        _ => Value::str(cfg.symbol("noneUri").unwrap_or_default()),
                    };
                    let ajax = if h.header("x-requested-with").is_some() { "ajax" } else { "notajax" };
                    let parts = [
                        referer,
                        Value::str(h.cookie(&cfg.session_cookie).unwrap_or_default()),
                        apply(ajax, Vec::new(), cfg)?,
                    ];
                    return all(ps, &parts, env, cfg);
                }
                _ => {}
            }
            if let Some(c) = cfg.codec(f) {
                return match codec::decode(c, v) {
                    Ok(vs) => all(ps, &vs, env, cfg),
                    Err(CodecError::Mismatch(_)) => Ok(false),
                    Err(e) => Err(e.into()),
                };
            }
            if ps.is_empty() {
                return Ok(apply(f, Vec::new(), cfg)?.same(v));
            }
            Ok(false)
        }
    }
}

fn all(ps: &[Pattern], vs: &[Value], env: &mut Env, cfg: &ProtocolConfig) -> Result<bool, EvalError> {
    for (p, v) in ps.iter().zip(vs) {
        if !matches(p, v, env, cfg)? {
            return Ok(false);
        }
    }
    Ok(true)
}
