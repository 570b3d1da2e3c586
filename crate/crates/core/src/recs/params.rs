use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Clone, Debug, PartialEq)]
pub enum ParamKind {
    Int { min: i64 },
    Real { min: f64, min_exclusive: bool },
    Categorical(&'static [&'static str]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: ParamValue,
}

impl ParamSpec {
    pub fn int(name: &'static str, min: i64, default: i64) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Int { min },
            default: ParamValue::Int(default),
        }
    }

    pub fn real(name: &'static str, min: f64, min_exclusive: bool, default: f64) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Real { min, min_exclusive },
            default: ParamValue::Real(default),
        }
    }

    pub fn categorical(name: &'static str, choices: &'static [&'static str], default: &str) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Categorical(choices),
            default: ParamValue::Str(default.to_string()),
        }
    }

    /// Validates `v`, coercing integers to reals where a real is expected.
    pub fn check(&self, v: &ParamValue) -> Result<ParamValue> {
        match (&self.kind, v) {
            (ParamKind::Int { min }, ParamValue::Int(x)) => {
                if x < min {
                    return Err(Error::param(self.name, format!("must be >= {min}, got {x}")));
                }
                Ok(v.clone())
            }
            (ParamKind::Real { min, min_exclusive }, ParamValue::Int(_) | ParamValue::Real(_)) => {
                let x = match v {
                    ParamValue::Int(i) => *i as f64,
                    ParamValue::Real(r) => *r,
                    ParamValue::Str(_) => unreachable!(),
                };
                let bad = !x.is_finite() || if *min_exclusive { x <= *min } else { x < *min };
                if bad {
                    let op = if *min_exclusive { ">" } else { ">=" };
                    return Err(Error::param(self.name, format!("must be {op} {min}, got {x}")));
                }
                Ok(ParamValue::Real(x))
            }
            (ParamKind::Categorical(choices), ParamValue::Str(s)) => {
                if choices.contains(&s.as_str()) {
                    Ok(v.clone())
                } else {
                    Err(Error::param(
                        self.name,
                        format!("'{s}' not one of [{}]", choices.join(", ")),
                    ))
                }
            }
            (kind, _) => Err(Error::param(self.name, format!("expected {kind:?}, got {v:?}"))),
        }
    }
}

pub(crate) fn get_int(p: &Params, key: &str) -> Result<i64> {
    match p.get(key) {
        Some(ParamValue::Int(v)) => Ok(*v),
        other => Err(Error::param(key, format!("expected integer, got {other:?}"))),
    }
}

pub(crate) fn get_real(p: &Params, key: &str) -> Result<f64> {
    match p.get(key) {
        Some(ParamValue::Real(v)) => Ok(*v),
        Some(ParamValue::Int(v)) => Ok(*v as f64),
        other => Err(Error::param(key, format!("expected real, got {other:?}"))),
    }
}

pub(crate) fn get_str<'a>(p: &'a Params, key: &str) -> Result<&'a str> {
    match p.get(key) {
        Some(ParamValue::Str(v)) => Ok(v),
        other => Err(Error::param(key, format!("expected string, got {other:?}"))),
    }
}
