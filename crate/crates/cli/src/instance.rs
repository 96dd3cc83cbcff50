//! Instance files: a prime, a cover degree and a labelled point set.

use clusterpush::clusters::{Pairing, PointSet};
use clusterpush::projline::ProjPoint;
use clusterpush::valuation::{format_rational, is_prime, parse_rational, ExactQ, ValQ};
use serde_json::{json, Map, Value};

/// Problems with an instance file, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for FieldError {}

fn bad(field: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub prime_ell: u64,
    pub p: u64,
    pub vp: Option<ValQ>,
    /// `(label, value)` with values in canonical form, `"inf"` for infinity.
    pub points: Vec<(String, String)>,
    pub pairing: Option<Vec<(String, String)>>,
    pub optimal: bool,
    pub precision: Option<u32>,
    pub max_words: usize,
}

pub const DEFAULT_MAX_WORDS: usize = 16;

fn get_u64(o: &Map<String, Value>, key: &str) -> Result<Option<u64>, FieldError> {
    match o.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_u64().map(Some).ok_or_else(|| bad(key, "expected a non-negative integer")),
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) if n.is_i64() => Some(n.to_string()),
        _ => None,
    }
}

impl Instance {
    pub fn parse(text: &str) -> Result<Instance, FieldError> {
        let v: Value = serde_json::from_str(text).map_err(|e| bad("<document>", e.to_string()))?;
        Instance::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Instance, FieldError> {
        let o = v.as_object().ok_or_else(|| bad("<document>", "expected a JSON object"))?;
        let prime_ell = get_u64(o, "prime_ell")?.ok_or_else(|| bad("prime_ell", "missing"))?;
        if !is_prime(prime_ell) {
            return Err(bad("prime_ell", format!("{prime_ell} is not a prime")));
        }
        let p = get_u64(o, "p")?.ok_or_else(|| bad("p", "missing"))?;
        if !is_prime(p) {
            return Err(bad("p", format!("{p} is not a prime")));
        }
        let vp = match o.get("vp") {
            None | Some(Value::Null) => None,
            Some(x) => {
                let t = scalar_text(x).ok_or_else(|| bad("vp", "expected a rational number"))?;
                let q: ValQ = t.parse().map_err(|_| bad("vp", format!("cannot parse {t:?}")))?;
                if q.is_inf() || q < ValQ::ZERO {
                    return Err(bad("vp", "must be finite and non-negative"));
                }
                Some(q)
            }
        };
        let arr = o
            .get("points")
            .ok_or_else(|| bad("points", "missing"))?
            .as_array()
            .ok_or_else(|| bad("points", "expected an array"))?;
        let mut points = Vec::new();
        for (k, e) in arr.iter().enumerate() {
            let field = |f: &str| format!("points[{k}].{f}");
            let label = e
                .get("label")
                .and_then(Value::as_str)
                .ok_or_else(|| bad(field("label"), "expected a string"))?
                .to_string();
            let raw = e.get("value").and_then(scalar_text).ok_or_else(|| bad(field("value"), "expected a string"))?;
            let value = if raw == "inf" {
                raw
            } else {
                let q = parse_rational(&raw).map_err(|_| bad(field("value"), format!("cannot parse {raw:?}")))?;
                format_rational(&q)
            };
            if points.iter().any(|(l, _): &(String, String)| *l == label) {
                return Err(bad(field("label"), format!("duplicate label {label:?}")));
            }
            points.push((label, value));
        }
        let pairing = match o.get("pairing") {
            None | Some(Value::Null) => None,
            Some(x) => {
                let arr = x.as_array().ok_or_else(|| bad("pairing", "expected an array of label pairs"))?;
                let mut out = Vec::new();
                for (k, e) in arr.iter().enumerate() {
                    let pair = e
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .and_then(|a| Some((a[0].as_str()?.to_string(), a[1].as_str()?.to_string())))
                        .ok_or_else(|| bad(format!("pairing[{k}]"), "expected two labels"))?;
                    out.push(pair);
                }
                Some(out)
            }
        };
        let optimal = match o.get("optimal") {
            None | Some(Value::Null) => false,
            Some(x) => x.as_bool().ok_or_else(|| bad("optimal", "expected a boolean"))?,
        };
        let precision = get_u64(o, "precision")?
            .map(|n| u32::try_from(n).ok().filter(|&n| n > 0).ok_or_else(|| bad("precision", "out of range")))
            .transpose()?;
        let max_words = get_u64(o, "max_words")?.map_or(DEFAULT_MAX_WORDS, |n| n as usize);
        let inst = Instance { prime_ell, p, vp, points, pairing, optimal, precision, max_words };
        inst.point_set()?;
        if inst.pairing.is_some() {
            inst.explicit_pairing()?;
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> Value {
        let mut o = Map::new();
        o.insert("prime_ell".into(), json!(self.prime_ell));
        o.insert("p".into(), json!(self.p));
        if let Some(vp) = self.vp {
            o.insert("vp".into(), json!(vp.to_string()));
        }
        let pts: Vec<Value> = self.points.iter().map(|(l, v)| json!({"label": l, "value": v})).collect();
        o.insert("points".into(), Value::Array(pts));
        if let Some(pr) = &self.pairing {
            o.insert("pairing".into(), json!(pr.iter().map(|(a, b)| [a, b]).collect::<Vec<_>>()));
        }
        o.insert("optimal".into(), json!(self.optimal));
        if let Some(n) = self.precision {
            o.insert("precision".into(), json!(n));
        }
        o.insert("max_words".into(), json!(self.max_words));
        Value::Object(o)
    }

    pub fn labels(&self) -> Vec<String> {
        self.points.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn point_set(&self) -> Result<PointSet<ExactQ>, FieldError> {
        let mut pts = Vec::new();
        for (l, v) in &self.points {
            pts.push(if v == "inf" {
                ProjPoint::Infinity
            } else {
                let x = ExactQ::parse(v, self.prime_ell).map_err(|e| bad("points", format!("{l}: {e}")))?;
                ProjPoint::Finite(x)
            });
        }
        PointSet::new(pts, self.labels()).map_err(|e| bad("points", e.to_string()))
    }

    pub fn explicit_pairing(&self) -> Result<Option<Pairing>, FieldError> {
        match &self.pairing {
            None => Ok(None),
            Some(pr) => Pairing::from_labels(pr, &self.labels()).map(Some).map_err(|e| bad("pairing", e.to_string())),
        }
    }

    /// `v(p)` as given, else 1 when `p` is the residue characteristic and 0
    /// otherwise.
    pub fn vp(&self) -> ValQ {
        self.vp.unwrap_or_else(|| self.natural_vp())
    }

    pub fn natural_vp(&self) -> ValQ {
        ValQ::int(i64::from(self.p == self.prime_ell))
    }
}
