//! Flag / JSON-file configuration merging and unit parsing.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, DeserializeOwned, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// A length in metres; text input may carry a unit suffix (`m`, `mm`, `um`, `μm`, `nm`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Length(pub f64);

impl Length {
    pub fn metres(self) -> f64 {
        self.0
    }
}

/// Suffix and divisor to metres; dividing by an exact power of ten keeps
/// `300nm` equal to `3e-7`.
const UNITS: [(&str, f64); 6] = [
    ("nm", 1e9),
    ("um", 1e6),
    ("μm", 1e6),
    ("µm", 1e6),
    ("mm", 1e3),
    ("m", 1.0),
];

impl FromStr for Length {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (number, scale) = UNITS
            .iter()
            .find_map(|(suffix, scale)| t.strip_suffix(suffix).map(|n| (n.trim(), *scale)))
            .unwrap_or((t, 1.0));
        let v: f64 = number
            .parse()
            .map_err(|_| format!("`{s}` is not a length (examples: 300nm, 1.5um, 2e-6m, 2e-6)"))?;
        Ok(Length(v / scale))
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Length;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a length in metres or a string such as \"300nm\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Length, E> {
                Ok(Length(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Length, E> {
                Ok(Length(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Length, E> {
                Ok(Length(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Length, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Recursively drops `null` entries so unset flags never mask file values.
fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        other => other,
    }
}

fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Object(b)), Value::Object(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_error(e: serde_json::Error, origin: &str) -> CliError {
    CliError::config(origin, e.to_string())
}

/// Parameters from `file` (if any) with every flag given on the command line on top.
///
/// The file must be a JSON object using the same keys as the resolved config
/// echoed into the output header; unknown keys are rejected.
pub fn merge<P>(flags: &P, file: Option<&Path>) -> CliResult<P>
where
    P: Serialize + DeserializeOwned,
{
    let Some(path) = file else {
        let v = serde_json::to_value(flags).map_err(|e| parse_error(e, "flags"))?;
        return serde_json::from_value(strip_nulls(v)).map_err(|e| parse_error(e, "flags"));
    };
    let origin = format!("config file {}", path.display());
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let file_value: Value = serde_json::from_str(&text).map_err(|e| parse_error(e, &origin))?;
    let Value::Object(mut base) = strip_nulls(file_value) else {
        return Err(CliError::config(origin, "top level must be a JSON object"));
    };
    // rejects unknown keys and wrong types before anything is overlaid
    serde_json::from_value::<P>(Value::Object(base.clone())).map_err(|e| parse_error(e, &origin))?;
    let Value::Object(top) = strip_nulls(serde_json::to_value(flags).map_err(|e| parse_error(e, "flags"))?) else {
        return Err(CliError::Failed("flags did not serialise to an object".into()));
    };
    overlay(&mut base, top);
    serde_json::from_value(Value::Object(base)).map_err(|e| parse_error(e, &origin))
}

/// Fails with a message naming `field` unless `v` is finite.
pub fn finite(field: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(field, "must be finite"))
    }
}

pub fn at_least(field: &str, v: usize, min: usize) -> CliResult<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::config(field, format!("must be at least {min}, got {v}")))
    }
}
