//! Parameter lists on the command line and in config files: a single value
//! `0.5`, a list `0.1,0.2,0.7` or an inclusive range `start:stop:step`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<f64>")]
pub struct NumList(pub Vec<f64>);

impl From<NumList> for Vec<f64> {
    fn from(v: NumList) -> Self {
        v.0
    }
}

impl fmt::Display for NumList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    let t = s.trim();
    match t {
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")),
    }
}

/// Inclusive `start:stop:step`, evaluated as `start + k·step` so that long
/// ranges do not accumulate rounding.
pub fn parse_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(format!("range {start}:{stop}:{step} needs finite ends and a positive step"));
    }
    if stop < start {
        return Err(format!("range {start}:{stop}:{step} is empty"));
    }
    let n = ((stop - start) / step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
    if n > 10_000_000 {
        return Err(format!("range {start}:{stop}:{step} has too many points"));
    }
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

impl FromStr for NumList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let pieces: Vec<&str> = part.split(':').collect();
            match pieces.as_slice() {
                [v] => out.push(parse_num(v)?),
                [a, b, c] => out.extend(parse_range(parse_num(a)?, parse_num(b)?, parse_num(c)?)?),
                _ => return Err(format!("expected a value or start:stop:step, got {part:?}")),
            }
        }
        if out.is_empty() {
            return Err("empty list".into());
        }
        Ok(NumList(out))
    }
}

impl<'de> Deserialize<'de> for NumList {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(f64),
            Many(Vec<f64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::One(v) => Ok(NumList(vec![v])),
            Raw::Many(v) if !v.is_empty() => Ok(NumList(v)),
            Raw::Many(_) => Err(serde::de::Error::custom("empty list")),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl NumList {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// The values as non-negative integers.
    pub fn as_counts(&self, name: &str) -> Result<Vec<usize>, String> {
        self.0
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                    Ok(v as usize)
                } else {
                    Err(format!("{name} must be a non-negative integer, got {v}"))
                }
            })
            .collect()
    }

    pub fn single(&self, name: &str) -> Result<f64, String> {
        match self.0.as_slice() {
            [v] => Ok(*v),
            _ => Err(format!("{name} takes a single value here, got {} values", self.0.len())),
        }
    }
}
