use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::ser::Error as _;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// 17 significant digits; non-finite values as `inf`, `-inf`, `nan`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

/// A number that serializes with [`fmt_num`]; non-finite values become strings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            RawValue::from_string(fmt_num(self.0)).map_err(S::Error::custom)?.serialize(s)
        } else {
            s.serialize_str(&fmt_num(self.0))
        }
    }
}

pub fn pair(p: (f64, f64)) -> [Num; 2] {
    [Num(p.0), Num(p.1)]
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Diag {
    Num(Num),
    Count(usize),
    Flag(bool),
    Text(String),
    List(Vec<Num>),
}

impl From<f64> for Diag {
    fn from(v: f64) -> Self {
        Diag::Num(Num(v))
    }
}

impl From<usize> for Diag {
    fn from(v: usize) -> Self {
        Diag::Count(v)
    }
}

impl From<bool> for Diag {
    fn from(v: bool) -> Self {
        Diag::Flag(v)
    }
}

impl From<&str> for Diag {
    fn from(v: &str) -> Self {
        Diag::Text(v.into())
    }
}

impl From<Vec<f64>> for Diag {
    fn from(v: Vec<f64>) -> Self {
        Diag::List(v.into_iter().map(Num).collect())
    }
}

pub type Diagnostics = BTreeMap<&'static str, Diag>;

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub estimand: String,
    pub lower: Num,
    pub upper: Num,
    pub plug_in: Num,
    pub set_ci: [Num; 2],
    pub lb_ci: [Num; 2],
    pub ub_ci: [Num; 2],
    pub lb_one_sided: Num,
    pub ub_one_sided: Num,
    pub n_infinite_draws: usize,
    pub n_failed_draws: usize,
    pub diagnostics: Diagnostics,
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes a CSV whose cells are already formatted.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, P: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub threads: Option<usize>,
    pub paper_scale: bool,
    pub config: &'a P,
    pub outputs: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn json_numbers() {
        let v = serde_json::to_string(&[Num(1.5), Num(f64::NEG_INFINITY)]).unwrap();
        assert_eq!(v, r#"[1.5000000000000000e0,"-inf"]"#);
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&v).unwrap();
        assert_eq!(parsed[0].as_f64(), Some(1.5));
    }
}
