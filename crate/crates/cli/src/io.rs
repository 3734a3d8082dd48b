use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Bad flags, unreadable inputs or unwritable outputs: the caller's fault, exit 2.
#[derive(Debug)]
pub struct ArgumentError(pub String);

/// Input that is not JSON or does not have the expected shape: exit 3.
#[derive(Debug)]
pub struct SchemaError(pub String);

macro_rules! message_error {
    ($t:ty) => {
        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.0)
            }
        }
        impl std::error::Error for $t {}
    };
}
message_error!(ArgumentError);
message_error!(SchemaError);

pub fn arg_error(msg: impl Into<String>) -> anyhow::Error {
    ArgumentError(msg.into()).into()
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| arg_error(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| SchemaError(format!("{} is not valid JSON: {e}", path.display())).into())
}

pub fn from_value<T: DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| SchemaError(format!("{what}: {e}")).into())
}

/// Comma-separated list of finite numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

/// Points of a `start:stop:step` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct Counts(pub Vec<usize>);

pub fn parse_list(s: &str) -> std::result::Result<List, String> {
    numbers(s).map(List)
}

pub fn parse_counts(s: &str) -> std::result::Result<Counts, String> {
    s.split(',').map(|t| t.trim().parse().map_err(|_| format!("`{t}` is not a count"))).collect::<std::result::Result<_, _>>().map(Counts)
}

pub fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    grid(s).map(Grid)
}

fn numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let v: f64 = t.trim().parse().map_err(|_| format!("`{t}` is not a number"))?;
            if v.is_finite() { Ok(v) } else { Err(format!("`{t}` is not finite")) }
        })
        .collect()
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
fn grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts = numbers(&s.replace(':', ","))?;
    let [start, stop, step] = parts[..] else {
        return Err(format!("grid `{s}` must be start:stop:step"));
    };
    if !(step > 0.0) || stop < start {
        return Err(format!("grid `{s}` needs step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(format!("grid `{s}` has {count} points"));
    }
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Twelve significant digits, plain notation where that stays readable.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..12).contains(&mag) {
        format!("{:.*}", (11 - mag) as usize, x)
    } else {
        format!("{x:.11e}")
    }
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        Self { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Writes the finished artifact in one go, to the file or to stdout.
pub fn emit(output: Option<&PathBuf>, content: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, content).map_err(|e| arg_error(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes()).context("writing to stdout")?;
            out.flush().context("writing to stdout")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_num(0.379885493041722), "0.379885493042");
        assert_eq!(fmt_num(12.5), "12.5000000000");
        assert_eq!(fmt_num(1.0), "1.00000000000");
        assert_eq!(fmt_num(-2.5e-7), "-2.50000000000e-7");
        assert_eq!(fmt_num(0.0), "0");
    }

    #[test]
    fn grid_includes_stop() {
        let g = parse_grid("0:1:0.1").unwrap().0;
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1.0).abs() < 1e-12);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("1, 2.5").unwrap().0, vec![1.0, 2.5]);
        assert!(parse_list("1,x").is_err());
        assert!(parse_list("inf").is_err());
    }
}
