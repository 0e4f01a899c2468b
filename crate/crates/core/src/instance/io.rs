//! Line-oriented text format:
//!
//! ```text
//! gmdkp 1
//! N K
//! v_1 … v_N
//! x_1^max … x_N^max
//! C_1 … C_K
//! w_11 … w_1N
//! …
//! w_K1 … w_KN
//! ```
//!
//! Lines starting with `#` and blank lines are skipped. Reals are written
//! with 17 significant digits so they round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::Instance;
use crate::error::{Error, Result};

const MAGIC: &str = "gmdkp";
const VERSION: u32 = 1;

fn push_reals(out: &mut String, values: &[f64]) {
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").unwrap();
    }
    out.push('\n');
}

pub fn save_instance(instance: &Instance) -> String {
    let n = instance.n_items();
    let k = instance.n_constraints();
    let mut out = String::with_capacity(24 * n * (k + 3));
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "{n} {k}").unwrap();
    push_reals(&mut out, instance.profits());
    let caps: Vec<String> = instance.max_counts().iter().map(u32::to_string).collect();
    out.push_str(&caps.join(" "));
    out.push('\n');
    push_reals(&mut out, instance.capacities());
    for mu in 0..k {
        push_reals(&mut out, instance.row(mu));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_content(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (idx, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok((idx + 1, t));
        }
        Err(Error::Parse {
            line: 0,
            msg: format!("unexpected end of input, expected {what}"),
        })
    }

    fn values<T: FromStr>(&mut self, what: &str, expected: usize) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let (line, text) = self.next_content(what)?;
        let vals = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<T>().map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad {what} value `{tok}`: {e}"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        if vals.len() != expected {
            return Err(Error::Parse {
                line,
                msg: format!("expected {expected} {what} values, found {}", vals.len()),
            });
        }
        Ok(vals)
    }
}

pub fn load_instance(text: &str) -> Result<Instance> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (line, header) = lines.next_content("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) || parts.next() != Some("1") || parts.next().is_some() {
        return Err(Error::Parse {
            line,
            msg: format!("expected header `{MAGIC} {VERSION}`, found `{header}`"),
        });
    }
    let dims: Vec<usize> = lines.values("dimension", 2)?;
    let (n, k) = (dims[0], dims[1]);
    if n == 0 || k == 0 {
        return Err(Error::Parse {
            line: line + 1,
            msg: format!("dimensions must be positive, found N={n} K={k}"),
        });
    }
    let profits = lines.values::<f64>("profit", n)?;
    let max_counts = lines.values::<u32>("max_count", n)?;
    let capacities = lines.values::<f64>("capacity", k)?;
    let mut weights = Vec::with_capacity(n * k);
    for _ in 0..k {
        weights.extend(lines.values::<f64>("weight", n)?);
    }
    if let Ok((line, extra)) = lines.next_content("") {
        return Err(Error::Parse {
            line,
            msg: format!("trailing content `{extra}` after {k} weight rows"),
        });
    }
    Instance::from_flat(profits, weights, capacities, max_counts)
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    load_instance(&std::fs::read_to_string(path)?)
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, save_instance(instance))?;
    Ok(())
}
