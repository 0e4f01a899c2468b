//! `key = value` experiment description.
//!
//! ```text
//! # M against α at fixed N
//! n = 50
//! alpha = 0.25, 0.5, 1, 2
//! x_max = 1
//! trials = 100
//! engines = bp, greedy
//! output_dir = out/alpha
//! ```
//!
//! List values are comma separated. `k` replaces `alpha` with explicit
//! constraint counts, which keeps `K` fixed while `N` varies.

use std::path::PathBuf;
use std::str::FromStr;

use crate::cavity::IterOpts;
use crate::error::{Error, Result};
use crate::instance::EnsembleParams;
use crate::mpgs::SolverKind;
use crate::oracle::DEFAULT_BUDGET;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Engine {
    Bp,
    Gamp,
    Greedy,
    Exact,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Bp => "bp",
            Engine::Gamp => "gamp",
            Engine::Greedy => "greedy",
            Engine::Exact => "exact",
        }
    }

    pub fn solver(self) -> Option<SolverKind> {
        match self {
            Engine::Bp => Some(SolverKind::Bp),
            Engine::Gamp => Some(SolverKind::Gamp),
            Engine::Greedy => Some(SolverKind::Greedy),
            Engine::Exact => None,
        }
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Engine::Exact),
            other => other.parse::<SolverKind>().map(|k| match k {
                SolverKind::Bp => Engine::Bp,
                SolverKind::Gamp => Engine::Gamp,
                SolverKind::Greedy => Engine::Greedy,
            }),
        }
    }
}

/// Constraint counts per cell: derived from `α` or given directly.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Alpha(Vec<f64>),
    Constraints(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_items: Vec<usize>,
    pub density: Density,
    pub x_max: Vec<u32>,
    pub n_trials: usize,
    pub engines: Vec<Engine>,
    pub seed_base: u64,
    pub output_dir: PathBuf,
    /// `w`, `σ²` and `C`; the remaining fields are overwritten per cell.
    pub ensemble: EnsembleParams,
    pub iter: IterOpts,
    pub warm_start: bool,
    /// No timestamp line and `NA` wall times, so reruns are byte-identical.
    pub deterministic: bool,
    pub theory: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_items: vec![50],
            density: Density::Alpha(vec![0.25, 0.5, 1.0, 1.5, 2.0]),
            x_max: vec![1],
            n_trials: 100,
            engines: vec![Engine::Bp, Engine::Greedy],
            seed_base: 0,
            output_dir: PathBuf::from("bench_out"),
            ensemble: EnsembleParams::default(),
            iter: IterOpts::default(),
            warm_start: true,
            deterministic: false,
            theory: true,
        }
    }
}

/// One `(N, K, x_max)` combination; `alpha` is `K/N` when `K` was given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub x_max: u32,
}

impl Cell {
    pub fn params(&self, base: &EnsembleParams, seed: u64) -> EnsembleParams {
        EnsembleParams {
            n_items: self.n,
            alpha: self.alpha,
            x_max: self.x_max,
            seed,
            ..*base
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|s| {
            s.trim().parse::<T>().map_err(|_| Error::Parse {
                line,
                msg: format!("`{}` is not a valid entry for `{key}`", s.trim()),
            })
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Parse {
            line,
            msg: format!("`{key}` needs at least one value"),
        });
    }
    Ok(items)
}

fn scalar<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::Parse {
        line,
        msg: format!("`{value}` is not a valid value for `{key}`"),
    })
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = BenchConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, found `{body}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "n" => cfg.n_items = list(key, value, line)?,
                "alpha" => cfg.density = Density::Alpha(list(key, value, line)?),
                "k" => cfg.density = Density::Constraints(list(key, value, line)?),
                "x_max" => cfg.x_max = list(key, value, line)?,
                "trials" => cfg.n_trials = scalar(key, value, line)?,
                "engines" => cfg.engines = list(key, value, line)?,
                "seed_base" => cfg.seed_base = scalar(key, value, line)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "w" => cfg.ensemble.mean_weight = scalar(key, value, line)?,
                "sigma2" => cfg.ensemble.weight_variance = scalar(key, value, line)?,
                "c" => cfg.ensemble.capacity_ratio = scalar(key, value, line)?,
                "tol" => cfg.iter.tol = scalar(key, value, line)?,
                "damping" => cfg.iter.damping = scalar(key, value, line)?,
                "max_sweeps" => cfg.iter.max_sweeps = scalar(key, value, line)?,
                "schedule" => cfg.iter.schedule = scalar(key, value, line)?,
                "warm_start" => cfg.warm_start = scalar(key, value, line)?,
                "deterministic" => cfg.deterministic = scalar(key, value, line)?,
                "theory" => cfg.theory = scalar(key, value, line)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n_items {
            for &x_max in &self.x_max {
                match &self.density {
                    Density::Alpha(alphas) => {
                        for &alpha in alphas {
                            let k = EnsembleParams {
                                n_items: n,
                                alpha,
                                ..self.ensemble
                            }
                            .n_constraints();
                            out.push(Cell { n, k, alpha, x_max });
                        }
                    }
                    Density::Constraints(ks) => {
                        for &k in ks {
                            out.push(Cell {
                                n,
                                k,
                                alpha: k as f64 / n as f64,
                                x_max,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.engines.is_empty() {
            return Err(Error::Config("no engines selected".into()));
        }
        self.iter.validate()?;
        for cell in self.cells() {
            cell.params(&self.ensemble, 0).validate()?;
            if self.engines.contains(&Engine::Exact) {
                let states = (cell.x_max as f64 + 1.0).powi(cell.n as i32);
                if states > DEFAULT_BUDGET {
                    return Err(Error::Config(format!(
                        "exact engine at N = {}, x_max = {} needs {states:.3e} states, over the budget of {DEFAULT_BUDGET:.0e}",
                        cell.n, cell.x_max
                    )));
                }
            }
        }
        Ok(())
    }
}
