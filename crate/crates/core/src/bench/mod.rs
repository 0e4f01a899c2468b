//! Ensemble experiments: many random instances per cell, one CSV row per
//! engine run, per-cell means with standard errors, the replica prediction
//! for comparison and log-log timing fits.
//!
//! Every `(cell, trial)` draws its instance from [`cell_seed`], so a single
//! cell can be rerun in isolation. Trials run on a rayon pool whose size is
//! capped by `GMDKP_THREADS`; rows are sorted afterwards, which makes the
//! output independent of scheduling.

mod config;
pub mod plot;

pub use config::{BenchConfig, Cell, Density, Engine};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::cavity::{bp_run, gamp_run, EngineKind, IterOpts};
use crate::error::{Error, Result};
use crate::instance::{generate_instance, EnsembleParams, Instance};
use crate::mpgs;
use crate::oracle::exact_optimum;
use crate::replica::find_m_opt;
use plot::{Chart, Series};

pub const THREADS_ENV: &str = "GMDKP_THREADS";

pub const RECORD_HEADER: &str =
    "n,k,alpha,x_max,engine,trial,seed,profit,scaled_m,sweeps_total,wall_time_ms,feasible,error";

pub const SUMMARY_HEADER: &str = "n,k,alpha,x_max,engine,trials,failures,profit_mean,profit_stderr,scaled_m_mean,scaled_m_stderr,sweeps_mean,wall_time_ms_mean";

/// 64-bit FNV-1a over the little-endian bytes of
/// `(seed_base, N, K, x_max, trial)`, each widened to `u64`.
pub fn cell_seed(seed_base: u64, n: usize, k: usize, x_max: u32, trial: usize) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    [seed_base, n as u64, k as u64, x_max as u64, trial as u64]
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub x_max: u32,
    pub engine: Engine,
    pub trial: usize,
    pub seed: u64,
    pub profit: Option<f64>,
    pub scaled_m: Option<f64>,
    pub sweeps_total: usize,
    /// `None` in deterministic mode.
    pub wall_time_ms: Option<f64>,
    pub feasible: bool,
    pub error: Option<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.k,
            self.alpha,
            self.x_max,
            self.engine.name(),
            self.trial,
            self.seed,
            opt(self.profit),
            opt(self.scaled_m),
            self.sweeps_total,
            opt(self.wall_time_ms),
            self.feasible,
            self.error.as_deref().map(quote).unwrap_or_default()
        )
    }

    fn sort_key(&self) -> (usize, usize, u64, u32, Engine, usize) {
        (
            self.n,
            self.k,
            self.alpha.to_bits(),
            self.x_max,
            self.engine,
            self.trial,
        )
    }
}

fn solve_one(engine: Engine, inst: &Instance, cfg: &BenchConfig) -> Result<(f64, usize, bool)> {
    match engine.solver() {
        Some(kind) => {
            let t = mpgs::solve(inst, kind, &cfg.iter, cfg.warm_start)?;
            Ok((
                t.final_evaluation.profit,
                t.total_sweeps(),
                t.final_evaluation.feasible,
            ))
        }
        None => {
            let r = exact_optimum(inst)?;
            Ok((r.best_profit, 0, true))
        }
    }
}

/// All engines on the instance of one `(cell, trial)`.
pub fn run_trial(cfg: &BenchConfig, cell: &Cell, trial: usize) -> Vec<BenchRecord> {
    let seed = cell_seed(cfg.seed_base, cell.n, cell.k, cell.x_max, trial);
    let params = cell.params(&cfg.ensemble, seed);
    let base = BenchRecord {
        n: cell.n,
        k: cell.k,
        alpha: cell.alpha,
        x_max: cell.x_max,
        engine: Engine::Bp,
        trial,
        seed,
        profit: None,
        scaled_m: None,
        sweeps_total: 0,
        wall_time_ms: None,
        feasible: false,
        error: None,
    };
    let inst = match generate_instance(&params) {
        Ok(i) => i,
        Err(e) => {
            return cfg
                .engines
                .iter()
                .map(|&engine| BenchRecord {
                    engine,
                    error: Some(e.to_string()),
                    ..base.clone()
                })
                .collect()
        }
    };
    cfg.engines
        .iter()
        .map(|&engine| {
            let start = Instant::now();
            let outcome = solve_one(engine, &inst, cfg);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let wall_time_ms = (!cfg.deterministic).then_some(ms);
            match outcome {
                Ok((profit, sweeps_total, feasible)) => BenchRecord {
                    engine,
                    profit: Some(profit),
                    scaled_m: Some(params.scaled_m(profit, cell.n)),
                    sweeps_total,
                    wall_time_ms,
                    feasible,
                    ..base.clone()
                },
                Err(e) => BenchRecord {
                    engine,
                    wall_time_ms,
                    error: Some(e.to_string()),
                    ..base.clone()
                },
            }
        })
        .collect()
}

/// Worker count from `GMDKP_THREADS`, or rayon's default when unset.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(0)
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Every trial of every cell, sorted by cell identifiers.
pub fn run_records(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let jobs: Vec<(Cell, usize)> = cfg
        .cells()
        .into_iter()
        .flat_map(|c| (0..cfg.n_trials).map(move |t| (c, t)))
        .collect();
    let mut records: Vec<BenchRecord> = pool()?.install(|| {
        jobs.par_iter()
            .flat_map_iter(|(c, t)| run_trial(cfg, c, *t))
            .collect()
    });
    records.sort_by_key(BenchRecord::sort_key);
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation over `√n`; `None` below two samples.
    pub stderr: Option<f64>,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = (xs.len() > 1).then(|| {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        });
        Some(Stat { mean, stderr })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub engine: Engine,
    pub trials: usize,
    pub failures: usize,
    pub profit: Option<Stat>,
    pub scaled_m: Option<Stat>,
    pub sweeps_mean: Option<f64>,
    pub wall_time_ms_mean: Option<f64>,
}

impl CellSummary {
    pub fn csv_row(&self) -> String {
        let c = &self.cell;
        let mean = |s: Option<Stat>| opt(s.map(|s| s.mean));
        let se = |s: Option<Stat>| opt(s.and_then(|s| s.stderr));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.n,
            c.k,
            c.alpha,
            c.x_max,
            self.engine.name(),
            self.trials,
            self.failures,
            mean(self.profit),
            se(self.profit),
            mean(self.scaled_m),
            se(self.scaled_m),
            opt(self.sweeps_mean),
            opt(self.wall_time_ms_mean)
        )
    }
}

/// Groups sorted records by cell and engine. Failed rows count as failures
/// and are left out of every mean.
pub fn summarize(records: &[BenchRecord]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(usize, usize, u64, u32, Engine), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.n, r.k, r.alpha.to_bits(), r.x_max, r.engine))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rows| {
            let ok: Vec<&&BenchRecord> = rows.iter().filter(|r| r.error.is_none()).collect();
            let collect = |f: &dyn Fn(&BenchRecord) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|r| f(r)).collect()
            };
            let profits = collect(&|r| r.profit);
            let ms = collect(&|r| r.scaled_m);
            let sweeps = collect(&|r| Some(r.sweeps_total as f64));
            let times = collect(&|r| r.wall_time_ms);
            let r0 = rows[0];
            CellSummary {
                cell: Cell {
                    n: r0.n,
                    k: r0.k,
                    alpha: r0.alpha,
                    x_max: r0.x_max,
                },
                engine: r0.engine,
                trials: rows.len(),
                failures: rows.len() - ok.len(),
                profit: Stat::of(&profits),
                scaled_m: Stat::of(&ms),
                sweeps_mean: Stat::of(&sweeps).map(|s| s.mean),
                wall_time_ms_mean: Stat::of(&times).map(|s| s.mean),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub alpha: f64,
    pub x_max: u32,
    pub m_opt: std::result::Result<f64, String>,
}

/// `M_opt` for every distinct `(α, x_max)` among the cells.
pub fn theory_rows(cfg: &BenchConfig) -> Result<Vec<TheoryRow>> {
    let mut keys: Vec<(u64, u32)> = cfg
        .cells()
        .iter()
        .map(|c| (c.alpha.to_bits(), c.x_max))
        .collect();
    keys.sort_by(|a, b| {
        f64::from_bits(a.0)
            .total_cmp(&f64::from_bits(b.0))
            .then(a.1.cmp(&b.1))
    });
    keys.dedup();
    let rows = pool()?.install(|| {
        keys.par_iter()
            .map(|&(bits, x_max)| {
                let alpha = f64::from_bits(bits);
                let params = EnsembleParams {
                    x_max,
                    ..cfg.ensemble
                };
                TheoryRow {
                    alpha,
                    x_max,
                    m_opt: find_m_opt(alpha, &params)
                        .map(|r| r.m_opt)
                        .map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`; needs two distinct positive `x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (logs.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

/// Cells that share everything except `N`: same `x_max`, and the same `α`
/// or `K` depending on how the config fixed the density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fixed {
    Alpha(u64),
    K(usize),
}

impl Fixed {
    fn of(cfg: &BenchConfig, c: &Cell) -> Self {
        match cfg.density {
            Density::Alpha(_) => Fixed::Alpha(c.alpha.to_bits()),
            Density::Constraints(_) => Fixed::K(c.k),
        }
    }

    fn tag(self) -> String {
        match self {
            Fixed::Alpha(bits) => format!("alpha{}", f64::from_bits(bits)),
            Fixed::K(k) => format!("k{k}"),
        }
    }

    fn describe(self) -> String {
        match self {
            Fixed::Alpha(bits) => format!("α = {}", f64::from_bits(bits)),
            Fixed::K(k) => format!("K = {k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slope {
    pub engine: Engine,
    pub x_max: u32,
    pub fixed: Fixed,
    pub exponent: f64,
    pub points: Vec<(f64, f64)>,
}

/// Exponent of mean wall time against `N` for every series with two or more
/// sizes. Empty in deterministic mode.
pub fn timing_slopes(cfg: &BenchConfig, summary: &[CellSummary]) -> Vec<Slope> {
    let mut series: BTreeMap<(Engine, u32, Fixed), Vec<(f64, f64)>> = BTreeMap::new();
    for s in summary {
        if let Some(t) = s.wall_time_ms_mean {
            series
                .entry((s.engine, s.cell.x_max, Fixed::of(cfg, &s.cell)))
                .or_default()
                .push((s.cell.n as f64, t));
        }
    }
    series
        .into_iter()
        .filter_map(|((engine, x_max, fixed), points)| {
            loglog_slope(&points).map(|exponent| Slope {
                engine,
                x_max,
                fixed,
                exponent,
                points,
            })
        })
        .collect()
}

/// Milliseconds per sweep of a bare engine run of exactly `sweeps` sweeps
/// from the uniform start.
pub fn sweep_time_ms(engine: EngineKind, instance: &Instance, sweeps: usize) -> Result<f64> {
    let opts = IterOpts {
        max_sweeps: sweeps,
        tol: f64::MIN_POSITIVE,
        ..IterOpts::default()
    };
    let start = Instant::now();
    let done = match engine {
        EngineKind::Bp => bp_run(instance, &opts, None)?.2.sweeps,
        EngineKind::Gamp => gamp_run(instance, &opts, None)?.2.sweeps,
    };
    Ok(start.elapsed().as_secs_f64() * 1e3 / done.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub summary: Vec<CellSummary>,
    pub theory: Vec<TheoryRow>,
    pub slopes: Vec<Slope>,
    pub files: Vec<PathBuf>,
}

fn csv(cfg: &BenchConfig, header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::new();
    if !cfg.deterministic {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(out, "# generated at unix time {secs}");
    }
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn write(dir: &Path, name: &str, body: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    files.push(path);
    Ok(())
}

fn theory_lookup(theory: &[TheoryRow], alpha: f64, x_max: u32) -> Option<f64> {
    theory
        .iter()
        .find(|t| t.alpha.to_bits() == alpha.to_bits() && t.x_max == x_max)
        .and_then(|t| t.m_opt.as_ref().ok().copied())
}

fn plots(cfg: &BenchConfig, report: &BenchReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let summary = &report.summary;
    let engines: Vec<Engine> = {
        let mut e = cfg.engines.clone();
        e.sort();
        e.dedup();
        e
    };
    let m_series = |cells: &[&CellSummary], x: &dyn Fn(&Cell) -> f64| -> Vec<Series> {
        engines
            .iter()
            .map(|&engine| {
                let mut pts: Vec<(f64, f64, f64)> = cells
                    .iter()
                    .filter(|s| s.engine == engine)
                    .filter_map(|s| {
                        s.scaled_m
                            .map(|m| (x(&s.cell), m.mean, m.stderr.unwrap_or(0.0)))
                    })
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series::new(engine.name(), pts)
            })
            .collect()
    };

    // M against α at fixed N and x_max
    let mut by_n: BTreeMap<(usize, u32), Vec<&CellSummary>> = BTreeMap::new();
    for s in summary {
        by_n.entry((s.cell.n, s.cell.x_max)).or_default().push(s);
    }
    for ((n, x_max), cells) in &by_n {
        let mut alphas: Vec<f64> = cells.iter().map(|s| s.cell.alpha).collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        if alphas.len() < 2 {
            continue;
        }
        let mut series = m_series(cells, &|c| c.alpha);
        if cfg.theory {
            let line: Vec<(f64, f64)> = alphas
                .iter()
                .filter_map(|&a| theory_lookup(&report.theory, a, *x_max).map(|m| (a, m)))
                .collect();
            series.push(Series::line("replica M_opt", line));
        }
        let chart = Chart {
            title: format!("scaled profit M, N = {n}, x_max = {x_max}"),
            x_label: "α = K/N".into(),
            y_label: "M".into(),
            series,
            ..Default::default()
        };
        out.push((format!("m_vs_alpha_n{n}_xmax{x_max}.svg"), chart.to_svg()));
    }

    // M and time against N at fixed density
    let mut by_fixed: BTreeMap<(u32, Fixed), Vec<&CellSummary>> = BTreeMap::new();
    for s in summary {
        by_fixed
            .entry((s.cell.x_max, Fixed::of(cfg, &s.cell)))
            .or_default()
            .push(s);
    }
    for ((x_max, fixed), cells) in &by_fixed {
        let mut sizes: Vec<&Cell> = cells.iter().map(|s| &s.cell).collect();
        sizes.sort_by_key(|c| c.n);
        sizes.dedup_by_key(|c| c.n);
        if sizes.len() < 2 {
            continue;
        }
        let mut series = m_series(cells, &|c| c.n as f64);
        if cfg.theory {
            let line: Vec<(f64, f64)> = sizes
                .iter()
                .filter_map(|c| {
                    theory_lookup(&report.theory, c.alpha, *x_max).map(|m| (c.n as f64, m))
                })
                .collect();
            series.push(Series::line("replica M_opt", line));
        }
        let chart = Chart {
            title: format!("scaled profit M, {}, x_max = {x_max}", fixed.describe()),
            x_label: "N".into(),
            y_label: "M".into(),
            series,
            ..Default::default()
        };
        out.push((
            format!("m_vs_n_{}_xmax{x_max}.svg", fixed.tag()),
            chart.to_svg(),
        ));

        let timing: Vec<Series> = report
            .slopes
            .iter()
            .filter(|s| s.x_max == *x_max && s.fixed == *fixed)
            .map(|s| {
                Series::new(
                    format!("{} (slope {:.2})", s.engine.name(), s.exponent),
                    s.points.iter().map(|&(x, y)| (x, y, 0.0)).collect(),
                )
            })
            .collect();
        if !timing.is_empty() {
            let chart = Chart {
                title: format!(
                    "wall time per instance, {}, x_max = {x_max}",
                    fixed.describe()
                ),
                x_label: "N".into(),
                y_label: "ms".into(),
                log_x: true,
                log_y: true,
                series: timing,
            };
            out.push((
                format!("time_vs_n_{}_xmax{x_max}.svg", fixed.tag()),
                chart.to_svg(),
            ));
        }
    }
    out
}

/// Runs the experiment and writes `records.csv`, `summary.csv`,
/// `theory.csv`, `slopes.csv` and SVG plots into `cfg.output_dir`.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let records = run_records(cfg)?;
    let summary = summarize(&records);
    let theory = if cfg.theory {
        theory_rows(cfg)?
    } else {
        Vec::new()
    };
    let slopes = timing_slopes(cfg, &summary);
    let mut report = BenchReport {
        records,
        summary,
        theory,
        slopes,
        files: Vec::new(),
    };

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write(
        dir,
        "records.csv",
        &csv(
            cfg,
            RECORD_HEADER,
            report.records.iter().map(BenchRecord::csv_row),
        ),
        &mut files,
    )?;
    write(
        dir,
        "summary.csv",
        &csv(
            cfg,
            SUMMARY_HEADER,
            report.summary.iter().map(CellSummary::csv_row),
        ),
        &mut files,
    )?;
    if cfg.theory {
        let rows = report.theory.iter().map(|t| match &t.m_opt {
            Ok(m) => format!("{},{},{m},", t.alpha, t.x_max),
            Err(e) => format!("{},{},NA,{}", t.alpha, t.x_max, quote(e)),
        });
        write(
            dir,
            "theory.csv",
            &csv(cfg, "alpha,x_max,m_opt,error", rows),
            &mut files,
        )?;
    }
    if !cfg.deterministic {
        let rows = report.slopes.iter().map(|s| {
            let (kind, value) = match s.fixed {
                Fixed::Alpha(bits) => ("alpha", f64::from_bits(bits).to_string()),
                Fixed::K(k) => ("k", k.to_string()),
            };
            format!(
                "{},{},{kind},{value},{},{}",
                s.engine.name(),
                s.x_max,
                s.exponent,
                s.points.len()
            )
        });
        write(
            dir,
            "slopes.csv",
            &csv(cfg, "engine,x_max,fixed,value,exponent,points", rows),
            &mut files,
        )?;
    }
    for (name, svg) in plots(cfg, &report) {
        write(dir, &name, &svg, &mut files)?;
    }
    report.files = files;
    Ok(report)
}
