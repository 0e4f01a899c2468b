//! The `gmdkp` command line.
//!
//! Output is comma-separated `key,value` lines followed by tables with a
//! header row, so it can be read back by any CSV reader.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::bench::{run_bench, BenchConfig};
use crate::cavity::{bp_run, gamp_run, IterOpts, Schedule};
use crate::instance::{
    generate_instance, read_instance, save_instance, write_instance, EnsembleParams, Instance,
};
use crate::mpgs::{solve, SolverKind};
use crate::oracle::{exact_marginals_with_budget, exact_optimum_with_budget, DEFAULT_BUDGET};
use crate::replica::{entropy_curve, find_m_opt_with, EntropyPoint, RsOpts, TheoryOpts};

#[derive(Debug, Parser)]
#[command(
    name = "gmdkp",
    version,
    about = "Cavity-method solvers and replica theory for the generalized multidimensional knapsack problem"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random instance from the ensemble.
    Gen {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run MPGS (bp, gamp) or the density greedy on an instance.
    Solve {
        /// Instance file; a generated instance is used when absent.
        path: Option<PathBuf>,
        #[arg(long, default_value = "bp")]
        engine: SolverKind,
        #[arg(long)]
        warm_start: bool,
        #[arg(long, default_value_t = IterOpts::default().tol)]
        tol: f64,
        #[arg(long, default_value_t = IterOpts::default().damping)]
        damping: f64,
        #[arg(long, default_value_t = IterOpts::default().max_sweeps)]
        max_sweeps: usize,
        /// BP update order: sequential or flooding.
        #[arg(long, default_value = "sequential")]
        schedule: Schedule,
        /// Also print key=value diagnostics of one engine run on the full instance.
        #[arg(long)]
        diagnostics: bool,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Exhaustive optimum, feasible count and optionally exact marginals.
    Exact {
        path: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: f64,
        #[arg(long)]
        marginals: bool,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Replica-symmetric entropy curve and `M_opt`.
    Theory {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Write the curve as CSV here.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Evaluate the curve on a uniform grid from this M up to `M_opt`
        /// instead of reporting the scan points.
        #[arg(long, allow_hyphen_values = true)]
        grid_from: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        /// Base Gauss-Hermite rule size.
        #[arg(long, default_value_t = RsOpts::default().nodes)]
        nodes: usize,
    },
    /// Ensemble experiment from a `key = value` config file.
    Bench {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress the timestamp line and wall times.
        #[arg(long)]
        deterministic: bool,
    },
}

/// Ensemble parameters shared by every subcommand that draws an instance.
#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Constraint density; `K = round(α·N)`.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Constraint count; overrides `--alpha`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub xmax: u32,
    #[arg(long, default_value_t = 0.5)]
    pub w: f64,
    #[arg(long, default_value_t = 1.0 / 12.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.25)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl EnsembleArgs {
    pub fn params(&self) -> EnsembleParams {
        let p = EnsembleParams {
            n_items: self.n,
            alpha: self.alpha,
            mean_weight: self.w,
            weight_variance: self.sigma2,
            capacity_ratio: self.c,
            x_max: self.xmax,
            seed: self.seed,
        };
        match self.k {
            Some(k) => p.with_constraints(k),
            None => p,
        }
    }

    fn instance(&self, path: Option<&PathBuf>) -> anyhow::Result<Instance> {
        match path {
            Some(p) => read_instance(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(generate_instance(&self.params())?),
        }
    }
}

fn counts_text(counts: &[u32]) -> String {
    counts
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub const CURVE_HEADER: &str = "M,S,Q,q,Q_hat,q_hat,M_hat,residual";

pub fn curve_csv(points: &[EntropyPoint]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in points {
        let o = &p.order;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.m, p.entropy, o.q_big, o.q, o.q_hat_big, o.q_hat, o.m_hat, p.residual
        ));
    }
    out
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen {
            ensemble,
            out: path,
        } => {
            let inst = generate_instance(&ensemble.params())?;
            match path {
                Some(p) => {
                    write_instance(&inst, &p)
                        .with_context(|| format!("writing {}", p.display()))?;
                    writeln!(out, "wrote,{}", p.display())?;
                    writeln!(out, "n,{}", inst.n_items())?;
                    writeln!(out, "k,{}", inst.n_constraints())?;
                }
                None => out.write_all(save_instance(&inst).as_bytes())?,
            }
        }
        Command::Solve {
            path,
            engine,
            warm_start,
            tol,
            damping,
            max_sweeps,
            schedule,
            diagnostics,
            ensemble,
        } => {
            let inst = ensemble.instance(path.as_ref())?;
            let opts = IterOpts {
                tol,
                damping,
                max_sweeps,
                schedule,
                ..IterOpts::default()
            };
            let trace = solve(&inst, engine, &opts, warm_start)?;
            let ev = &trace.final_evaluation;
            let params = ensemble.params();
            writeln!(out, "engine,{}", engine.name())?;
            writeln!(out, "n,{}", inst.n_items())?;
            writeln!(out, "k,{}", inst.n_constraints())?;
            writeln!(out, "profit,{}", ev.profit)?;
            writeln!(
                out,
                "scaled_m,{}",
                params.scaled_m(ev.profit, inst.n_items())
            )?;
            writeln!(out, "feasible,{}", ev.feasible)?;
            writeln!(out, "sweeps_total,{}", trace.total_sweeps())?;
            writeln!(out, "unconverged,{}", trace.unconverged)?;
            writeln!(
                out,
                "selection,{}",
                counts_text(&trace.final_selection.counts)
            )?;
            if diagnostics && engine != SolverKind::Greedy {
                let diag = match engine {
                    SolverKind::Bp => bp_run(&inst, &opts, None)?.2,
                    _ => gamp_run(&inst, &opts, None)?.2,
                };
                writeln!(out, "diagnostics,{diag}")?;
            }
            writeln!(out, "pick,item,sweeps")?;
            for (j, (item, sweeps)) in trace.picks.iter().zip(&trace.sweeps_per_pick).enumerate() {
                writeln!(out, "{j},{item},{sweeps}")?;
            }
        }
        Command::Exact {
            path,
            budget,
            marginals,
            ensemble,
        } => {
            let inst = ensemble.instance(path.as_ref())?;
            let r = exact_optimum_with_budget(&inst, budget)?;
            writeln!(out, "n,{}", inst.n_items())?;
            writeln!(out, "k,{}", inst.n_constraints())?;
            writeln!(out, "profit,{}", r.best_profit)?;
            writeln!(
                out,
                "scaled_m,{}",
                ensemble.params().scaled_m(r.best_profit, inst.n_items())
            )?;
            writeln!(out, "n_feasible,{}", r.n_feasible)?;
            writeln!(out, "selection,{}", counts_text(&r.best_selection.counts))?;
            if marginals {
                let m = exact_marginals_with_budget(&inst, budget)?;
                writeln!(out, "item,level,probability")?;
                for (i, table) in m.tables.iter().enumerate() {
                    for (level, p) in table.iter().enumerate() {
                        writeln!(out, "{i},{level},{p}")?;
                    }
                }
            }
        }
        Command::Theory {
            ensemble,
            curve,
            grid_from,
            grid_step,
            nodes,
        } => {
            let params = ensemble.params();
            let rs = RsOpts {
                nodes,
                ..RsOpts::default()
            };
            let res = find_m_opt_with(
                ensemble.alpha,
                &params,
                &TheoryOpts {
                    rs: rs.clone(),
                    ..TheoryOpts::default()
                },
            )?;
            let points = match grid_from {
                Some(from) => {
                    if !(grid_step > 0.0) || !(from < res.m_opt) {
                        bail!("--grid-from must lie below M_opt = {} and --grid-step must be positive", res.m_opt);
                    }
                    let mut ms: Vec<f64> = (0..)
                        .map(|j| from + j as f64 * grid_step)
                        .take_while(|&m| m < res.m_opt - 1e-12)
                        .collect();
                    ms.push(res.m_opt);
                    entropy_curve(ensemble.alpha, &params, &ms, &rs)?
                }
                None => res.curve.clone(),
            };
            writeln!(out, "alpha,{}", res.alpha)?;
            writeln!(out, "x_max,{}", res.x_max)?;
            writeln!(out, "m_opt,{}", res.m_opt)?;
            match curve {
                Some(p) => {
                    std::fs::write(&p, curve_csv(&points))
                        .with_context(|| format!("writing {}", p.display()))?;
                    writeln!(out, "curve,{}", p.display())?;
                }
                None => out.write_all(curve_csv(&points).as_bytes())?,
            }
        }
        Command::Bench {
            config,
            out: dir,
            deterministic,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg =
                BenchConfig::parse(&text).with_context(|| format!("in {}", config.display()))?;
            if let Some(d) = dir {
                cfg.output_dir = d;
            }
            cfg.deterministic |= deterministic;
            let report = run_bench(&cfg)?;
            let failures = report.records.iter().filter(|r| r.error.is_some()).count();
            writeln!(out, "rows,{}", report.records.len())?;
            writeln!(out, "failures,{failures}")?;
            for s in &report.slopes {
                writeln!(out, "slope,{},{},{}", s.engine.name(), s.x_max, s.exponent)?;
            }
            for f in &report.files {
                writeln!(out, "file,{}", f.display())?;
            }
        }
    }
    Ok(())
}

/// Entry point of the binary. Usage errors exit through clap with status 2.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
