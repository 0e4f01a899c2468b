//! Greedy constructions.
//!
//! [`mpgs_solve`] repeatedly estimates the marginals of the uniform measure
//! on the residual instance, adds one unit of the item most likely to be
//! non-zero, and shrinks that item's cap and every capacity accordingly.
//! [`density_greedy_solve`] is a cheap profit-per-relative-weight baseline.

use crate::cavity::{
    bp_run, gamp_run, BpState, Diagnostics, EngineKind, GampState, IterOpts, Marginals,
};
use crate::error::{Error, Result};
use crate::instance::{evaluate, row_load, Evaluation, Instance, Selection};

#[derive(Debug, Clone, PartialEq)]
pub struct MpgsTrace {
    /// Item index of every committed unit, in order.
    pub picks: Vec<usize>,
    /// Engine sweeps spent on the estimate that produced each pick.
    pub sweeps_per_pick: Vec<usize>,
    /// Estimates that hit `max_sweeps` without converging.
    pub unconverged: usize,
    pub final_selection: Selection,
    pub final_evaluation: Evaluation,
}

impl MpgsTrace {
    pub fn total_sweeps(&self) -> usize {
        self.sweeps_per_pick.iter().sum()
    }
}

/// Whether one more unit of `item` keeps every original constraint satisfied.
fn fits(original: &Instance, counts: &mut [u32], item: usize) -> bool {
    counts[item] += 1;
    let ok = (0..original.n_constraints())
        .all(|mu| row_load(original.row(mu), counts) <= original.capacities()[mu]);
    counts[item] -= 1;
    ok
}

/// Cheap pre-check against the residual capacities.
fn fits_residual(residual: &Instance, item: usize) -> bool {
    residual.max_counts()[item] > 0
        && residual
            .column(item)
            .zip(residual.capacities())
            .all(|(w, &c)| c - w >= 0.0)
}

enum Estimator {
    Bp(Option<BpState>),
    Gamp(Option<GampState>),
}

impl Estimator {
    fn estimate(
        &mut self,
        inst: &Instance,
        opts: &IterOpts,
        warm: bool,
    ) -> Result<(Marginals, Diagnostics)> {
        match self {
            Estimator::Bp(slot) => {
                let init = match slot.take() {
                    Some(mut s) if warm => {
                        s.fit_to(inst)?;
                        Some(s)
                    }
                    _ => None,
                };
                let (m, s, d) = bp_run(inst, opts, init)?;
                *slot = Some(s);
                Ok((m, d))
            }
            Estimator::Gamp(slot) => {
                let init = match slot.take() {
                    Some(mut s) if warm => {
                        s.fit_to(inst)?;
                        Some(s)
                    }
                    _ => None,
                };
                let (m, s, d) = gamp_run(inst, opts, init)?;
                *slot = Some(s);
                Ok((m, d))
            }
        }
    }
}

pub fn mpgs_solve(
    instance: &Instance,
    engine: EngineKind,
    opts: &IterOpts,
    warm_start: bool,
) -> Result<MpgsTrace> {
    opts.validate()?;
    let mut estimator = match engine {
        EngineKind::Bp => Estimator::Bp(None),
        EngineKind::Gamp => Estimator::Gamp(None),
    };
    let n = instance.n_items();
    let mut residual = instance.clone();
    let mut counts = vec![0u32; n];
    let mut picks = Vec::new();
    let mut sweeps_per_pick = Vec::new();
    let mut unconverged = 0;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);

    loop {
        if !(0..n).any(|i| fits_residual(&residual, i)) {
            break;
        }
        let pick_index = picks.len();
        let (marginals, diag) = estimator
            .estimate(&residual, opts, warm_start)
            .map_err(|e| Error::AtPick {
                pick: pick_index,
                source: Box::new(e),
            })?;
        if !diag.converged {
            unconverged += 1;
        }
        order.clear();
        order.extend(
            (0..n)
                .filter(|&i| residual.max_counts()[i] > 0)
                .map(|i| (marginals.prob_nonzero(i), i)),
        );
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let chosen = order
            .iter()
            .map(|&(_, i)| i)
            .find(|&i| fits_residual(&residual, i) && fits(instance, &mut counts, i));
        let Some(i) = chosen else { break };
        counts[i] += 1;
        residual.consume(i);
        picks.push(i);
        sweeps_per_pick.push(diag.sweeps);
    }
    finish(instance, counts, picks, sweeps_per_pick, unconverged)
}

fn finish(
    instance: &Instance,
    counts: Vec<u32>,
    picks: Vec<usize>,
    sweeps_per_pick: Vec<usize>,
    unconverged: usize,
) -> Result<MpgsTrace> {
    let final_selection = Selection { counts };
    let final_evaluation = evaluate(instance, &final_selection, None)?;
    if !final_evaluation.feasible {
        // only reachable when the empty selection already violates a constraint
        return Err(Error::NoFeasible);
    }
    Ok(MpgsTrace {
        picks,
        sweeps_per_pick,
        unconverged,
        final_selection,
        final_evaluation,
    })
}

/// Adds, one unit at a time, the feasible item maximizing
/// `v_i / Σ_μ (w_{μi} / C_μ)` over the remaining capacities. Items whose
/// denominator is non-positive rank first.
pub fn density_greedy_solve(instance: &Instance) -> Result<MpgsTrace> {
    let n = instance.n_items();
    let mut residual = instance.clone();
    let mut counts = vec![0u32; n];
    let mut picks = Vec::new();
    loop {
        let caps = residual.capacities();
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if !fits_residual(&residual, i) || !fits(instance, &mut counts, i) {
                continue;
            }
            let denom: f64 = residual
                .column(i)
                .zip(caps)
                .map(|(w, &c)| {
                    if c > 0.0 {
                        w / c
                    } else if w < 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        0.0
                    }
                })
                .sum();
            let score = if denom > 0.0 {
                instance.profits()[i] / denom
            } else {
                f64::INFINITY
            };
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, i));
            }
        }
        let Some((_, i)) = best else { break };
        counts[i] += 1;
        residual.consume(i);
        picks.push(i);
    }
    let sweeps = vec![0; picks.len()];
    finish(instance, counts, picks, sweeps, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Bp,
    Gamp,
    Greedy,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Bp => "bp",
            SolverKind::Gamp => "gamp",
            SolverKind::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bp" => Ok(SolverKind::Bp),
            "gamp" => Ok(SolverKind::Gamp),
            "greedy" => Ok(SolverKind::Greedy),
            other => Err(Error::param("engine", format!("unknown engine `{other}`"))),
        }
    }
}

/// Dispatches to MPGS with the given engine or to the density greedy.
pub fn solve(
    instance: &Instance,
    kind: SolverKind,
    opts: &IterOpts,
    warm_start: bool,
) -> Result<MpgsTrace> {
    match kind {
        SolverKind::Bp => mpgs_solve(instance, EngineKind::Bp, opts, warm_start),
        SolverKind::Gamp => mpgs_solve(instance, EngineKind::Gamp, opts, warm_start),
        SolverKind::Greedy => density_greedy_solve(instance),
    }
}
