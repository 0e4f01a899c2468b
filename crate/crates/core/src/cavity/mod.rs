//! Marginal estimation for the uniform measure over feasible assignments.
//!
//! Two engines are provided. [`bp_run`] passes messages along every edge of
//! the item/constraint factor graph, with each factor-to-item message reduced
//! to a Gaussian tail by treating the other items' load as Gaussian.
//! [`gamp_run`] collapses the edge messages to node quantities and costs
//! `O(NK)` per sweep.

mod bp;
mod gamp;
mod phi;
mod special;

pub use bp::{bp_run, BpState};
pub use gamp::{gamp_run, GampState};
pub use phi::{phi, phi_table, PhiMoments};
pub use special::{
    gaussian_tail, lnh_curvature, lnh_d1, lnh_d2, lnh_first_and_curvature, log_gaussian_tail,
};

use std::fmt;

/// Per-item probability tables `p_i(x)` for `x = 0..=x_i^max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub tables: Vec<Vec<f64>>,
}

impl Marginals {
    pub fn uniform(max_counts: &[u32]) -> Self {
        Self {
            tables: max_counts
                .iter()
                .map(|&c| vec![1.0 / (c as f64 + 1.0); c as usize + 1])
                .collect(),
        }
    }

    /// `Σ_{x ≥ 1} p_i(x)`.
    pub fn prob_nonzero(&self, i: usize) -> f64 {
        self.tables[i].iter().skip(1).sum()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.tables[i]
            .iter()
            .enumerate()
            .map(|(x, p)| x as f64 * p)
            .sum()
    }

    /// Total-variation distance of each item's table to `other`'s.
    pub fn tv_distances(&self, other: &Marginals) -> Vec<f64> {
        self.tables
            .iter()
            .zip(&other.tables)
            .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>())
            .collect()
    }

    pub fn mean_tv_distance(&self, other: &Marginals) -> f64 {
        let d = self.tv_distances(other);
        d.iter().sum::<f64>() / d.len() as f64
    }

    /// Largest absolute difference over all items and levels.
    pub fn max_abs_diff(&self, other: &Marginals) -> f64 {
        self.tables
            .iter()
            .zip(&other.tables)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.tables
            .iter()
            .all(|t| t.iter().all(|&p| p >= 0.0) && (t.iter().sum::<f64>() - 1.0).abs() <= tol)
    }
}

/// Iteration controls shared by both engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOpts {
    pub max_sweeps: usize,
    /// Stop once the largest change of a marginal-defining quantity drops below this.
    pub tol: f64,
    /// `new = (1 − damping)·proposed + damping·old`, at the start of a run.
    pub damping: f64,
    /// Ceiling for the oscillation response. When updates keep flipping
    /// direction and the residual contracts by less than 0.9 per sweep, the
    /// damping is raised to bring that mode down to 0.4 per sweep. Set it at
    /// or below `damping` to keep the damping fixed.
    pub max_damping: f64,
    pub v_floor: f64,
    /// Smallest probability a message table entry may take.
    pub h_floor: f64,
    /// Update order of BP; GAMP ignores it.
    pub schedule: Schedule,
}

/// Order of the BP message updates within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Item by item: the load summaries absorb each item's new moments before
    /// the next item is visited.
    #[default]
    Sequential,
    /// Every factor message from the previous sweep's item moments, then every
    /// item message.
    Flooding,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Sequential => "sequential",
            Schedule::Flooding => "flooding",
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.trim() {
            "sequential" => Ok(Schedule::Sequential),
            "flooding" => Ok(Schedule::Flooding),
            other => Err(crate::Error::param(
                "schedule",
                format!("unknown schedule `{other}`"),
            )),
        }
    }
}

impl Default for IterOpts {
    fn default() -> Self {
        Self {
            max_sweeps: 1000,
            tol: 1e-8,
            damping: 0.5,
            max_damping: 0.97,
            v_floor: 1e-12,
            h_floor: 1e-300,
            schedule: Schedule::Sequential,
        }
    }
}

impl IterOpts {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.max_sweeps == 0 {
            return Err(Error::param("max_sweeps", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::param("damping", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.max_damping) {
            return Err(Error::param("max_damping", "must lie in [0, 1)"));
        }
        if !(self.v_floor > 0.0) || !(self.h_floor > 0.0 && self.h_floor < 1.0) {
            return Err(Error::param("v_floor", "floors must be positive"));
        }
        Ok(())
    }
}

/// What happened during one engine run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub converged: bool,
    pub sweeps: usize,
    /// Largest change in the final sweep.
    pub residual: f64,
    /// How often a variance hit `v_floor`.
    pub v_clamps: usize,
    /// Damping in force at the end of the run.
    pub damping: f64,
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "converged={} sweeps={} residual={:.3e} v_clamps={} damping={}",
            self.converged, self.sweeps, self.residual, self.v_clamps, self.damping
        )
    }
}

const STALL_WINDOW: usize = 10;
/// Per-sweep contraction above which an oscillation counts as a stall.
const STALL_RATE: f64 = 0.9;
/// Contraction the escalated damping aims for on the oscillating mode.
const DAMPED_RATE: f64 = 0.4;

/// Raises the damping when the residual stalls while successive updates keep
/// reversing direction, the signature of a period-two oscillation. Slow
/// monotone convergence leaves it alone.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Damping {
    pub gamma: f64,
    cap: f64,
    mark_sweep: usize,
    mark_residual: f64,
    reversals: usize,
}

impl Damping {
    /// Starts from the larger of the configured and the inherited value.
    pub fn new(opts: &IterOpts, inherited: f64) -> Self {
        let cap = opts.max_damping.max(opts.damping);
        Self {
            gamma: opts.damping.max(inherited.min(cap)),
            cap,
            mark_sweep: 0,
            mark_residual: f64::INFINITY,
            reversals: 0,
        }
    }

    /// `reversed`: the latest update is anti-correlated with the one before.
    pub fn observe(&mut self, sweep: usize, residual: f64, reversed: bool) {
        self.reversals += reversed as usize;
        if sweep < self.mark_sweep + STALL_WINDOW {
            return;
        }
        let span = sweep - self.mark_sweep;
        let oscillating = 2 * self.reversals > span;
        // per-sweep contraction of the oscillating mode
        let rate = (residual / self.mark_residual).powf(1.0 / span as f64);
        if oscillating && rate > STALL_RATE && self.gamma < self.cap {
            // undamped eigenvalue λ behind γ + (1 − γ)λ = −rate, then the γ
            // that maps it to −target
            let rate = rate.min(1.0);
            let lambda = (-rate - self.gamma) / (1.0 - self.gamma);
            self.gamma = ((-DAMPED_RATE - lambda) / (1.0 - lambda)).clamp(self.gamma, self.cap);
        }
        self.mark_sweep = sweep;
        self.mark_residual = residual;
        self.reversals = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EngineKind {
    Bp,
    Gamp,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Bp => "bp",
            EngineKind::Gamp => "gamp",
        }
    }
}

#[inline]
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Mean and variance of a log-domain table whose entries sum to one.
#[inline]
pub(crate) fn log_table_moments(log_p: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (x, &lp) in log_p.iter().enumerate() {
        let p = lp.exp();
        let x = x as f64;
        mean += p * x;
        second += p * x * x;
    }
    (mean, (second - mean * mean).max(0.0))
}
