//! Exhaustive reference computations for small instances.
//!
//! Both the optimum and the exact marginals of the uniform measure over
//! feasible assignments come from one depth-first enumeration. A subtree is
//! cut as soon as some row's partial load cannot be brought back under its
//! capacity by the most negative completion of the remaining items.

use crate::cavity::Marginals;
use crate::error::{Error, Result};
use crate::instance::{Instance, Selection};

pub const DEFAULT_BUDGET: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub best_selection: Selection,
    pub best_profit: f64,
    pub n_feasible: u64,
}

impl ExactResult {
    pub fn ln_feasible(&self) -> f64 {
        (self.n_feasible as f64).ln()
    }
}

struct Enumeration<'a> {
    inst: &'a Instance,
    /// `slack_floor[d * k + mu]`: most negative load the items `d..` can still add.
    slack_floor: Vec<f64>,
    loads: Vec<f64>,
    current: Vec<u32>,
    profit_prefix: Vec<f64>,
    best: Option<(f64, Vec<u32>)>,
    level_counts: Option<Vec<Vec<u64>>>,
}

impl<'a> Enumeration<'a> {
    fn new(inst: &'a Instance, with_counts: bool) -> Self {
        let n = inst.n_items();
        let k = inst.n_constraints();
        let mut slack_floor = vec![0.0; (n + 1) * k];
        for d in (0..n).rev() {
            for mu in 0..k {
                let w = inst.weight(mu, d);
                slack_floor[d * k + mu] =
                    slack_floor[(d + 1) * k + mu] + w.min(0.0) * inst.max_counts()[d] as f64;
            }
        }
        Self {
            inst,
            slack_floor,
            loads: vec![0.0; (n + 1) * k],
            current: vec![0; n],
            profit_prefix: vec![0.0; n + 1],
            best: None,
            level_counts: with_counts.then(|| {
                inst.max_counts()
                    .iter()
                    .map(|&c| vec![0; c as usize + 1])
                    .collect()
            }),
        }
    }

    fn can_complete(&self, depth: usize) -> bool {
        let k = self.inst.n_constraints();
        let caps = self.inst.capacities();
        (0..k).all(|mu| self.loads[depth * k + mu] + self.slack_floor[depth * k + mu] <= caps[mu])
    }

    /// Returns the number of feasible completions below `depth`.
    fn descend(&mut self, depth: usize) -> u64 {
        let n = self.inst.n_items();
        if !self.can_complete(depth) {
            return 0;
        }
        if depth == n {
            let profit = self.profit_prefix[n];
            // levels are visited in ascending order, so the first optimum found
            // is the lexicographically smallest
            if self.best.as_ref().is_none_or(|(b, _)| profit > *b) {
                self.best = Some((profit, self.current.clone()));
            }
            return 1;
        }
        let k = self.inst.n_constraints();
        let v = self.inst.profits()[depth];
        let mut total = 0;
        for level in 0..=self.inst.max_counts()[depth] {
            let x = level as f64;
            for mu in 0..k {
                self.loads[(depth + 1) * k + mu] =
                    self.loads[depth * k + mu] + x * self.inst.weight(mu, depth);
            }
            self.profit_prefix[depth + 1] = self.profit_prefix[depth] + v * x;
            self.current[depth] = level;
            let c = self.descend(depth + 1);
            if let Some(counts) = self.level_counts.as_mut() {
                counts[depth][level as usize] += c;
            }
            total += c;
        }
        self.current[depth] = 0;
        total
    }
}

fn check_budget(inst: &Instance, budget: f64) -> Result<()> {
    let states = inst.search_space();
    if states > budget {
        return Err(Error::BudgetExceeded { states, budget });
    }
    Ok(())
}

pub fn exact_optimum(instance: &Instance) -> Result<ExactResult> {
    exact_optimum_with_budget(instance, DEFAULT_BUDGET)
}

pub fn exact_optimum_with_budget(instance: &Instance, budget: f64) -> Result<ExactResult> {
    check_budget(instance, budget)?;
    let mut e = Enumeration::new(instance, false);
    let n_feasible = e.descend(0);
    let (best_profit, counts) = e.best.ok_or(Error::NoFeasible)?;
    Ok(ExactResult {
        best_selection: Selection { counts },
        best_profit,
        n_feasible,
    })
}

/// Exact marginals of the uniform distribution over feasible assignments.
pub fn exact_marginals(instance: &Instance) -> Result<Marginals> {
    exact_marginals_with_budget(instance, DEFAULT_BUDGET)
}

pub fn exact_marginals_with_budget(instance: &Instance, budget: f64) -> Result<Marginals> {
    check_budget(instance, budget)?;
    let mut e = Enumeration::new(instance, true);
    let total = e.descend(0);
    if total == 0 {
        return Err(Error::NoFeasible);
    }
    let tables = e
        .level_counts
        .unwrap()
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / total as f64).collect())
        .collect();
    Ok(Marginals { tables })
}
