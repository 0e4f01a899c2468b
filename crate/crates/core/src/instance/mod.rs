//! Problem data, the random ensemble, and selection evaluation.
//!
//! An [`Instance`] asks for integer counts `x_i ∈ {0, …, x_i^max}` that
//! maximize `Σ v_i x_i` subject to `Σ_i w_{μi} x_i ≤ C_μ` for every
//! constraint row `μ`.

mod io;

pub use io::{load_instance, read_instance, save_instance, write_instance};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A concrete problem. Weights are stored row-major, one row per constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n_items: usize,
    n_constraints: usize,
    profits: Vec<f64>,
    weights: Vec<f64>,
    capacities: Vec<f64>,
    max_counts: Vec<u32>,
}

impl Instance {
    pub fn new(
        profits: Vec<f64>,
        weights: Vec<Vec<f64>>,
        capacities: Vec<f64>,
        max_counts: Vec<u32>,
    ) -> Result<Self> {
        let n = profits.len();
        let k = capacities.len();
        if weights.len() != k {
            return Err(Error::Dimension(format!(
                "{} weight rows for {} capacities",
                weights.len(),
                k
            )));
        }
        let mut flat = Vec::with_capacity(n * k);
        for (mu, row) in weights.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "weight row {mu} has {} entries, expected {n}",
                    row.len()
                )));
            }
            flat.extend(row);
        }
        Self::from_flat(profits, flat, capacities, max_counts)
    }

    /// Builds an instance from a row-major `K×N` weight buffer.
    pub fn from_flat(
        profits: Vec<f64>,
        weights: Vec<f64>,
        capacities: Vec<f64>,
        max_counts: Vec<u32>,
    ) -> Result<Self> {
        let n = profits.len();
        let k = capacities.len();
        if n == 0 {
            return Err(Error::param("n_items", "must be positive"));
        }
        if k == 0 {
            return Err(Error::param("n_constraints", "must be positive"));
        }
        if max_counts.len() != n {
            return Err(Error::Dimension(format!(
                "{} max_counts for {n} items",
                max_counts.len()
            )));
        }
        if weights.len() != n * k {
            return Err(Error::Dimension(format!(
                "{} weights for a {k}x{n} matrix",
                weights.len()
            )));
        }
        if let Some(p) = profits.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::param(
                "profits",
                format!("{p} is not a finite non-negative real"),
            ));
        }
        if weights.iter().chain(&capacities).any(|v| !v.is_finite()) {
            return Err(Error::param("weights", "non-finite weight or capacity"));
        }
        Ok(Self {
            n_items: n,
            n_constraints: k,
            profits,
            weights,
            capacities,
            max_counts,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn profits(&self) -> &[f64] {
        &self.profits
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn max_counts(&self) -> &[u32] {
        &self.max_counts
    }

    /// Row `mu` of the weight matrix (all items).
    #[inline]
    pub fn row(&self, mu: usize) -> &[f64] {
        &self.weights[mu * self.n_items..(mu + 1) * self.n_items]
    }

    #[inline]
    pub fn weight(&self, mu: usize, i: usize) -> f64 {
        self.weights[mu * self.n_items + i]
    }

    /// Weight column of item `i` across all constraints.
    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_constraints).map(move |mu| self.weight(mu, i))
    }

    pub fn weights_flat(&self) -> &[f64] {
        &self.weights
    }

    /// Number of assignments in the full search space, `Π (x_i^max + 1)`.
    pub fn search_space(&self) -> f64 {
        self.max_counts.iter().map(|&c| c as f64 + 1.0).product()
    }

    /// Commits one unit of item `i`: its cap drops by one and every capacity
    /// is reduced by the item's weight.
    pub(crate) fn consume(&mut self, i: usize) {
        debug_assert!(self.max_counts[i] > 0);
        self.max_counts[i] -= 1;
        for mu in 0..self.n_constraints {
            self.capacities[mu] -= self.weights[mu * self.n_items + i];
        }
    }

    pub fn capacities_mut(&mut self) -> &mut [f64] {
        &mut self.capacities
    }

    pub fn max_counts_mut(&mut self) -> &mut [u32] {
        &mut self.max_counts
    }

    /// Multiplies one constraint row and its capacity by `factor`.
    pub fn scale_row(&mut self, mu: usize, factor: f64) {
        let n = self.n_items;
        for w in &mut self.weights[mu * n..(mu + 1) * n] {
            *w *= factor;
        }
        self.capacities[mu] *= factor;
    }
}

/// Parameters of the random ensemble: unit profits, `C_μ = C·N`, uniform cap
/// `x^max` and i.i.d. Gaussian weights `N(w, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    pub n_items: usize,
    pub alpha: f64,
    pub mean_weight: f64,
    pub weight_variance: f64,
    pub capacity_ratio: f64,
    pub x_max: u32,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            n_items: 50,
            alpha: 1.0,
            mean_weight: 0.5,
            weight_variance: 1.0 / 12.0,
            capacity_ratio: 0.25,
            x_max: 1,
            seed: 0,
        }
    }
}

impl EnsembleParams {
    /// Sets `alpha = k / n` so that the derived constraint count is exactly `k`.
    pub fn with_constraints(mut self, k: usize) -> Self {
        self.alpha = k as f64 / self.n_items as f64;
        self
    }

    /// `K = round(α·N)`, halves rounded up.
    pub fn n_constraints(&self) -> usize {
        (self.alpha * self.n_items as f64 + 0.5).floor() as usize
    }

    /// `C / w`, the per-item mean count at which the capacities are just met.
    pub fn fill_ratio(&self) -> f64 {
        self.capacity_ratio / self.mean_weight
    }

    pub fn sigma(&self) -> f64 {
        self.weight_variance.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(Error::param("n_items", "must be positive"));
        }
        let positive = [
            ("alpha", self.alpha),
            ("mean_weight", self.mean_weight),
            ("weight_variance", self.weight_variance),
            ("capacity_ratio", self.capacity_ratio),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(
                    name,
                    format!("{v} must be a finite positive real"),
                ));
            }
        }
        if self.x_max == 0 {
            return Err(Error::param("x_max", "must be positive"));
        }
        if self.n_constraints() == 0 {
            return Err(Error::param(
                "alpha",
                format!(
                    "round({}·{}) gives zero constraints",
                    self.alpha, self.n_items
                ),
            ));
        }
        Ok(())
    }

    /// Prefactor `M = (U − (C/w)·N)/√N` of the `O(√N)` profit term.
    pub fn scaled_m(&self, profit: f64, n_items: usize) -> f64 {
        let n = n_items as f64;
        (profit - self.fill_ratio() * n) / n.sqrt()
    }
}

/// Draws an instance from the ensemble.
///
/// The generator is ChaCha8 seeded with `seed_from_u64(params.seed)`; weights
/// are drawn row by row (constraint-major) from `rand_distr::Normal`.
pub fn generate_instance(params: &EnsembleParams) -> Result<Instance> {
    params.validate()?;
    let n = params.n_items;
    let k = params.n_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(params.mean_weight, params.sigma())
        .map_err(|e| Error::param("weight_variance", e.to_string()))?;
    let weights: Vec<f64> = (0..n * k).map(|_| normal.sample(&mut rng)).collect();
    Instance::from_flat(
        vec![1.0; n],
        weights,
        vec![params.capacity_ratio * n as f64; k],
        vec![params.x_max; n],
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selection {
    pub counts: Vec<u32>,
}

impl Selection {
    pub fn empty(n: usize) -> Self {
        Self { counts: vec![0; n] }
    }

    pub fn total_units(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

impl From<Vec<u32>> for Selection {
    fn from(counts: Vec<u32>) -> Self {
        Self { counts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub profit: f64,
    pub loads: Vec<f64>,
    pub slacks: Vec<f64>,
    pub feasible: bool,
    /// Present only when ensemble parameters were supplied.
    pub scaled_m: Option<f64>,
}

/// `Σ_i w_{μi} x_i`, summed in item order. Every feasibility decision in the
/// crate goes through this so that they agree bit for bit.
pub(crate) fn row_load(row: &[f64], counts: &[u32]) -> f64 {
    row.iter().zip(counts).map(|(w, &x)| w * x as f64).sum()
}

pub fn evaluate(
    instance: &Instance,
    selection: &Selection,
    params: Option<&EnsembleParams>,
) -> Result<Evaluation> {
    let n = instance.n_items();
    if selection.counts.len() != n {
        return Err(Error::Dimension(format!(
            "selection has {} entries for {n} items",
            selection.counts.len()
        )));
    }
    for (i, (&c, &cap)) in selection
        .counts
        .iter()
        .zip(instance.max_counts())
        .enumerate()
    {
        if c > cap {
            return Err(Error::CountExceedsCap {
                item: i,
                count: c,
                cap,
            });
        }
    }
    let profit: f64 = instance
        .profits()
        .iter()
        .zip(&selection.counts)
        .map(|(v, &x)| v * x as f64)
        .sum();
    let loads: Vec<f64> = (0..instance.n_constraints())
        .map(|mu| row_load(instance.row(mu), &selection.counts))
        .collect();
    let slacks: Vec<f64> = instance
        .capacities()
        .iter()
        .zip(&loads)
        .map(|(c, l)| c - l)
        .collect();
    let feasible = slacks.iter().all(|&s| s >= 0.0);
    Ok(Evaluation {
        profit,
        loads,
        slacks,
        feasible,
        scaled_m: params.map(|p| p.scaled_m(profit, n)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, alpha: f64) -> EnsembleParams {
        EnsembleParams {
            n_items: n,
            alpha,
            ..Default::default()
        }
    }

    #[test]
    fn zero_variance_limit() {
        let p = EnsembleParams {
            n_items: 2,
            alpha: 0.5,
            weight_variance: 1e-30,
            capacity_ratio: 0.25,
            seed: 7,
            ..Default::default()
        };
        let inst = generate_instance(&p).unwrap();
        assert_eq!(inst.n_constraints(), 1);
        assert_eq!(inst.capacities(), &[0.5]);
        for &w in inst.weights_flat() {
            assert!((w - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_and_capacities() {
        let inst = generate_instance(&params(50, 1.0)).unwrap();
        assert_eq!(inst.n_items(), 50);
        assert_eq!(inst.n_constraints(), 50);
        assert_eq!(inst.weights_flat().len(), 2500);
        assert!(inst.capacities().iter().all(|&c| c == 12.5));
        assert!(inst.profits().iter().all(|&v| v == 1.0));
        assert!(inst.max_counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn weight_sample_mean() {
        let p = EnsembleParams {
            n_items: 1000,
            alpha: 1.0,
            seed: 3,
            ..Default::default()
        };
        let inst = generate_instance(&p).unwrap();
        let n = inst.weights_flat().len() as f64;
        let mean = inst.weights_flat().iter().sum::<f64>() / n;
        let var = inst
            .weights_flat()
            .iter()
            .map(|w| (w - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let bound = 4.0 * (p.weight_variance / n).sqrt();
        assert!((mean - 0.5).abs() < bound, "mean {mean} outside ±{bound}");
        assert!((var - 1.0 / 12.0).abs() < 2e-3, "variance {var}");
    }

    #[test]
    fn same_seed_same_instance() {
        let a = generate_instance(&params(30, 0.7)).unwrap();
        let b = generate_instance(&params(30, 0.7)).unwrap();
        assert_eq!(save_instance(&a), save_instance(&b));
        let c = generate_instance(&EnsembleParams {
            seed: 1,
            ..params(30, 0.7)
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_params() {
        for p in [
            EnsembleParams {
                n_items: 0,
                ..Default::default()
            },
            EnsembleParams {
                alpha: 0.0,
                ..Default::default()
            },
            EnsembleParams {
                mean_weight: -1.0,
                ..Default::default()
            },
            EnsembleParams {
                weight_variance: 0.0,
                ..Default::default()
            },
            EnsembleParams {
                capacity_ratio: 0.0,
                ..Default::default()
            },
            EnsembleParams {
                n_items: 10,
                alpha: 0.04,
                ..Default::default()
            },
        ] {
            assert!(generate_instance(&p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn k_rounds_half_up() {
        assert_eq!(params(10, 0.25).n_constraints(), 3);
        assert_eq!(params(10, 0.24).n_constraints(), 2);
        assert_eq!(params(14, 3.0 / 14.0).n_constraints(), 3);
        assert_eq!(params(7, 1.0).with_constraints(3).n_constraints(), 3);
    }

    #[test]
    fn evaluate_empty_selection() {
        let inst = generate_instance(&params(20, 0.5)).unwrap();
        let p = params(20, 0.5);
        let ev = evaluate(&inst, &Selection::empty(20), Some(&p)).unwrap();
        assert_eq!(ev.profit, 0.0);
        assert!(ev.loads.iter().all(|&l| l == 0.0));
        assert!(ev.feasible);
        assert_eq!(ev.scaled_m.unwrap(), -(0.25 / 0.5) * 20f64.sqrt());
    }

    #[test]
    fn evaluate_overloaded() {
        let inst = Instance::new(vec![1.0; 3], vec![vec![0.2; 3]], vec![0.5], vec![1; 3]).unwrap();
        let ev = evaluate(&inst, &vec![1, 1, 1].into(), None).unwrap();
        assert_eq!(ev.profit, 3.0);
        assert!((ev.loads[0] - 0.6).abs() < 1e-15);
        assert!(!ev.feasible);
        assert!(ev.scaled_m.is_none());
    }

    #[test]
    fn evaluate_scaled_m() {
        let inst = Instance::new(vec![1.0; 4], vec![vec![0.5; 4]], vec![1.0], vec![1; 4]).unwrap();
        let p = params(4, 0.25);
        let ev = evaluate(&inst, &vec![1, 1, 1, 0].into(), Some(&p)).unwrap();
        assert_eq!(ev.scaled_m, Some(0.5));
    }

    #[test]
    fn boundary_load_is_feasible() {
        let inst =
            Instance::new(vec![1.0; 2], vec![vec![0.25, 0.5]], vec![0.75], vec![1; 2]).unwrap();
        let ev = evaluate(&inst, &vec![1, 1].into(), None).unwrap();
        assert_eq!(ev.slacks[0], 0.0);
        assert!(ev.feasible);
    }

    #[test]
    fn evaluate_errors() {
        let inst =
            Instance::new(vec![1.0; 2], vec![vec![0.1, 0.1]], vec![1.0], vec![1, 2]).unwrap();
        assert!(matches!(
            evaluate(&inst, &vec![0].into(), None),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            evaluate(&inst, &vec![2, 0].into(), None),
            Err(Error::CountExceedsCap { item: 0, .. })
        ));
    }

    #[test]
    fn consume_updates_residual() {
        let mut inst = Instance::new(
            vec![1.0; 2],
            vec![vec![0.1, 0.3], vec![0.2, -0.1]],
            vec![1.0, 1.0],
            vec![2, 1],
        )
        .unwrap();
        inst.consume(1);
        assert_eq!(inst.max_counts(), &[2, 0]);
        assert!((inst.capacities()[0] - 0.7).abs() < 1e-15);
        assert!((inst.capacities()[1] - 1.1).abs() < 1e-15);
    }
}
