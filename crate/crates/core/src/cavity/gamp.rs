use super::phi::{phi, phi_table};
use super::special::lnh_first_and_curvature;
use super::{Damping, Diagnostics, IterOpts, Marginals};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Node variables of the GAMP iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GampState {
    /// Item means `m_i` and variances `χ_i`.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Quadratic and linear coefficients `a_i`, `b_i` of the item marginals.
    pub curvature: Vec<f64>,
    pub field: Vec<f64>,
    /// Per-constraint load variance `V_μ`, `B_μ = (ln H)'` and `A_μ = −(ln H)''`.
    pub load_var: Vec<f64>,
    pub slope: Vec<f64>,
    pub stiffness: Vec<f64>,
    /// Damping reached so far; a warm start resumes from it.
    pub damping: f64,
}

struct Weights {
    by_item: Vec<f64>,
}

impl Weights {
    fn new(inst: &Instance) -> Self {
        let (n, k) = (inst.n_items(), inst.n_constraints());
        let mut by_item = vec![0.0; n * k];
        for mu in 0..k {
            for (i, &w) in inst.row(mu).iter().enumerate() {
                by_item[i * k + mu] = w;
            }
        }
        Self { by_item }
    }
}

impl GampState {
    /// Items uniform over their levels, constraint terms evaluated from them.
    pub fn uniform(instance: &Instance, opts: &IterOpts) -> Self {
        let n = instance.n_items();
        let k = instance.n_constraints();
        let mut s = Self {
            mean: instance
                .max_counts()
                .iter()
                .map(|&c| c as f64 / 2.0)
                .collect(),
            var: instance
                .max_counts()
                .iter()
                .map(|&c| {
                    let l = c as f64 + 1.0;
                    (l * l - 1.0) / 12.0
                })
                .collect(),
            curvature: vec![0.0; n],
            field: vec![0.0; n],
            load_var: vec![0.0; k],
            slope: vec![0.0; k],
            stiffness: vec![0.0; k],
            damping: 0.0,
        };
        s.update_constraints(instance, opts);
        s
    }

    pub fn matches(&self, instance: &Instance) -> bool {
        self.mean.len() == instance.n_items() && self.load_var.len() == instance.n_constraints()
    }

    /// Clamps item means into the (possibly shrunk) level range of `instance`.
    pub fn fit_to(&mut self, instance: &Instance) -> Result<()> {
        if !self.matches(instance) {
            return Err(Error::StateMismatch(format!(
                "GAMP state has {} items and {} constraints",
                self.mean.len(),
                self.load_var.len()
            )));
        }
        for (m, &c) in self.mean.iter_mut().zip(instance.max_counts()) {
            *m = m.min(c as f64);
        }
        Ok(())
    }

    fn update_constraints(&mut self, inst: &Instance, opts: &IterOpts) -> usize {
        let mut clamps = 0;
        for mu in 0..inst.n_constraints() {
            let row = inst.row(mu);
            let mut v = 0.0;
            let mut load = 0.0;
            for ((w, m), chi) in row.iter().zip(&self.mean).zip(&self.var) {
                v += w * w * chi;
                load += w * m;
            }
            if !(v >= opts.v_floor) {
                v = opts.v_floor;
                clamps += 1;
            }
            self.load_var[mu] = v;
            let arg = (load - inst.capacities()[mu]) / v.sqrt() - self.slope[mu];
            let (b, a) = lnh_first_and_curvature(arg);
            self.slope[mu] = b;
            self.stiffness[mu] = a;
        }
        clamps
    }

    fn item_coefficients(&self, weights: &Weights, k: usize, i: usize) -> (f64, f64) {
        let col = &weights.by_item[i * k..(i + 1) * k];
        let mut a = 0.0;
        let mut h = 0.0;
        for (mu, &w) in col.iter().enumerate() {
            let v = self.load_var[mu];
            a += w * w / v * self.stiffness[mu];
            h += w / v.sqrt() * self.slope[mu];
        }
        (a, h + a * self.mean[i])
    }

    fn sweep(
        &mut self,
        inst: &Instance,
        weights: &Weights,
        opts: &IterOpts,
        gamma: f64,
        last_step: &mut [f64],
        sweep: usize,
    ) -> Result<(f64, f64, usize)> {
        let k = inst.n_constraints();
        let mut residual = 0.0f64;
        let mut turn = 0.0;
        for (i, &cap) in inst.max_counts().iter().enumerate() {
            let (a, b) = self.item_coefficients(weights, k, i);
            let mom = phi(a, b, cap);
            if !(mom.mean.is_finite() && mom.variance.is_finite()) {
                return Err(Error::NonFinite {
                    engine: "gamp",
                    sweep,
                    what: format!("moments of item {i} (a={a}, b={b})"),
                });
            }
            self.curvature[i] = a;
            self.field[i] = b;
            let m = (1.0 - gamma) * mom.mean + gamma * self.mean[i];
            let chi = (1.0 - gamma) * mom.variance + gamma * self.var[i];
            let step = m - self.mean[i];
            residual = residual.max(step.abs());
            turn += step * last_step[i];
            last_step[i] = step;
            self.mean[i] = m;
            self.var[i] = chi;
        }
        let clamps = self.update_constraints(inst, opts);
        if let Some(mu) = self.slope.iter().position(|b| !b.is_finite()) {
            return Err(Error::NonFinite {
                engine: "gamp",
                sweep,
                what: format!("B of constraint {mu}"),
            });
        }
        Ok((residual, turn, clamps))
    }

    fn marginals(&mut self, inst: &Instance, weights: &Weights) -> Marginals {
        let k = inst.n_constraints();
        let tables = inst
            .max_counts()
            .iter()
            .enumerate()
            .map(|(i, &cap)| {
                let (a, b) = self.item_coefficients(weights, k, i);
                self.curvature[i] = a;
                self.field[i] = b;
                let mut t = vec![0.0; cap as usize + 1];
                phi_table(a, b, &mut t);
                t
            })
            .collect();
        Marginals { tables }
    }
}

/// Runs the node-variable iteration: item moments from the discrete family
/// `∝ exp(−a_i x²/2 + b_i x)`, then constraint terms from derivatives of
/// `ln H` at the Onsager-corrected load. Converged when `max |Δm_i| < tol`.
pub fn gamp_run(
    instance: &Instance,
    opts: &IterOpts,
    init: Option<GampState>,
) -> Result<(Marginals, GampState, Diagnostics)> {
    opts.validate()?;
    let mut state = match init {
        Some(s) if s.matches(instance) => s,
        Some(_) => {
            return Err(Error::StateMismatch(
                "GAMP state dimensions differ from the instance".into(),
            ))
        }
        None => GampState::uniform(instance, opts),
    };
    let weights = Weights::new(instance);
    let mut diag = Diagnostics::default();
    let mut damping = Damping::new(opts, state.damping);
    let mut last_step = vec![0.0; instance.n_items()];
    for sweep in 1..=opts.max_sweeps {
        let (residual, turn, clamps) = state.sweep(
            instance,
            &weights,
            opts,
            damping.gamma,
            &mut last_step,
            sweep,
        )?;
        diag.sweeps = sweep;
        diag.residual = residual;
        diag.v_clamps += clamps;
        if residual < opts.tol {
            diag.converged = true;
            break;
        }
        damping.observe(sweep, residual, turn < 0.0);
    }
    state.damping = damping.gamma;
    diag.damping = damping.gamma;
    let marginals = state.marginals(instance, &weights);
    Ok((marginals, state, diag))
}
