use super::special::{log_gaussian_tail, TailTable};
use super::{log_sum_exp, log_table_moments, Damping, Diagnostics, IterOpts, Marginals, Schedule};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Below this `H` is evaluated in the log domain.
const LINEAR_TAIL_MIN: f64 = 1e-280;
/// Widest belief spread, in nats, that the linear cavity update accepts.
const LINEAR_SPREAD_MAX: f64 = 600.0;
/// The belief product is rescaled once its largest entry falls below this.
const RESCALE_BELOW: f64 = 1e-20;
/// Smallest rescaled product entry trusted; below it the belief is summed in logs.
const PRODUCT_MIN: f64 = 1e-280;

/// Edge messages of the factor graph.
///
/// Tables for item `i` occupy `[offsets[i], offsets[i] + K·L_i)` with
/// `L_i = x_i^max + 1`, one run of `L_i` entries per constraint. Per-edge
/// scalars are indexed `i·K + μ`. Item-to-factor tables are not stored: they
/// are the belief divided by the incoming factor message.
#[derive(Debug, Clone, PartialEq)]
pub struct BpState {
    n: usize,
    k: usize,
    lens: Vec<usize>,
    offsets: Vec<usize>,
    /// `M_{μ→i}(x)`
    factor_prob: Vec<f64>,
    /// Mean and variance of `M_{i→μ}`.
    item_mean: Vec<f64>,
    item_var: Vec<f64>,
    /// Gaussian summary `(Δ_{μ→i}, V_{μ→i})` of the other items' load.
    cavity_mean: Vec<f64>,
    cavity_var: Vec<f64>,
    /// `Σ_μ ln M_{μ→i}(x)`, the unnormalized log marginal.
    log_belief: Vec<f64>,
    /// Damping reached so far; a warm start resumes from it.
    damping: f64,
}

fn layout(max_counts: &[u32], k: usize) -> (Vec<usize>, Vec<usize>, usize) {
    let lens: Vec<usize> = max_counts.iter().map(|&c| c as usize + 1).collect();
    let mut offsets = Vec::with_capacity(lens.len());
    let mut total = 0;
    for &l in &lens {
        offsets.push(total);
        total += l * k;
    }
    (lens, offsets, total)
}

fn normalize_log(t: &mut [f64]) {
    let z = log_sum_exp(t);
    t.iter_mut().for_each(|v| *v -= z);
}

/// `ln M_{i→μ}` from the log belief and `ln M_{μ→i}`, floored at `ln_floor`.
fn cavity_table(belief: &[f64], incoming: &[f64], ln_floor: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(belief.iter().zip(incoming).map(|(b, f)| b - f));
    normalize_log(out);
    if out.iter().any(|&v| v < ln_floor) {
        out.iter_mut().for_each(|v| *v = v.max(ln_floor));
        normalize_log(out);
    }
}

impl BpState {
    /// Uniform tables over the `x_i^max + 1` levels.
    pub fn uniform(instance: &Instance) -> Self {
        let n = instance.n_items();
        let k = instance.n_constraints();
        let (lens, offsets, total) = layout(instance.max_counts(), k);
        let mut prob = vec![0.0; total];
        let mut item_mean = vec![0.0; n * k];
        let mut item_var = vec![0.0; n * k];
        let mut log_belief = Vec::with_capacity(lens.iter().sum());
        for i in 0..n {
            let l = lens[i] as f64;
            prob[offsets[i]..offsets[i] + k * lens[i]].fill(1.0 / l);
            item_mean[i * k..(i + 1) * k].fill((l - 1.0) / 2.0);
            item_var[i * k..(i + 1) * k].fill((l * l - 1.0) / 12.0);
            log_belief.extend(std::iter::repeat_n(-(k as f64) * l.ln(), lens[i]));
        }
        Self {
            n,
            k,
            lens,
            offsets,
            factor_prob: prob,
            item_mean,
            item_var,
            cavity_mean: vec![0.0; n * k],
            cavity_var: vec![0.0; n * k],
            log_belief,
            damping: 0.0,
        }
    }

    pub fn matches(&self, instance: &Instance) -> bool {
        self.n == instance.n_items()
            && self.k == instance.n_constraints()
            && self
                .lens
                .iter()
                .zip(instance.max_counts())
                .all(|(&l, &c)| l == c as usize + 1)
    }

    /// Adapts the state to an instance whose caps only shrank: tables of
    /// affected items are truncated to the remaining levels and renormalized.
    pub fn fit_to(&mut self, instance: &Instance) -> Result<()> {
        if self.n != instance.n_items() || self.k != instance.n_constraints() {
            return Err(Error::StateMismatch(format!(
                "state is {}x{}, instance is {}x{}",
                self.k,
                self.n,
                instance.n_constraints(),
                instance.n_items()
            )));
        }
        if self.matches(instance) {
            return Ok(());
        }
        let k = self.k;
        let (lens, offsets, total) = layout(instance.max_counts(), k);
        let mut f2i = Vec::with_capacity(total);
        let mut belief = Vec::with_capacity(lens.iter().sum());
        let (mut cavity, mut incoming) = (Vec::new(), Vec::new());
        let mut belief_off = 0;
        for i in 0..self.n {
            let (old_len, new_len) = (self.lens[i], lens[i]);
            if new_len > old_len {
                return Err(Error::StateMismatch(format!(
                    "item {i} grew from {old_len} to {new_len} levels"
                )));
            }
            let b = &self.log_belief[belief_off..belief_off + new_len];
            for mu in 0..k {
                let src = &self.factor_prob[self.offsets[i] + mu * old_len..][..new_len];
                let z: f64 = src.iter().sum();
                f2i.extend(src.iter().map(|p| p / z));
                incoming.clear();
                incoming.extend(src.iter().map(|p| p.ln()));
                cavity_table(b, &incoming, f64::NEG_INFINITY, &mut cavity);
                let (m, v) = log_table_moments(&cavity);
                self.item_mean[i * k + mu] = m;
                self.item_var[i * k + mu] = v;
            }
            belief.extend_from_slice(b);
            belief_off += old_len;
        }
        self.lens = lens;
        self.offsets = offsets;
        self.factor_prob = f2i;
        self.log_belief = belief;
        Ok(())
    }

    /// `ln M_{μ→i}(·)`
    pub fn factor_message(&self, mu: usize, i: usize) -> Vec<f64> {
        let l = self.lens[i];
        let s = self.offsets[i] + mu * l;
        self.factor_prob[s..s + l].iter().map(|p| p.ln()).collect()
    }

    /// `ln M_{i→μ}(·)`, rebuilt from the belief.
    pub fn item_message(&self, i: usize, mu: usize) -> Vec<f64> {
        let off: usize = self.lens[..i].iter().sum();
        let mut out = Vec::new();
        cavity_table(
            &self.log_belief[off..off + self.lens[i]],
            &self.factor_message(mu, i),
            f64::NEG_INFINITY,
            &mut out,
        );
        out
    }

    /// `(m_{i→μ}, χ_{i→μ})`
    pub fn item_moments(&self, i: usize, mu: usize) -> (f64, f64) {
        let e = i * self.k + mu;
        (self.item_mean[e], self.item_var[e])
    }

    /// `(Δ_{μ→i}, V_{μ→i})` from the latest sweep.
    pub fn cavity_moments(&self, mu: usize, i: usize) -> (f64, f64) {
        let e = i * self.k + mu;
        (self.cavity_mean[e], self.cavity_var[e])
    }

    pub fn marginals(&self) -> Marginals {
        let mut off = 0;
        let tables = self
            .lens
            .iter()
            .map(|&l| {
                let mut t = self.log_belief[off..off + l].to_vec();
                off += l;
                normalize_log(&mut t);
                t.iter().map(|v| v.exp()).collect()
            })
            .collect();
        Marginals { tables }
    }

    /// Every message table sums to one within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        let sums_to_one = |t: &[f64]| (t.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() <= tol;
        (0..self.n).all(|i| {
            (0..self.k).all(|mu| {
                sums_to_one(&self.factor_message(mu, i)) && sums_to_one(&self.item_message(i, mu))
            })
        })
    }

    fn sweep(
        &mut self,
        inst: &Instance,
        w_by_item: &[f64],
        opts: &IterOpts,
        gamma: f64,
        last_step: &mut [f64],
        sweep: usize,
    ) -> Result<(f64, f64, usize)> {
        let (n, k) = (self.n, self.k);
        let caps = inst.capacities();

        let mut load_mean = vec![0.0; k];
        let mut load_var = vec![0.0; k];
        for i in 0..n {
            for mu in 0..k {
                let e = i * k + mu;
                let w = w_by_item[e];
                load_mean[mu] += w * self.item_mean[e];
                load_var[mu] += w * w * self.item_var[e];
            }
        }

        let mut residual = 0.0f64;
        let mut turn = 0.0;
        let mut clamps = 0;
        let mut proposal = Vec::new();
        let seq = opts.schedule == Schedule::Sequential;
        let (mut scaled, mut cavity) = (Vec::new(), Vec::new());
        let mut seq_off = 0;
        let mut prev_mean = vec![0.0; k];
        let mut prev_var = vec![0.0; k];
        let tail = TailTable::get();
        for i in 0..n {
            let l = self.lens[i];
            prev_mean.copy_from_slice(&self.item_mean[i * k..(i + 1) * k]);
            prev_var.copy_from_slice(&self.item_var[i * k..(i + 1) * k]);
            for mu in 0..k {
                let e = i * k + mu;
                let w = w_by_item[e];
                let cav_mean = load_mean[mu] - w * self.item_mean[e];
                let mut cav_var = load_var[mu] - w * w * self.item_var[e];
                if !(cav_var >= opts.v_floor) {
                    if cav_var.is_nan() {
                        return Err(Error::NonFinite {
                            engine: "bp",
                            sweep,
                            what: format!("cavity variance of edge ({mu}, {i})"),
                        });
                    }
                    cav_var = opts.v_floor;
                    clamps += 1;
                }
                self.cavity_mean[e] = cav_mean;
                self.cavity_var[e] = cav_var;
                if l == 1 {
                    continue;
                }
                let sd = cav_var.sqrt();
                let shift = cav_mean - caps[mu];
                let arg = |x: usize| (w * x as f64 + shift) / sd;
                proposal.clear();
                // H(arg) falls with x, so level 0 carries the largest value
                let head = tail.tail(arg(0));
                if head >= LINEAR_TAIL_MIN {
                    proposal.push(head);
                    proposal.extend((1..l).map(|x| tail.tail(arg(x))));
                } else {
                    let mut top = f64::NEG_INFINITY;
                    for x in 0..l {
                        let v = log_gaussian_tail(arg(x));
                        if !v.is_finite() {
                            return Err(Error::NonFinite {
                                engine: "bp",
                                sweep,
                                what: format!("ln H({}) on edge ({mu}, {i})", arg(x)),
                            });
                        }
                        top = top.max(v);
                        proposal.push(v);
                    }
                    proposal.iter_mut().for_each(|v| *v = (*v - top).exp());
                }
                let z: f64 = proposal.iter().sum();
                if !(z > 0.0 && z.is_finite()) {
                    return Err(Error::NonFinite {
                        engine: "bp",
                        sweep,
                        what: format!("factor message on edge ({mu}, {i})"),
                    });
                }
                let s = self.offsets[i] + mu * l;
                let old = &self.factor_prob[s..s + l];
                let mut total = 0.0;
                for (new, &prev) in proposal.iter_mut().zip(old) {
                    *new = ((1.0 - gamma) * *new / z + gamma * prev).max(opts.h_floor);
                    total += *new;
                }
                for x in 0..l {
                    let p = proposal[x] / total;
                    let step = p - self.factor_prob[s + x];
                    residual = residual.max(step.abs());
                    turn += step * last_step[s + x];
                    last_step[s + x] = step;
                    self.factor_prob[s + x] = p;
                }
            }
            if seq {
                self.refresh_item(i, seq_off, opts.h_floor, &mut scaled, &mut cavity);
                seq_off += l;
                for mu in 0..k {
                    let e = i * k + mu;
                    let w = w_by_item[e];
                    load_mean[mu] += w * (self.item_mean[e] - prev_mean[mu]);
                    load_var[mu] += w * w * (self.item_var[e] - prev_var[mu]);
                }
            }
        }

        if !seq {
            let mut belief_off = 0;
            for i in 0..n {
                self.refresh_item(i, belief_off, opts.h_floor, &mut scaled, &mut cavity);
                belief_off += self.lens[i];
            }
        }
        Ok((residual, turn, clamps))
    }

    /// Rebuilds the belief of item `i` and the moments of its outgoing messages.
    fn refresh_item(
        &mut self,
        i: usize,
        belief_off: usize,
        h_floor: f64,
        scaled: &mut Vec<f64>,
        cavity: &mut Vec<f64>,
    ) {
        let (k, l) = (self.k, self.lens[i]);
        let block = &self.factor_prob[self.offsets[i]..self.offsets[i] + k * l];
        let belief = &mut self.log_belief[belief_off..belief_off + l];
        // running product, rescaled so that its largest entry stays near one
        scaled.clear();
        scaled.resize(l, 1.0);
        let mut log_scale = 0.0;
        let mut exact = true;
        for t in block.chunks_exact(l) {
            let mut top = 0.0f64;
            for (b, v) in scaled.iter_mut().zip(t) {
                *b *= v;
                top = top.max(*b);
            }
            if top < RESCALE_BELOW {
                log_scale += top.ln();
                scaled.iter_mut().for_each(|b| *b /= top);
            }
            exact &= scaled.iter().all(|&b| b >= PRODUCT_MIN);
        }
        if exact {
            for (b, v) in belief.iter_mut().zip(scaled.iter()) {
                *b = log_scale + v.ln();
            }
        } else {
            belief.fill(0.0);
            for t in block.chunks_exact(l) {
                for (b, v) in belief.iter_mut().zip(t) {
                    *b += v.ln();
                }
            }
        }
        if l == 1 {
            return;
        }
        let top = belief.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let linear = belief.iter().all(|b| top - b < LINEAR_SPREAD_MAX);
        scaled.clear();
        scaled.extend(belief.iter().map(|b| (b - top).exp()));
        for (mu, t) in block.chunks_exact(l).enumerate() {
            let mut moments = None;
            if linear {
                // M_{i→μ} ∝ belief / M_{μ→i}
                let (mut z, mut mean, mut second, mut least) = (0.0, 0.0, 0.0, f64::INFINITY);
                for (x, (b, f)) in scaled.iter().zip(t).enumerate() {
                    let p = b / f;
                    z += p;
                    mean += p * x as f64;
                    second += p * (x * x) as f64;
                    least = least.min(p);
                }
                if least >= h_floor * z && z.is_finite() {
                    let m = mean / z;
                    moments = Some((m, (second / z - m * m).max(0.0)));
                }
            }
            let (m, v) = moments.unwrap_or_else(|| {
                let incoming: Vec<f64> = t.iter().map(|p| p.ln()).collect();
                cavity_table(belief, &incoming, h_floor.ln(), cavity);
                log_table_moments(cavity)
            });
            self.item_mean[i * k + mu] = m;
            self.item_var[i * k + mu] = v;
        }
    }
}

/// Runs belief propagation to convergence (or `opts.max_sweeps`).
///
/// Each sweep recomputes the Gaussian load summaries from the current
/// item-to-factor moments, moves every factor-to-item table towards the
/// Gaussian tail, and rebuilds the item-to-factor moments from the product of
/// the other factors' messages. [`Schedule`] decides whether the summaries
/// follow each item as it is updated or stay frozen for the whole sweep.
pub fn bp_run(
    instance: &Instance,
    opts: &IterOpts,
    init: Option<BpState>,
) -> Result<(Marginals, BpState, Diagnostics)> {
    opts.validate()?;
    let mut state = match init {
        Some(s) if s.matches(instance) => s,
        Some(_) => {
            return Err(Error::StateMismatch(
                "BP state edge structure differs from the instance".into(),
            ))
        }
        None => BpState::uniform(instance),
    };
    let (n, k) = (instance.n_items(), instance.n_constraints());
    let mut w_by_item = vec![0.0; n * k];
    for mu in 0..k {
        for (i, &w) in instance.row(mu).iter().enumerate() {
            w_by_item[i * k + mu] = w;
        }
    }
    let mut diag = Diagnostics::default();
    let mut damping = Damping::new(opts, state.damping);
    let mut last_step = vec![0.0; state.factor_prob.len()];
    for sweep in 1..=opts.max_sweeps {
        let (residual, turn, clamps) = state.sweep(
            instance,
            &w_by_item,
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
    Ok((state.marginals(), state, diag))
}
