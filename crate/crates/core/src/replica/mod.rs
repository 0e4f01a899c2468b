//! Replica-symmetric entropy `S(M)` of the random ensemble and the profit
//! limit `M_opt` where it vanishes.
//!
//! The bracketed functional is
//!
//! ```text
//! Φ = α ∫Dz ln H(f(z)) + ∫Dz ln Σ_x g(x, z) + ½Q̂Q + ½q̂q − (C/w)M̂
//! f(z)    = (wM/σ + √q z) / √(Q − q)
//! g(x, z) = exp(−(Q̂ + q̂)x²/2 + (√q̂ z + M̂)x)
//! ```
//!
//! and `S` is its value at a stationary point. With `D = Q − q`,
//! `B = (ln H)'` and `⟨·⟩` the average under `g(·, z)`, setting the partial
//! derivatives to zero gives
//!
//! ```text
//! Q̂ = (α/D) ∫Dz f B(f)                    Q = ∫Dz ⟨x²⟩
//! q̂ = −α ∫Dz B(f) (z/√(qD) + f/D)         q = ∫Dz (⟨x²⟩ − z⟨x⟩/√q̂)
//! ∫Dz ⟨x⟩ = C/w  (fixes M̂)
//! ```
//!
//! Gaussian integration by parts turns the `q̂` and `q` equations into
//! `(α/D)∫B²` and `∫⟨x⟩²`, but a finite rule obeys that identity only up to
//! its own error, so the forms above are used: they are the exact stationarity
//! conditions of the discretized functional. They are iterated as a damped map
//! on `(Q, q)`, and every returned point is checked against a finite-difference
//! gradient of `Φ` itself.

mod quadrature;

pub use quadrature::GaussHermite;

use std::sync::Arc;

use crate::cavity::{lnh_d1, log_gaussian_tail, phi};
use crate::error::{Error, Result};
use crate::instance::EnsembleParams;

/// Replica-symmetric order parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSOrder {
    pub q_big: f64,
    pub q: f64,
    pub q_hat_big: f64,
    pub q_hat: f64,
    pub m_hat: f64,
}

impl RSOrder {
    /// Starting point near the unconstrained maximum: `q = (C/w)² + 0.05`,
    /// `Q = q + 0.1`, `Q̂ = q̂ = 0.1`, `M̂ = 0`.
    pub fn initial(params: &EnsembleParams) -> Self {
        let c = params.fill_ratio();
        let q = c * c + 0.05;
        Self {
            q_big: q + 0.1,
            q,
            q_hat_big: 0.1,
            q_hat: 0.1,
            m_hat: 0.0,
        }
    }

    fn to_array(self) -> [f64; 5] {
        [self.q_big, self.q, self.q_hat_big, self.q_hat, self.m_hat]
    }

    fn from_array(v: [f64; 5]) -> Self {
        Self {
            q_big: v[0],
            q: v[1],
            q_hat_big: v[2],
            q_hat: v[3],
            m_hat: v[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyPoint {
    pub m: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub order: RSOrder,
    /// Largest component of the finite-difference gradient of `Φ` at `order`.
    pub residual: f64,
    /// Size of the Gauss-Hermite rule the point was solved with.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryResult {
    pub alpha: f64,
    pub x_max: u32,
    pub m_opt: f64,
    /// Grid points up to the first non-positive entropy, plus the root itself,
    /// ordered by `m`.
    pub curve: Vec<EntropyPoint>,
}

impl TheoryResult {
    pub fn at_opt(&self) -> &EntropyPoint {
        self.curve
            .iter()
            .find(|p| p.m == self.m_opt)
            .expect("root is part of the curve")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsOpts {
    /// Base Gauss-Hermite rule size.
    pub nodes: usize,
    /// Double the rule (up to `max_nodes`) while the integrands are too
    /// sharp for it; see [`required_nodes`].
    pub adaptive_nodes: bool,
    pub max_nodes: usize,
    /// Fixed point is accepted when `max(|ΔQ|, |Δq|) < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Acceptance bound on the finite-difference gradient.
    pub grad_tol: f64,
}

impl Default for RsOpts {
    fn default() -> Self {
        Self {
            nodes: 120,
            adaptive_nodes: true,
            max_nodes: 3840,
            tol: 1e-12,
            max_iter: 20_000,
            damping: 0.5,
            grad_tol: 1e-5,
        }
    }
}

const GRAD_STEP: f64 = 1e-6;
const MIN_GAP: f64 = 1e-14;
/// Past the end of the branch the map drives `q̂` up without bound; no rule
/// this module builds resolves anything near this value.
const Q_HAT_RUNAWAY: f64 = 1e5;
const NEWTON_AFTER: usize = 40;
const MIN_SCAN_STEP: f64 = 1e-6;

fn check_params(alpha: f64, params: &EnsembleParams) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::param(
            "alpha",
            format!("{alpha} must be finite and non-negative"),
        ));
    }
    for (name, v) in [
        ("mean_weight", params.mean_weight),
        ("weight_variance", params.weight_variance),
        ("capacity_ratio", params.capacity_ratio),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(
                name,
                format!("{v} must be a finite positive real"),
            ));
        }
    }
    if params.x_max == 0 {
        return Err(Error::param("x_max", "must be positive"));
    }
    let c = params.fill_ratio();
    if c >= params.x_max as f64 {
        return Err(Error::param(
            "capacity_ratio",
            format!("C/w = {c} leaves no room below x_max = {}", params.x_max),
        ));
    }
    Ok(())
}

/// One `(M, α)` slice of the functional.
struct Model {
    rule: Arc<GaussHermite>,
    alpha: f64,
    x_max: u32,
    fill: f64,
    drift: f64,
    m: f64,
}

impl Model {
    fn new(m: f64, alpha: f64, params: &EnsembleParams, nodes: usize) -> Self {
        Self {
            rule: GaussHermite::cached(nodes),
            alpha,
            x_max: params.x_max,
            fill: params.fill_ratio(),
            drift: params.mean_weight * m / params.sigma(),
            m,
        }
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Saddle {
            m: self.m,
            reason: reason.into(),
        }
    }

    fn functional(&self, o: &RSOrder) -> f64 {
        let gap = o.q_big - o.q;
        if !(gap > 0.0 && o.q >= 0.0 && o.q_hat >= 0.0) {
            return f64::NAN;
        }
        let energy = if self.alpha == 0.0 {
            0.0
        } else {
            let (sq, sd) = (o.q.sqrt(), gap.sqrt());
            self.alpha
                * self
                    .rule
                    .integrate(|z| log_gaussian_tail((self.drift + sq * z) / sd))
        };
        let a = o.q_hat_big + o.q_hat;
        let s = o.q_hat.sqrt();
        let entropic = self
            .rule
            .integrate(|z| phi(a, s * z + o.m_hat, self.x_max).value);
        energy + entropic + 0.5 * (o.q_hat_big * o.q_big + o.q_hat * o.q) - self.fill * o.m_hat
    }

    /// `(Q̂, q̂)` from `(Q, q)`.
    fn conjugates(&self, q_big: f64, q: f64) -> Result<(f64, f64)> {
        let gap = q_big - q;
        if !(gap >= MIN_GAP) {
            return Err(self.fail(format!("degenerate saddle, Q − q = {gap:e}")));
        }
        if self.alpha == 0.0 {
            return Ok((0.0, 0.0));
        }
        let (sq, sd) = (q.max(0.0).sqrt(), gap.sqrt());
        let mut fb = 0.0;
        let mut zb = 0.0;
        let mut bb = 0.0;
        for (&z, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let f = (self.drift + sq * z) / sd;
            let b = lnh_d1(f);
            fb += w * f * b;
            zb += w * z * b;
            bb += w * b * b;
        }
        let q_hat_big = self.alpha / gap * fb;
        let q_hat = if sq > 0.0 {
            -self.alpha * (zb / (sq * sd) + fb / gap)
        } else {
            self.alpha / gap * bb
        };
        Ok((q_hat_big, q_hat.max(0.0)))
    }

    /// `(∫⟨x⟩, ∫⟨x²⟩, q-equation right side, ∫Var x)` under `g`.
    fn moments(&self, a: f64, q_hat: f64, m_hat: f64) -> [f64; 4] {
        let s = q_hat.sqrt();
        let mut out = [0.0; 4];
        let mut z_mean = 0.0;
        let mut mean_sq = 0.0;
        for (&z, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let p = phi(a, s * z + m_hat, self.x_max);
            out[0] += w * p.mean;
            out[1] += w * (p.variance + p.mean * p.mean);
            out[3] += w * p.variance;
            z_mean += w * z * p.mean;
            mean_sq += w * p.mean * p.mean;
        }
        // below this the division loses more than it gains over the
        // integrated-by-parts form
        out[2] = if q_hat > 1e-10 {
            out[1] - z_mean / s
        } else {
            mean_sq
        };
        out
    }

    /// `M̂` with `∫⟨x⟩ = C/w`; the left side is increasing in `M̂`.
    fn solve_m_hat(&self, a: f64, q_hat: f64, guess: f64) -> Result<(f64, [f64; 4])> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut x = if guess.is_finite() { guess } else { 0.0 };
        for _ in 0..300 {
            let mom = self.moments(a, q_hat, x);
            let h = mom[0] - self.fill;
            if h.abs() < 1e-14 {
                return Ok((x, mom));
            }
            if h < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - h / mom[3];
            if !next.is_finite() || (next - x).abs() > 4.0 {
                next = x - 4.0 * h.signum();
            }
            if next <= lo || next >= hi {
                next = if lo.is_finite() && hi.is_finite() {
                    0.5 * (lo + hi)
                } else if lo.is_finite() {
                    lo + 4.0
                } else {
                    hi - 4.0
                };
            }
            if lo.is_finite() && hi.is_finite() && hi - lo < 1e-15 * (1.0 + x.abs()) {
                return Ok((x, mom));
            }
            x = next;
        }
        Err(self.fail(format!("mean condition unsolved for a = {a}, q̂ = {q_hat}")))
    }

    /// Full order at `(Q, q)` with conjugates and `M̂` on their saddle branches,
    /// together with the image `(Q', q')`.
    fn step(&self, q_big: f64, q: f64, m_hat_guess: f64) -> Result<(RSOrder, f64, f64)> {
        let (q_hat_big, q_hat) = self.conjugates(q_big, q)?;
        let a = q_hat_big + q_hat;
        let (m_hat, mom) = self.solve_m_hat(a, q_hat, m_hat_guess)?;
        let order = RSOrder {
            q_big,
            q,
            q_hat_big,
            q_hat,
            m_hat,
        };
        Ok((order, mom[1], mom[2]))
    }

    /// Damped map on `(Q, q)`; hands over to Newton once the map is slow,
    /// which happens near the end of the branch where its slope tends to 1.
    fn solve(&self, start: RSOrder, opts: &RsOpts) -> Result<RSOrder> {
        let (mut q_big, mut q, mut m_hat) = (start.q_big, start.q, start.m_hat);
        for iter in 1..=opts.max_iter {
            let (order, nb, nq) = self.step(q_big, q, m_hat)?;
            m_hat = order.m_hat;
            let delta = (nb - q_big).abs().max((nq - q).abs());
            if !delta.is_finite() {
                return Err(self.fail("map produced a non-finite order parameter"));
            }
            if order.q_hat > Q_HAT_RUNAWAY {
                return Err(self.fail(format!("q̂ = {:e} is running away", order.q_hat)));
            }
            if delta < opts.tol {
                return Ok(self.step(nb, nq, m_hat)?.0);
            }
            if iter == NEWTON_AFTER {
                if let Ok(o) = self.newton(order, opts) {
                    return Ok(o);
                }
            }
            q_big = (1.0 - opts.damping) * nb + opts.damping * q_big;
            q = (1.0 - opts.damping) * nq + opts.damping * q;
        }
        Err(self.fail(format!("no convergence in {} iterations", opts.max_iter)))
    }

    /// Newton on `T(Q, q) − (Q, q)` with a forward-difference Jacobian.
    fn newton(&self, start: RSOrder, opts: &RsOpts) -> Result<RSOrder> {
        let residual = |qb: f64, q: f64, mh: f64| -> Result<([f64; 2], f64)> {
            let (o, nb, nq) = self.step(qb, q, mh)?;
            Ok(([nb - qb, nq - q], o.m_hat))
        };
        let (mut qb, mut q, mut mh) = (start.q_big, start.q, start.m_hat);
        let (mut g, m0) = residual(qb, q, mh)?;
        mh = m0;
        for _ in 0..200 {
            let norm = g[0].abs().max(g[1].abs());
            if norm < opts.tol {
                return Ok(self.step(qb, q, mh)?.0);
            }
            let h = 1e-7;
            let (g_b, _) = residual(qb + h, q, mh)?;
            let (g_q, _) = residual(qb, q + h, mh)?;
            let j = [
                [(g_b[0] - g[0]) / h, (g_q[0] - g[0]) / h],
                [(g_b[1] - g[1]) / h, (g_q[1] - g[1]) / h],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !(det.abs() > 1e-300) {
                break;
            }
            let dqb = -(j[1][1] * g[0] - j[0][1] * g[1]) / det;
            let dq = -(-j[1][0] * g[0] + j[0][0] * g[1]) / det;
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-6 {
                let (nb, nq) = (qb + t * dqb, q + t * dq);
                if nq >= 0.0 && nb - nq >= MIN_GAP {
                    if let Ok((ng, nm)) = residual(nb, nq, mh) {
                        if ng[0].abs().max(ng[1].abs()) < norm {
                            (qb, q, mh, g) = (nb, nq, nm, ng);
                            accepted = true;
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Err(self.fail("Newton iteration stalled"))
    }

    /// Central differences of `Φ` in `(Q, q, Q̂, q̂, M̂)`; second-order
    /// one-sided differences where a coordinate sits at its lower bound.
    fn gradient(&self, o: &RSOrder) -> [f64; 5] {
        let h = GRAD_STEP;
        let base = o.to_array();
        let f0 = self.functional(o);
        let eval = |i: usize, dx: f64| {
            let mut v = base;
            v[i] += dx;
            self.functional(&RSOrder::from_array(v))
        };
        let mut g = [0.0; 5];
        for (i, gi) in g.iter_mut().enumerate() {
            let at_floor = match i {
                1 => base[1] < h || base[0] - base[1] < 2.0 * h,
                3 => base[3] < h,
                _ => false,
            };
            *gi = if at_floor {
                (-3.0 * f0 + 4.0 * eval(i, h) - eval(i, 2.0 * h)) / (2.0 * h)
            } else {
                (eval(i, h) - eval(i, -h)) / (2.0 * h)
            };
        }
        g
    }

    fn point(&self, order: RSOrder) -> EntropyPoint {
        let residual = self
            .gradient(&order)
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()));
        EntropyPoint {
            m: self.m,
            alpha: self.alpha,
            entropy: self.functional(&order),
            order,
            residual,
            nodes: self.rule.len(),
        }
    }
}

/// Smallest `base·2^k ≤ cap` that resolves the integrands at `order`.
///
/// A Gauss-Hermite rule with `n` nodes is spaced about `π/√n` near the
/// origin, and the error on a function analytic in a strip of half-width `d`
/// behaves like `exp(−2π d √n / π)`. The entropic integrand has singularities
/// at distance `π/√q̂` in `z`, the energetic one at about `2.8 √((Q − q)/q)`.
/// Asking for `n ≥ 20 s` with `s = max(q̂, 1.3 q/(Q − q))` puts the error
/// near `e^{−28}`.
pub fn required_nodes(order: &RSOrder, base: usize, cap: usize) -> usize {
    let gap = order.q_big - order.q;
    let sharp = order.q_hat.max(1.3 * order.q / gap);
    let need = 20.0 * sharp;
    let mut n = base.max(1);
    while (n as f64) < need && n * 2 <= cap {
        n *= 2;
    }
    n
}

/// Value of the bracketed functional at an arbitrary order.
pub fn rs_functional(
    m: f64,
    alpha: f64,
    params: &EnsembleParams,
    order: &RSOrder,
    nodes: usize,
) -> f64 {
    Model::new(m, alpha, params, nodes).functional(order)
}

/// Finite-difference gradient of the functional, step `1e-6`.
pub fn stationarity_gradient(
    m: f64,
    alpha: f64,
    params: &EnsembleParams,
    order: &RSOrder,
    nodes: usize,
) -> [f64; 5] {
    Model::new(m, alpha, params, nodes).gradient(order)
}

pub fn rs_entropy(
    m: f64,
    alpha: f64,
    params: &EnsembleParams,
    init: Option<RSOrder>,
) -> Result<EntropyPoint> {
    rs_entropy_with(m, alpha, params, init, &RsOpts::default())
}

/// Stationary point of the functional at `(M, α)`. `params.alpha` is ignored;
/// `params` supplies `w`, `σ²`, `C` and `x_max`.
pub fn rs_entropy_with(
    m: f64,
    alpha: f64,
    params: &EnsembleParams,
    init: Option<RSOrder>,
    opts: &RsOpts,
) -> Result<EntropyPoint> {
    check_params(alpha, params)?;
    if !m.is_finite() {
        return Err(Error::param("m", format!("{m} is not finite")));
    }
    if opts.nodes == 0 || !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::param(
            "rs_opts",
            "need nodes ≥ 1 and damping in [0, 1)",
        ));
    }
    let fresh = RSOrder::initial(params);
    let mut start = match init {
        Some(o) if o.q >= 0.0 && o.q_big - o.q >= MIN_GAP && o.m_hat.is_finite() => o,
        _ => fresh,
    };
    let mut nodes = opts.nodes;
    if opts.adaptive_nodes {
        nodes = nodes.max(required_nodes(&start, opts.nodes, opts.max_nodes));
    }
    loop {
        let model = Model::new(m, alpha, params, nodes);
        let order = match model.solve(start, opts) {
            Ok(o) => o,
            Err(e) if start != fresh => model.solve(fresh, opts).map_err(|_| e)?,
            Err(e) => return Err(e),
        };
        let need = required_nodes(&order, opts.nodes, opts.max_nodes);
        if opts.adaptive_nodes && need > nodes {
            nodes = need;
            start = order;
            continue;
        }
        let point = model.point(order);
        if !(point.residual < opts.grad_tol) || !point.entropy.is_finite() {
            return Err(model.fail(format!(
                "stationarity check failed, max |∇Φ| = {:e}",
                point.residual
            )));
        }
        return Ok(point);
    }
}

/// Entropy along `ms`, each point warm-started from the previous one.
pub fn entropy_curve(
    alpha: f64,
    params: &EnsembleParams,
    ms: &[f64],
    opts: &RsOpts,
) -> Result<Vec<EntropyPoint>> {
    let mut out: Vec<EntropyPoint> = Vec::with_capacity(ms.len());
    for &m in ms {
        let init = out.last().map(|p| p.order);
        out.push(solve_with_restart(m, alpha, params, init, opts)?);
    }
    Ok(out)
}

fn solve_with_restart(
    m: f64,
    alpha: f64,
    params: &EnsembleParams,
    init: Option<RSOrder>,
    opts: &RsOpts,
) -> Result<EntropyPoint> {
    match rs_entropy_with(m, alpha, params, init, opts) {
        Err(_) if init.is_some() => rs_entropy_with(m, alpha, params, None, opts),
        r => r,
    }
}

/// Change in `S` when the saddle at `point` is re-solved with a rule of twice
/// the size it used.
pub fn quadrature_shift(point: &EntropyPoint, params: &EnsembleParams) -> Result<f64> {
    let opts = RsOpts {
        nodes: 2 * point.nodes,
        adaptive_nodes: false,
        ..RsOpts::default()
    };
    let fine = rs_entropy_with(point.m, point.alpha, params, Some(point.order), &opts)?;
    Ok(fine.entropy - point.entropy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOpts {
    pub rs: RsOpts,
    /// Grid spacing of the bracketing scan.
    pub step: f64,
    /// Upper end of the scan; `5·x_max` when `None`.
    pub m_ub: Option<f64>,
    /// Root accepted when `|S| < root_tol`.
    pub root_tol: f64,
    /// Scan from `m_ub` down to 0 instead of upwards.
    pub descending: bool,
}

impl Default for TheoryOpts {
    fn default() -> Self {
        Self {
            rs: RsOpts::default(),
            step: 0.05,
            m_ub: None,
            root_tol: 1e-7,
            descending: false,
        }
    }
}

pub fn find_m_opt(alpha: f64, params: &EnsembleParams) -> Result<TheoryResult> {
    find_m_opt_with(alpha, params, &TheoryOpts::default())
}

/// Locates the zero of `S(M)` on the replica-symmetric branch.
///
/// The scan starts at `M = 0`. If `S(0) > 0` it walks up in steps of
/// `opts.step`; otherwise it walks down until `S > 0`. The branch ends where
/// the saddle becomes degenerate, so a failed point halves the step from the
/// last good one. Every point is warm-started from its neighbour. The bracket
/// is then refined by Illinois regula falsi until `|S| < root_tol`.
pub fn find_m_opt_with(
    alpha: f64,
    params: &EnsembleParams,
    opts: &TheoryOpts,
) -> Result<TheoryResult> {
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", format!("{alpha} must be positive")));
    }
    check_params(alpha, params)?;
    if !(opts.step > 0.0 && opts.root_tol > 0.0) {
        return Err(Error::param(
            "theory_opts",
            "step and root_tol must be positive",
        ));
    }
    let m_ub = opts.m_ub.unwrap_or(5.0 * params.x_max as f64);
    let mut scan = Scan {
        alpha,
        params,
        opts,
        m_ub,
        curve: Vec::new(),
    };
    let bracket = if opts.descending {
        scan.from_above()
    } else {
        scan.from_zero()
    };
    let Some((lo, hi)) = bracket? else {
        let mut curve = scan.curve;
        curve.sort_by(|a, b| a.m.total_cmp(&b.m));
        return Err(Error::NoSignChange { m_ub, curve });
    };
    let root = if hi.entropy.abs() < opts.root_tol {
        hi
    } else {
        scan.refine(lo, hi)?
    };
    let m_opt = root.m;
    let mut curve = scan.curve;
    curve.retain(|p| p.m != m_opt);
    curve.push(root);
    curve.sort_by(|a, b| a.m.total_cmp(&b.m));
    Ok(TheoryResult {
        alpha,
        x_max: params.x_max,
        m_opt,
        curve,
    })
}

struct Scan<'a> {
    alpha: f64,
    params: &'a EnsembleParams,
    opts: &'a TheoryOpts,
    m_ub: f64,
    curve: Vec<EntropyPoint>,
}

type Bracket = Option<(EntropyPoint, EntropyPoint)>;

impl Scan<'_> {
    /// `None` when the saddle does not exist at `m`; input errors propagate.
    fn eval(&mut self, m: f64, init: Option<RSOrder>, keep: bool) -> Result<Option<EntropyPoint>> {
        match solve_with_restart(m, self.alpha, self.params, init, &self.opts.rs) {
            Ok(p) => {
                if keep {
                    self.curve.push(p.clone());
                }
                Ok(Some(p))
            }
            Err(Error::Saddle { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn grid(&self, j: usize) -> f64 {
        j as f64 * self.opts.step
    }

    fn from_zero(&mut self) -> Result<Bracket> {
        let mut below = None;
        match self.eval(0.0, None, true)? {
            Some(p) if p.entropy > 0.0 => return self.ascend(p, None),
            Some(p) => below = Some(p),
            None => {}
        }
        for j in 1.. {
            let m = -self.grid(j);
            if m < -self.m_ub {
                return Ok(None);
            }
            let init = below.as_ref().map(|p: &EntropyPoint| p.order);
            match self.eval(m, init, true)? {
                Some(p) if p.entropy > 0.0 => return self.ascend(p, below),
                Some(p) => below = Some(p),
                None => {}
            }
        }
        unreachable!()
    }

    fn from_above(&mut self) -> Result<Bracket> {
        let mut above: Option<EntropyPoint> = None;
        for j in 0.. {
            let m = self.m_ub - self.grid(j);
            if m < -self.m_ub {
                return Ok(None);
            }
            let init = above.as_ref().map(|p| p.order);
            match self.eval(m, init, true)? {
                Some(p) if p.entropy > 0.0 => return self.ascend(p, above),
                Some(p) => above = Some(p),
                None => {}
            }
        }
        unreachable!()
    }

    /// Walks up from a point with `S > 0` until `S ≤ 0`. A known non-positive
    /// point one grid step above closes the bracket directly.
    fn ascend(&mut self, start: EntropyPoint, known: Option<EntropyPoint>) -> Result<Bracket> {
        if let Some(k) = known {
            if k.m - start.m <= self.opts.step * (1.0 + 1e-9) {
                return Ok(Some((start, k)));
            }
        }
        let mut cur = start;
        let mut step = self.opts.step;
        loop {
            let m = cur.m + step;
            if m > self.m_ub {
                return Ok(None);
            }
            match self.eval(m, Some(cur.order), true)? {
                Some(p) if p.entropy > 0.0 => cur = p,
                Some(p) => return Ok(Some((cur, p))),
                None => {
                    step *= 0.5;
                    if step < MIN_SCAN_STEP {
                        return Err(Error::Saddle {
                            m: cur.m,
                            reason: "replica-symmetric branch ends while S > 0".into(),
                        });
                    }
                }
            }
        }
    }

    /// Illinois iteration on a bracket `S(lo) > 0 ≥ S(hi)`. A point where the
    /// saddle is lost lies beyond the branch end and replaces `hi` by bisection.
    fn refine(&mut self, lo: EntropyPoint, hi: EntropyPoint) -> Result<EntropyPoint> {
        let (mut a, mut b) = (lo, hi);
        let (mut fa, mut fb) = (a.entropy, b.entropy);
        let mut b_m = b.m;
        let mut side = 0i8;
        for _ in 0..200 {
            let secant = (a.m * fb - b_m * fa) / (fb - fa);
            let m = if side == 2 || !(secant > a.m && secant < b_m) {
                0.5 * (a.m + b_m)
            } else {
                secant
            };
            let warm = if (m - a.m).abs() < (b.m - m).abs() {
                a.order
            } else {
                b.order
            };
            let Some(p) = self.eval(m, Some(warm), false)? else {
                b_m = m;
                side = 2;
                continue;
            };
            if p.entropy.abs() < self.opts.root_tol || b_m - a.m < 1e-14 {
                return Ok(p);
            }
            if p.entropy > 0.0 {
                fa = p.entropy;
                a = p;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            } else {
                fb = p.entropy;
                b_m = p.m;
                b = p;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            }
        }
        Err(Error::Saddle {
            m: 0.5 * (a.m + b_m),
            reason: "root refinement did not reach the tolerance".into(),
        })
    }
}

/// `U_opt = (C/w)·N + M_opt·√N`.
pub fn u_opt(n_items: usize, m_opt: f64, params: &EnsembleParams) -> Result<f64> {
    if n_items == 0 {
        return Err(Error::param("n_items", "must be positive"));
    }
    let n = n_items as f64;
    Ok(params.fill_ratio() * n + m_opt * n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults(x_max: u32) -> EnsembleParams {
        EnsembleParams {
            x_max,
            ..Default::default()
        }
    }

    fn binary_entropy(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    #[test]
    fn zero_alpha_is_binary_entropy() {
        for c_over_w in [0.2, 0.5, 0.8] {
            let params = EnsembleParams {
                capacity_ratio: 0.5 * c_over_w,
                ..defaults(1)
            };
            for m in [0.0, 0.7] {
                let p = rs_entropy(m, 0.0, &params, None).unwrap();
                assert!(
                    (p.entropy - binary_entropy(c_over_w)).abs() < 1e-10,
                    "{p:?}"
                );
                assert!((p.order.m_hat - (c_over_w / (1.0 - c_over_w)).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_alpha_multi_level_is_max_entropy() {
        // the maximum-entropy law on {0,1,2} with mean 0.5, solved by bisection
        let target = 0.5;
        let mean = |t: f64| {
            let z = 1.0 + t.exp() + (2.0 * t).exp();
            (t.exp() + 2.0 * (2.0 * t).exp()) / z
        };
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t: f64 = 0.5 * (lo + hi);
        let z = 1.0 + t.exp() + (2.0 * t).exp();
        let s = z.ln() - t * target;
        let p = rs_entropy(0.3, 0.0, &defaults(2), None).unwrap();
        assert!((p.entropy - s).abs() < 1e-10, "{} vs {s}", p.entropy);
    }

    #[test]
    fn entropy_decreases_with_m() {
        let params = defaults(1);
        let ms: Vec<f64> = (0..=10).map(|j| -1.0 + j as f64 * 0.1).collect();
        let curve = entropy_curve(0.5, &params, &ms, &RsOpts::default()).unwrap();
        assert!(curve[0].entropy > 0.0 && curve[0].entropy < std::f64::consts::LN_2);
        for w in curve.windows(2) {
            assert!(
                w[1].entropy < w[0].entropy,
                "{} then {}",
                w[0].entropy,
                w[1].entropy
            );
        }
        for p in &curve {
            let o = p.order;
            assert!(o.q_big >= o.q && o.q >= 0.0 && o.q_hat >= 0.0);
            assert!(o.q_big <= 1.0);
            assert!(p.residual < 1e-5);
        }
    }

    #[test]
    fn derivative_in_m_matches_envelope() {
        // dS/dM = α ∫Dz B(f) (w/σ)/√(Q − q) at fixed order
        let params = defaults(1);
        let (alpha, m, h) = (1.0, -0.3, 1e-5);
        let p = rs_entropy(m, alpha, &params, None).unwrap();
        let up = rs_entropy(m + h, alpha, &params, Some(p.order)).unwrap();
        let down = rs_entropy(m - h, alpha, &params, Some(p.order)).unwrap();
        let fd = (up.entropy - down.entropy) / (2.0 * h);
        let o = p.order;
        let gap = o.q_big - o.q;
        let rule = GaussHermite::new(120);
        let drift = params.mean_weight * m / params.sigma();
        let env = alpha
            * rule.integrate(|z| crate::cavity::lnh_d1((drift + o.q.sqrt() * z) / gap.sqrt()))
            * params.mean_weight
            / params.sigma()
            / gap.sqrt();
        assert!(env < 0.0);
        assert!((fd - env).abs() < 1e-6, "{fd} vs {env}");
    }

    #[test]
    fn mean_condition_holds_at_saddle() {
        let params = defaults(3);
        let p = rs_entropy(-0.3, 1.0, &params, None).unwrap();
        let o = p.order;
        let rule = GaussHermite::new(120);
        let a = o.q_hat_big + o.q_hat;
        let mean = rule.integrate(|z| phi(a, o.q_hat.sqrt() * z + o.m_hat, 3).mean);
        assert!((mean - params.fill_ratio()).abs() < 1e-10);
        assert!(o.q_big >= o.q && o.q_big <= 9.0);
    }

    #[test]
    fn stable_under_finer_quadrature() {
        let params = defaults(1);
        let p = rs_entropy(-0.3, 1.0, &params, None).unwrap();
        assert_eq!(p.nodes, 120);
        assert!(quadrature_shift(&p, &params).unwrap().abs() < 1e-8);
    }

    #[test]
    fn m_opt_root_and_bracket() {
        let params = defaults(1);
        let r = find_m_opt(1.0, &params).unwrap();
        // one constraint per item: even M = 0 is out of reach
        assert!(r.m_opt < 0.0);
        assert!(r.at_opt().entropy.abs() < 1e-7);
        for p in r.curve.iter().filter(|p| p.m < r.m_opt) {
            assert!(p.entropy > 0.0);
        }
    }

    #[test]
    fn sparse_constraints_give_positive_m_opt() {
        let r = find_m_opt(0.25, &defaults(1)).unwrap();
        assert!(r.m_opt > 0.0);
        assert!(r.curve.iter().any(|p| p.m == 0.0 && p.entropy > 0.0));
    }

    #[test]
    fn reversed_scan_agrees() {
        let params = defaults(1);
        let up = find_m_opt(1.0, &params).unwrap();
        let opts = TheoryOpts {
            descending: true,
            m_ub: Some(1.0),
            ..Default::default()
        };
        let down = find_m_opt_with(1.0, &params, &opts).unwrap();
        assert!(
            (up.m_opt - down.m_opt).abs() < 1e-5,
            "{} vs {}",
            up.m_opt,
            down.m_opt
        );
    }

    #[test]
    fn m_opt_ordering_in_alpha_and_xmax() {
        let one = find_m_opt(0.5, &defaults(1)).unwrap().m_opt;
        let two = find_m_opt(0.5, &defaults(2)).unwrap().m_opt;
        let dense = find_m_opt(2.0, &defaults(1)).unwrap().m_opt;
        assert!(two > one);
        assert!(dense < one);
    }

    #[test]
    fn u_opt_formula() {
        let params = EnsembleParams::default();
        assert_eq!(u_opt(100, 0.0, &params).unwrap(), 50.0);
        assert_eq!(u_opt(4, 1.5, &params).unwrap(), 2.0 + 3.0);
        assert!(u_opt(0, 1.0, &params).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let params = defaults(1);
        assert!(rs_entropy(f64::NAN, 1.0, &params, None).is_err());
        assert!(rs_entropy(0.0, -1.0, &params, None).is_err());
        let full = EnsembleParams {
            capacity_ratio: 0.6,
            ..params
        };
        assert!(rs_entropy(0.0, 1.0, &full, None).is_err());
        assert!(find_m_opt(0.0, &params).is_err());
    }
}
