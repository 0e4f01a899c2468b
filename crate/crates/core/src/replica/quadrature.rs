//! Gauss-Hermite rules for the standard normal measure `Dz`.
//!
//! Roots of the orthonormal Hermite polynomials for the weight `e^{−x²}` are
//! isolated by a sign scan finer than their smallest spacing, polished by
//! bracketed Newton steps and mapped to `z = √2 x`. The recurrence is rescaled
//! on the fly so that rules with thousands of nodes do not overflow.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `(p_n(x), p_{n−1}(x), ln of the common scale)` of the orthonormal
/// recurrence, with `p_0 = π^{−1/4}`.
fn recurrence(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = x * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    (p1, p2, log_scale)
}

/// Root of `p_n` in `(lo, hi)` by Newton's method kept inside the bracket,
/// with the log of its weight for `e^{−x²}`.
fn refine(n: usize, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let dp_at = |p2: f64| (2.0 * n as f64).sqrt() * p2;
    let lo_sign = recurrence(n, lo).0.signum();
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (p1, p2, _) = recurrence(n, x);
        if p1 == 0.0 {
            break;
        }
        if p1.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - p1 / dp_at(p2);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= 1e-15 * x.abs().max(1.0);
        x = next;
        if done {
            break;
        }
    }
    let (_, p2, log_scale) = recurrence(n, x);
    (
        x,
        std::f64::consts::LN_2 - 2.0 * (dp_at(p2).abs().ln() + log_scale),
    )
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let edge = (2.0 * n as f64 + 1.0).sqrt();
        // all roots lie below `edge`; neighbours are at least π/edge apart
        let h = std::f64::consts::PI / (4.0 * edge);
        let floor = if n % 2 == 1 { 0.5 * h } else { 0.0 };
        let mut found: Vec<(f64, f64)> = Vec::with_capacity(n.div_ceil(2));
        let mut hi = edge + 1.0;
        let mut p_hi = recurrence(n, hi).0;
        while hi > floor {
            let lo = (hi - h).max(floor);
            let p_lo = recurrence(n, lo).0;
            if p_lo.signum() != p_hi.signum() {
                found.push(refine(n, lo, hi));
            }
            hi = lo;
            p_hi = p_lo;
        }
        if n % 2 == 1 {
            found.push(refine(n, -h, h));
        }
        assert_eq!(
            found.len(),
            n.div_ceil(2),
            "root scan missed a root of H_{n}"
        );
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for (i, &(x, lw)) in found.iter().enumerate() {
            let z = std::f64::consts::SQRT_2 * x;
            let w = lw.exp() * inv_sqrt_pi;
            nodes[n - 1 - i] = z;
            nodes[i] = -z;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared rule of size `n`, built once per process.
    pub fn cached(n: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let mut map = CACHE.get_or_init(Default::default).lock().unwrap();
        map.entry(n)
            .or_insert_with(|| Arc::new(Self::new(n)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::log_gaussian_tail;
    use nalgebra::{DMatrix, SymmetricEigen};

    /// Golub-Welsch: eigen-decomposition of the Jacobi matrix of the
    /// probabilists' Hermite polynomials.
    fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
        let jacobi = DMatrix::from_fn(n, n, |r, c| {
            if r + 1 == c || c + 1 == r {
                (r.max(c) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    }

    fn double_factorial(k: u32) -> f64 {
        (1..=k).rev().step_by(2).map(|x| x as f64).product()
    }

    #[test]
    fn matches_golub_welsch() {
        for n in [1, 2, 3, 7, 20, 120, 240] {
            let r = GaussHermite::new(n);
            let (nodes, weights) = golub_welsch(n);
            for i in 0..n {
                assert!(
                    (r.nodes[i] - nodes[i]).abs() < 1e-11 * nodes[i].abs().max(1.0),
                    "n={n} i={i}"
                );
                // eigenvector components carry only absolute accuracy
                assert!(
                    (r.weights[i] - weights[i]).abs() < 1e-10 * weights[i] + 1e-17,
                    "n={n} i={i}"
                );
            }
        }
    }

    #[test]
    fn large_rules_are_sound() {
        for n in [120, 240, 480, 960, 1920, 3840] {
            let r = GaussHermite::new(n);
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12, "n={n}");
            assert!(r.nodes.windows(2).all(|w| w[1] > w[0]), "n={n}");
            assert!(r.weights.iter().all(|&w| w >= 0.0 && w.is_finite()));
            for k in 1..=10u32 {
                let m = r.integrate(|z| z.powi(2 * k as i32));
                let exact = double_factorial(2 * k - 1);
                assert!(((m - exact) / exact).abs() < 1e-10, "n={n}, E z^{}", 2 * k);
            }
        }
    }

    #[test]
    fn small_rules_by_hand() {
        let r = GaussHermite::new(2);
        assert!((r.nodes[1] - 1.0).abs() < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
        let r = GaussHermite::new(3);
        assert_eq!(r.nodes[1], 0.0);
        assert!((r.nodes[2] - 3f64.sqrt()).abs() < 1e-14);
        assert!((r.weights[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((r.weights[0] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_tail_average_by_trapezoid() {
        // E ln H(1 + 2z) on a fine grid over [−12, 12]
        let r = GaussHermite::new(120);
        let f = |z: f64| log_gaussian_tail(1.0 + 2.0 * z);
        let n = 200_000;
        let h = 24.0 / n as f64;
        let mut trap = 0.0;
        for j in 0..=n {
            let z = -12.0 + j as f64 * h;
            let wt = if j == 0 || j == n { 0.5 } else { 1.0 };
            trap += wt * f(z) * (-0.5 * z * z).exp();
        }
        trap *= h / (2.0 * std::f64::consts::PI).sqrt();
        assert!(
            (r.integrate(f) - trap).abs() < 1e-9,
            "{} vs {trap}",
            r.integrate(f)
        );
    }

    #[test]
    fn cache_returns_same_rule() {
        let a = GaussHermite::cached(17);
        let b = GaussHermite::cached(17);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(*a, GaussHermite::new(17));
    }
}
