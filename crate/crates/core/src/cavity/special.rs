//! Gaussian tail `H(x) = ∫_x^∞ Dz` and the derivatives of `ln H`.
//!
//! Below [`CF_SWITCH`] everything comes from `erfc`. Above it the Mills ratio
//! `R(u) = H(u)/φ(u)` is written as `1/(u + t)` with the continued fraction
//! `t = 1/(u + 2/(u + 3/(u + …)))`, which gives `ln H`, `B = −(u + t)` and
//! `A = (u + t)·t` without cancellation or underflow.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const CF_SWITCH: f64 = 8.0;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `t(u)` for `u ≥ CF_SWITCH`, modified Lentz evaluation.
fn mills_tail(u: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..500 {
        let a = if j == 1 { 1.0 } else { j as f64 };
        d = u + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = u + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// `H(x)`; underflows to zero beyond `x ≈ 38.5`.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn log_gaussian_tail(x: f64) -> f64 {
    if x >= CF_SWITCH {
        let t = mills_tail(x);
        -0.5 * x * x - LN_SQRT_2PI - (x + t).ln()
    } else if x < 0.0 {
        (-gaussian_tail(-x)).ln_1p()
    } else {
        gaussian_tail(x).ln()
    }
}

/// First derivative of `ln H` at `u`, written `B` in the GAMP updates.
pub fn lnh_d1(u: f64) -> f64 {
    if u >= CF_SWITCH {
        -(u + mills_tail(u))
    } else {
        -normal_pdf(u) / gaussian_tail(u)
    }
}

/// Second derivative of `ln H` at `u`. Always negative.
pub fn lnh_d2(u: f64) -> f64 {
    -lnh_curvature(u)
}

/// `A(u) = −(ln H)''(u) = B² + u·B`, strictly positive.
pub fn lnh_curvature(u: f64) -> f64 {
    lnh_first_and_curvature(u).1
}

/// `(B, A)` in one evaluation.
#[inline]
pub fn lnh_first_and_curvature(u: f64) -> (f64, f64) {
    if u >= CF_SWITCH {
        let t = mills_tail(u);
        (-(u + t), (u + t) * t)
    } else {
        let b = -normal_pdf(u) / gaussian_tail(u);
        (b, b * (b + u))
    }
}

const TABLE_LO: f64 = -10.0;
const TABLE_HI: f64 = 38.0;
const TABLE_STEPS_PER_UNIT: f64 = 32.0;

/// `H` by quintic Hermite interpolation of `r(u) = ln H(u) − ln φ(u)`, the
/// log Mills ratio, which is smooth and of moderate size on the whole
/// tabulated range. Nodes carry `r`, `r' = B + u` and `r'' = 1 − A`. Outside
/// `[−10, 38)` it defers to [`gaussian_tail`].
pub(crate) struct TailTable {
    /// Per interval, coefficients of the quintic in the local coordinate
    /// `s ∈ [0, 1)`, constant term first.
    coef: Vec<[f64; 6]>,
}

impl TailTable {
    pub fn get() -> &'static TailTable {
        static TABLE: std::sync::OnceLock<TailTable> = std::sync::OnceLock::new();
        TABLE.get_or_init(TailTable::build)
    }

    fn build() -> Self {
        let h = 1.0 / TABLE_STEPS_PER_UNIT;
        let intervals = ((TABLE_HI - TABLE_LO) * TABLE_STEPS_PER_UNIT).round() as usize;
        let node = |j: usize| {
            let u = TABLE_LO + j as f64 * h;
            let (b, a) = lnh_first_and_curvature(u);
            let r = log_gaussian_tail(u) + 0.5 * u * u + LN_SQRT_2PI;
            (r, h * (b + u), h * h * (1.0 - a))
        };
        let mut coef = Vec::with_capacity(intervals);
        let mut left = node(0);
        for j in 0..intervals {
            let right = node(j + 1);
            let ((p0, v0, a0), (p1, v1, a1)) = (left, right);
            coef.push([
                p0,
                v0,
                0.5 * a0,
                -10.0 * p0 - 6.0 * v0 - 1.5 * a0 + 10.0 * p1 - 4.0 * v1 + 0.5 * a1,
                15.0 * p0 + 8.0 * v0 + 1.5 * a0 - 15.0 * p1 + 7.0 * v1 - a1,
                -6.0 * p0 - 3.0 * v0 - 0.5 * a0 + 6.0 * p1 - 3.0 * v1 + 0.5 * a1,
            ]);
            left = right;
        }
        Self { coef }
    }

    #[inline]
    pub fn tail(&self, u: f64) -> f64 {
        if !(u >= TABLE_LO && u < TABLE_HI) {
            return gaussian_tail(u);
        }
        let t = (u - TABLE_LO) * TABLE_STEPS_PER_UNIT;
        let j = (t as usize).min(self.coef.len() - 1);
        let s = t - j as f64;
        let c = &self.coef[j];
        let r = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
        (r - 0.5 * u * u - LN_SQRT_2PI).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `(x, ln H(x), B(x), A(x))` from a 50-digit evaluation of
    /// `erfc(x/√2)/2` in mpmath.
    const REFERENCE: [(f64, f64, f64, f64); 19] = [
        (
            -38.0,
            LN_H_M38,
            -1.097221052007592958e-314,
            4.1694399976288532404e-313,
        ),
        (
            -20.0,
            LN_H_M20,
            -5.5209483621597631896e-88,
            1.1041896724319526379e-86,
        ),
        (
            -8.0,
            -6.2209605742717860585e-16,
            -5.0522710835368954309e-15,
            4.0418168668295188973e-14,
        ),
        (
            -5.0,
            -2.8665161296376359338e-7,
            -1.4867199409049057124e-6,
            7.4336019148607112465e-6,
        ),
        (
            -2.0,
            -0.023012909328963488465,
            -0.055247862678989959102,
            0.11354805168857644979,
        ),
        (
            -1.0,
            -0.17275377902344988953,
            -0.28759997093917836123,
            0.37031371422339459914,
        ),
        (
            -0.5,
            -0.36894641528865639307,
            -0.50916043383703348583,
            0.51382456430363289677,
        ),
        (
            0.0,
            -0.69314718055994530942,
            -0.79788456080286535588,
            0.63661977236758134308,
        ),
        (
            0.5,
            -1.1759117615936186089,
            -1.1410777703680644809,
            0.73151959284412105382,
        ),
        (
            1.0,
            -1.8410216450092635058,
            -1.5251352761609812091,
            0.80090233442965120845,
        ),
        (
            2.0,
            -3.7831843336820319488,
            -2.3732155328228408673,
            0.88572089958591874336,
        ),
        (
            5.0,
            -15.064998393988725736,
            -5.1865039671258421156,
            0.96730356538288777465,
        ),
        (
            7.9,
            -34.206228170981715976,
            -8.0228172462087806185,
            0.9853403210156722729,
        ),
        (
            8.0,
            -35.013437159914549896,
            -8.1213681122361126807,
            0.98567511655665908982,
        ),
        (
            8.1,
            -35.830502890801471824,
            -8.2199519010467492072,
            0.98599885704340061245,
        ),
        (
            12.0,
            -75.410673001568795939,
            -12.08221417525428433,
            0.99332927366415413567,
        ),
        (
            20.0,
            -203.91715537109726394,
            -20.049753068527850542,
            0.9975367383849478364,
        ),
        (
            30.0,
            -454.32124395634319711,
            -30.033259667433677037,
            0.998896228488109909,
        ),
        (
            38.0,
            -726.5572160188201301,
            -38.026279466575868988,
            0.99931034024653374113,
        ),
    ];

    // ln(1 − H(|x|)); a plain 50-digit log rounds these to zero
    const LN_H_M38: f64 = -2.8854283600687843084e-316;
    const LN_H_M20: f64 = -2.7536241186062336951e-89;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn matches_high_precision_reference() {
        for &(x, ln_h, b, a) in &REFERENCE {
            assert!(
                close(log_gaussian_tail(x), ln_h, 1e-12),
                "ln H({x}) = {}",
                log_gaussian_tail(x)
            );
            assert!(close(lnh_d1(x), b, 1e-12), "B({x}) = {}", lnh_d1(x));
            // A suffers one cancellation just below the switch
            assert!(
                close(lnh_curvature(x), a, 1e-11),
                "A({x}) = {}",
                lnh_curvature(x)
            );
        }
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            eps: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(
            f,
            a,
            b,
            fa,
            fm,
            fb,
            (b - a) / 6.0 * (fa + 4.0 * fm + fb),
            eps,
            50,
        )
    }

    #[test]
    fn tail_values() {
        assert_eq!(gaussian_tail(0.0), 0.5);
        for x in [0.5, 1.0, 2.0] {
            assert!((gaussian_tail(x) + gaussian_tail(-x) - 1.0).abs() < 1e-15);
        }
        let quad = adaptive_simpson(&normal_pdf, 1.0, 40.0, 1e-15);
        assert!((quad - 0.15865525393).abs() < 1e-11, "{quad}");
        assert!((gaussian_tail(1.0) - quad).abs() < 1e-13);
    }

    #[test]
    fn log_tail_finite_on_range() {
        let mut x = -38.0;
        while x <= 38.0 {
            let v = log_gaussian_tail(x);
            assert!(v.is_finite() && v <= 0.0, "ln H({x}) = {v}");
            x += 0.01;
        }
    }

    #[test]
    fn derivatives_at_zero_match_finite_differences() {
        let h = 1e-5;
        let d1 = (log_gaussian_tail(h) - log_gaussian_tail(-h)) / (2.0 * h);
        let d2 =
            (log_gaussian_tail(h) - 2.0 * log_gaussian_tail(0.0) + log_gaussian_tail(-h)) / (h * h);
        assert!((lnh_d1(0.0) - d1).abs() < 1e-8);
        assert!((lnh_d1(0.0) + 0.79788).abs() < 1e-5);
        assert!((lnh_curvature(0.0) + d2).abs() < 1e-5);
        assert!((lnh_curvature(0.0) - 0.63662).abs() < 1e-5);
    }

    #[test]
    fn curvature_identity() {
        for u in [-2.0, 0.7, 3.0] {
            let b = lnh_d1(u);
            assert!((lnh_curvature(u) - (b * b + u * b)).abs() < 1e-10);
            let h = 1e-4;
            let d2 = (log_gaussian_tail(u + h) - 2.0 * log_gaussian_tail(u)
                + log_gaussian_tail(u - h))
                / (h * h);
            assert!(
                (lnh_d2(u) - d2).abs() < 1e-6,
                "u={u}: {} vs {d2}",
                lnh_d2(u)
            );
        }
    }

    #[test]
    fn curvature_positive() {
        for u in -5..=5 {
            assert!(lnh_curvature(u as f64) > 0.0);
        }
        let mut u = -30.0;
        while u <= 30.0 {
            let (b, a) = lnh_first_and_curvature(u);
            assert!(a > 0.0 && a < 1.0, "A({u}) = {a}");
            assert!(b < 0.0);
            u += 0.05;
        }
    }

    #[test]
    fn tabulated_tail_matches_erfc() {
        let table = TailTable::get();
        let mut worst: f64 = 0.0;
        let mut u = -12.0;
        while u < 40.0 {
            let exact = gaussian_tail(u);
            let fast = table.tail(u);
            if exact > 1e-290 {
                let e = (fast - exact).abs() / exact;
                worst = worst.max(e);
            } else {
                // subnormal range, where erfc itself loses digits
                assert!((fast - exact).abs() < 1e-300);
            }
            u += 0.000_731;
        }
        // exp(−u²/2) at u ≈ 30 costs a few 1e-13 in either evaluation
        assert!(worst < 5e-13, "worst relative error {worst:e}");
        assert_eq!(table.tail(0.0), gaussian_tail(0.0));
    }

    #[test]
    fn continuous_across_switch() {
        let below = CF_SWITCH - 1e-12;
        assert!(close(
            log_gaussian_tail(below),
            log_gaussian_tail(CF_SWITCH),
            1e-12
        ));
        assert!(close(lnh_d1(below), lnh_d1(CF_SWITCH), 1e-12));
        assert!(close(lnh_curvature(below), lnh_curvature(CF_SWITCH), 1e-11));
    }
}
