//! `φ(a, b) = ln Σ_{x=0}^{x_max} exp(−a x²/2 + b x)` and its `b`-derivatives,
//! which are the mean and variance of the distribution `∝ exp(−a x²/2 + b x)`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiMoments {
    pub value: f64,
    /// `∂φ/∂b`
    pub mean: f64,
    /// `∂²φ/∂b²`
    pub variance: f64,
}

#[inline]
fn exponent(a: f64, b: f64, x: u32) -> f64 {
    let x = x as f64;
    -0.5 * a * x * x + b * x
}

pub fn phi(a: f64, b: f64, x_max: u32) -> PhiMoments {
    let top = (0..=x_max)
        .map(|x| exponent(a, b, x))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut s1 = 0.0;
    for x in 0..=x_max {
        let p = (exponent(a, b, x) - top).exp();
        z += p;
        s1 += p * x as f64;
    }
    let mean = s1 / z;
    let mut variance = 0.0;
    for x in 0..=x_max {
        let p = (exponent(a, b, x) - top).exp() / z;
        let d = x as f64 - mean;
        variance += p * d * d;
    }
    PhiMoments {
        value: top + z.ln(),
        mean,
        variance,
    }
}

/// Writes the normalized probabilities `∝ exp(−a x²/2 + b x)` into `out`.
pub fn phi_table(a: f64, b: f64, out: &mut [f64]) {
    let x_max = out.len() as u32 - 1;
    let top = (0..=x_max)
        .map(|x| exponent(a, b, x))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (x, o) in out.iter_mut().enumerate() {
        *o = (exponent(a, b, x as u32) - top).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}
