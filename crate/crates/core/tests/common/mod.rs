//! Test-side oracles that do not go through the library's increment code.

#![allow(dead_code)]

use hkvar::{FuncSource, Rect};
use rand::Rng;

/// `Σ c_k Π x_i^{e_ki}`.
#[derive(Debug, Clone)]
pub struct Poly {
    pub dim: usize,
    pub terms: Vec<(f64, Vec<i32>)>,
}

impl Poly {
    /// Positive coefficients and every exponent at least 1, so on a rect in
    /// the positive orthant every term has a positive increment and no
    /// cancellation can occur between terms.
    pub fn random_positive<R: Rng>(rng: &mut R, dim: usize) -> Self {
        let count = rng.gen_range(1..=4);
        let terms = (0..count)
            .map(|_| (rng.gen_range(0.1..3.0), (0..dim).map(|_| rng.gen_range(1..=3)).collect()))
            .collect();
        Poly { dim, terms }
    }

    /// Mixed signs and exponents including 0.
    pub fn random_mixed<R: Rng>(rng: &mut R, dim: usize) -> Self {
        let count = rng.gen_range(1..=5);
        let terms = (0..count)
            .map(|_| (rng.gen_range(-2.0..2.0), (0..dim).map(|_| rng.gen_range(0..=3)).collect()))
            .collect();
        Poly { dim, terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * x.iter().zip(e).map(|(v, &k)| v.powi(k)).product::<f64>())
            .sum()
    }

    /// Closed-form increment: a monomial's increment factorizes over axes.
    pub fn exact_increment(&self, rect: &Rect) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| {
                c * e
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| rect.hi()[i].powi(k) - rect.lo()[i].powi(k))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn source(&self) -> FuncSource {
        let p = self.clone();
        FuncSource::oracle(self.dim, move |x| p.eval(x))
    }
}

pub fn random_rect<R: Rng>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Rect {
    let mut a = Vec::with_capacity(dim);
    let mut b = Vec::with_capacity(dim);
    for _ in 0..dim {
        let u = rng.gen_range(lo..hi);
        let v = rng.gen_range(lo..hi);
        let (l, h) = if u < v { (u, v) } else { (v, u) };
        a.push(l);
        b.push(if h - l < 1e-3 { l + 1e-3 } else { h });
    }
    Rect::new(a, b).unwrap()
}

/// Sorted breakpoints of `[lo, hi]` with up to `max_cuts` random interior cuts.
pub fn random_axis<R: Rng>(rng: &mut R, lo: f64, hi: f64, max_cuts: usize) -> Vec<f64> {
    let mut axis = vec![lo, hi];
    for _ in 0..rng.gen_range(0..=max_cuts) {
        let c = rng.gen_range(lo..hi);
        if c > lo && c < hi {
            axis.push(c);
        }
    }
    axis.sort_by(f64::total_cmp);
    axis.dedup();
    axis
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
