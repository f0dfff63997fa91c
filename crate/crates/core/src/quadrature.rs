//! Tensor-product Gauss–Legendre quadrature over rectangles, split at
//! declared breakpoints so that piecewise-smooth integrands are integrated
//! piece by piece.

use crate::error::Result;
use crate::geometry::{multi_indices, Rect};
use crate::sum::CompensatedSum;

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Nodes and weights of the composite 5-point rule on `[lo, hi]`, with
/// `pieces` equal panels between consecutive cut points.
pub fn composite_rule(lo: f64, hi: f64, cuts: &[f64], pieces: usize) -> Vec<(f64, f64)> {
    let mut ends = vec![lo];
    ends.extend(cuts.iter().copied().filter(|&c| lo < c && c < hi));
    ends.push(hi);
    let mut out = Vec::new();
    for w in ends.windows(2) {
        let step = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let a = w[0] + p as f64 * step;
            let half = 0.5 * step;
            let mid = a + half;
            out.extend(GL5_NODES.iter().zip(&GL5_WEIGHTS).map(|(t, wt)| (mid + half * t, half * wt)));
        }
    }
    out
}

/// `∫_rect g` with a tensor product of composite rules; `cuts[i]` lists the
/// breakpoints of axis `i` (points outside the rectangle are ignored).
pub fn integrate<G>(g: G, rect: &Rect, cuts: &[Vec<f64>], pieces: usize) -> Result<f64>
where
    G: Fn(&[f64]) -> Result<f64>,
{
    if rect.is_degenerate() {
        return Ok(0.0);
    }
    let rules: Vec<Vec<(f64, f64)>> = (0..rect.dim())
        .map(|i| {
            let axis_cuts = cuts.get(i).map_or(&[][..], |c| c.as_slice());
            composite_rule(rect.lo()[i], rect.hi()[i], axis_cuts, pieces)
        })
        .collect();
    let shape: Vec<usize> = rules.iter().map(Vec::len).collect();
    let mut acc = CompensatedSum::new();
    let mut point = vec![0.0; rect.dim()];
    for idx in multi_indices(&shape) {
        let mut w = 1.0;
        for (axis, &k) in idx.iter().enumerate() {
            let (x, wt) = rules[axis][k];
            point[axis] = x;
            w *= wt;
        }
        acc.add(w * g(&point)?);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let s: f64 = GL5_WEIGHTS.iter().sum();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_degree_nine() {
        let r = Rect::new(vec![0.0], vec![1.0]).unwrap();
        let v = integrate(|x| Ok(x[0].powi(9)), &r, &[], 1).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn breakpoints_make_indicators_exact() {
        let r = Rect::unit(2).unwrap();
        let ind = |x: &[f64]| Ok(if x[0] <= 0.5 && x[1] <= 0.5 { 1.0 } else { 0.0 });
        let v = integrate(ind, &r, &[vec![0.5], vec![0.5]], 1).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_polynomial() {
        let r = Rect::new(vec![0.0, 1.0], vec![2.0, 3.0]).unwrap();
        let v = integrate(|x| Ok(x[0] * x[1] * x[1]), &r, &[], 2).unwrap();
        // ∫x dx = 2, ∫y² dy = 26/3
        assert!((v - 52.0 / 3.0).abs() < 1e-12);
    }
}
