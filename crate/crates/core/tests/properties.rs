mod common;

use common::{rel_diff, Poly};
use hkvar::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn poly(seed: u64, dim: usize, positive: bool) -> Poly {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    if positive {
        Poly::random_positive(&mut r, dim)
    } else {
        Poly::random_mixed(&mut r, dim)
    }
}

fn rect_strategy(dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Rect> {
    prop::collection::vec((lo..hi, 0.01..(hi - lo)), dim).prop_map(|sides| {
        let (a, b): (Vec<f64>, Vec<f64>) = sides.into_iter().map(|(a, w)| (a, a + w)).unzip();
        Rect::new(a, b).unwrap()
    })
}

fn dim_and_rect(max_dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = (usize, Rect)> {
    (1..=max_dim).prop_flat_map(move |n| (Just(n), rect_strategy(n, lo, hi)))
}

/// Per-axis fractions in (0, 1) used to place interior cuts.
fn cuts(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..0.99, 0..4), dim)
}

fn partition_from(rect: &Rect, fractions: &[Vec<f64>]) -> GridPartition {
    let axes = fractions
        .iter()
        .enumerate()
        .map(|(i, fr)| {
            let mut axis: Vec<f64> = fr.iter().map(|t| rect.lo()[i] + t * rect.side(i)).collect();
            axis.push(rect.lo()[i]);
            axis.push(rect.hi()[i]);
            axis.sort_by(f64::total_cmp);
            axis.dedup();
            axis
        })
        .collect();
    GridPartition::new(axes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corner_sum_matches_recursion_and_closed_form(seed in any::<u64>(), (n, rect) in dim_and_rect(5, 0.1, 2.0)) {
        let p = poly(seed, n, true);
        let f = p.source();
        let a = joint_increment(&f, &rect).unwrap();
        let b = joint_increment_recursive(&f, &rect).unwrap();
        prop_assert!(rel_diff(a, b) <= 1e-10);
        prop_assert!(rel_diff(a, p.exact_increment(&rect)) <= 1e-10);
    }

    #[test]
    fn degenerate_rects_are_exact_zero(seed in any::<u64>(), (n, rect) in dim_and_rect(6, -3.0, 3.0), axis in 0usize..6) {
        let f = poly(seed, n, false).source();
        let axis = axis % n;
        let mut hi = rect.hi().to_vec();
        hi[axis] = rect.lo()[axis];
        let flat = Rect::new(rect.lo().to_vec(), hi).unwrap();
        prop_assert_eq!(joint_increment(&f, &flat).unwrap().to_bits(), 0);
        prop_assert_eq!(joint_increment_recursive(&f, &flat).unwrap().to_bits(), 0);
    }

    #[test]
    fn increments_add_over_partitions(seed in any::<u64>(), (n, rect) in dim_and_rect(3, 0.1, 2.0), fr in cuts(3)) {
        let f = poly(seed, n, true).source();
        let part = partition_from(&rect, &fr[..n]);
        let cells: f64 = part.subrects().map(|c| joint_increment(&f, &c).unwrap()).sum();
        prop_assert!(rel_diff(cells, joint_increment(&f, &rect).unwrap()) <= 1e-10);
    }

    #[test]
    fn tilde_transform_keeps_increments(seed in any::<u64>(), (n, rect) in dim_and_rect(3, -1.0, 1.0), t in prop::collection::vec(0.0f64..1.0, 6)) {
        // f̃ differs from f by terms that are constant in at least one
        // coordinate, so increments over rects above the anchor agree.
        let f = poly(seed, n, false).source();
        let tilde = tilde_transform(&f, rect.lo()).unwrap();
        let lo: Vec<f64> = (0..n).map(|i| rect.lo()[i] + t[i] * 0.5 * rect.side(i)).collect();
        let hi: Vec<f64> = (0..n).map(|i| lo[i] + (0.1 + t[n + i % 3] * 0.4) * rect.side(i)).collect();
        let sub = Rect::new(lo, hi).unwrap();
        let a = joint_increment(&f, &sub).unwrap();
        let b = joint_increment(&tilde, &sub).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        let at_anchor = tilde.eval(rect.lo()).unwrap();
        prop_assert_eq!(at_anchor, 0.0);
    }

    #[test]
    fn refinement_never_decreases_partition_sums(seed in any::<u64>(), (n, rect) in dim_and_rect(3, -1.0, 1.0), a in cuts(3), b in cuts(3)) {
        let f = poly(seed, n, false).source();
        let coarse = partition_from(&rect, &a[..n]);
        let fine = coarse.merge(&partition_from(&rect, &b[..n])).unwrap();
        prop_assert!(fine.is_refinement_of(&coarse));
        let s0 = variation_on_partition(&f, &coarse).unwrap();
        let s1 = variation_on_partition(&f, &fine).unwrap();
        prop_assert!(s1 >= s0 - 1e-10 * s0.max(1.0), "{s1} < {s0}");
        prop_assert!(s0 >= joint_increment(&f, &rect).unwrap().abs() - 1e-12);
    }

    #[test]
    fn monotone_partition_sums_telescope(seed in any::<u64>(), (n, rect) in dim_and_rect(3, 0.1, 2.0), fr in cuts(3)) {
        let f = poly(seed, n, true).source();
        let part = partition_from(&rect, &fr[..n]);
        let s = variation_on_partition(&f, &part).unwrap();
        prop_assert!(rel_diff(s, joint_increment(&f, &rect).unwrap()) <= 1e-10);
    }

    #[test]
    fn total_variation_is_a_certified_lower_bound(seed in any::<u64>(), (n, rect) in dim_and_rect(2, -1.0, 1.0)) {
        let f = poly(seed, n, false).source();
        let policy = RefinePolicy { max_rounds: 5, ..RefinePolicy::default() };
        let v = total_variation(&f, &rect, &policy).unwrap();
        let on_final = variation_on_partition(&f, &v.partition).unwrap();
        prop_assert!(v.lower_bound <= on_final * (1.0 + 1e-12) + 1e-15);
        prop_assert!(v.trace.windows(2).all(|w| w[1].sum >= w[0].sum));
        prop_assert!(v.lower_bound >= joint_increment(&f, &rect).unwrap().abs() - 1e-12);
    }

    #[test]
    fn split_volumes_sum(seed in any::<u64>(), (n, rect) in dim_and_rect(4, -2.0, 2.0)) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..n).map(|i| rect.lo()[i] + rect.side(i) * rand::Rng::gen_range(&mut r, 0.1..0.9)).collect();
        let parts = rect.split_at(&p).unwrap();
        prop_assert_eq!(parts.len(), 1 << n);
        let total: f64 = parts.iter().map(Rect::volume).sum();
        prop_assert!(rel_diff(total, rect.volume()) <= 1e-12);
        prop_assert!(parts.iter().all(|q| rect.contains_rect(q)));
    }

    #[test]
    fn brackets_contain_plateau_values(c in -3.0f64..3.0, d in -3.0f64..3.0, x in 0.1f64..0.9, y in 0.1f64..0.9) {
        // Bilinear plus separable terms: every quotient equals c exactly.
        let f = FuncSource::oracle(2, move |p| c * p[0] * p[1] + d * (p[0] * p[0] + p[1].sin()));
        let sched = HSchedule::for_rect(&Rect::unit(2).unwrap());
        for q in QuadrantSign::all(2) {
            let est = joint_derivative(&f, &[x, y], &q, &sched).unwrap();
            let v = est.value.unwrap();
            prop_assert!((v - c).abs() <= 1e-6 * c.abs().max(1.0));
            if est.converged_on == Some(differentiation::ConvergedOn::Quotients) {
                prop_assert!(est.dini_lower <= v && v <= est.dini_upper);
            }
            prop_assert!(est.dini_lower <= est.dini_upper);
        }
    }

    #[test]
    fn jordan_parts_are_monotone(seed in any::<u64>(), k in 2usize..6) {
        let f = poly(seed, 2, false).source();
        let rect = Rect::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let grid = GridPartition::uniform(&rect, &[k, k]).unwrap();
        let policy = RefinePolicy { max_rounds: 4, ..RefinePolicy::default() };
        let pair = jordan_decompose(&f, &rect, &grid, &policy).unwrap();
        for s in [&pair.g, &pair.h] {
            let src = FuncSource::sampled(s.clone(), Interp::VertexOnly);
            prop_assert!(is_jointly_monotone(&src, s.partition(), 1e-9).unwrap().passed());
        }
        let fv = f.sample_on(pair.g.partition()).unwrap();
        for ((g, h), v) in pair.g.values().iter().zip(pair.h.values()).zip(fv.values()) {
            prop_assert!((g - h - v).abs() <= 1e-9);
        }
    }
}
