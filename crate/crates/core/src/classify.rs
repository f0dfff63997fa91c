//! Monotonicity predicates on grids and the numerical absolute-continuity
//! classifier, which compares `∫|f⁽ⁿ⁾|` against the variation.

use serde::{Deserialize, Serialize};

use crate::differentiation::{derivative_field_with, CellRule, HSchedule};
use crate::error::{Error, Result};
use crate::geometry::{multi_indices, unflatten, GridPartition, QuadrantSign, Rect};
use crate::source::{vertex_values, FuncSource};
use crate::sum::CompensatedSum;
use crate::variation::{cell_increments, total_variation, RefinePolicy, StopReason};

/// Share of derivative cells allowed to fail before the AC verdict is withheld.
const MAX_NONCONVERGENT_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub rect: Rect,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub verdict: Verdict,
    /// Worst cell (or grid segment), present on failure.
    pub witness: Option<Witness>,
    pub tolerance: f64,
    /// Smallest increment or difference seen.
    pub min_value: f64,
    pub checked: usize,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn from_worst(worst: Option<(Rect, f64)>, tolerance: f64, checked: usize) -> Self {
        match worst {
            Some((rect, value)) if value < -tolerance => MonotonicityReport {
                verdict: Verdict::Fail,
                witness: Some(Witness { rect, value }),
                tolerance,
                min_value: value,
                checked,
            },
            other => MonotonicityReport {
                verdict: Verdict::Pass,
                witness: None,
                tolerance,
                min_value: other.map_or(0.0, |(_, v)| v),
                checked,
            },
        }
    }

    /// Converts a failed report into a precondition error carrying the witness.
    pub fn require(&self, what: &str) -> Result<()> {
        match &self.witness {
            Some(w) if !self.passed() => Err(Error::Precondition {
                reason: format!("{what} is not monotone: increment {:e} on {}", w.value, w.rect),
                witness: Some((w.rect.clone(), w.value)),
            }),
            _ => Ok(()),
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol >= 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("tolerance must be a non-negative number, got {tol}")))
    }
}

/// Checks `Δⁿ_f ≥ -tol` on every cell of `grid`. Increments are additive, so
/// this covers every rectangle spanned by grid vertices.
pub fn is_jointly_monotone(f: &FuncSource, grid: &GridPartition, tol: f64) -> Result<MonotonicityReport> {
    check_tol(tol)?;
    let incs = cell_increments(f, grid)?;
    let shape = grid.cell_shape();
    let worst = incs
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, &d)| match acc {
            Some((_, m)) if m <= d => acc,
            _ => Some((i, d)),
        })
        .map(|(i, d)| (grid.cell(&unflatten(&shape, i)), d));
    Ok(MonotonicityReport::from_worst(worst, tol, incs.len()))
}

/// Checks that `f` does not decrease between neighbouring vertices along any
/// grid line.
pub fn is_componentwise_monotone(f: &FuncSource, grid: &GridPartition, tol: f64) -> Result<MonotonicityReport> {
    check_tol(tol)?;
    let values = vertex_values(f, grid)?;
    let shape = grid.vertex_shape();
    let mut worst: Option<(Vec<usize>, usize, f64)> = None;
    let mut checked = 0;
    for (flat, idx) in multi_indices(&shape).enumerate() {
        let mut stride = 1;
        for axis in (0..shape.len()).rev() {
            if idx[axis] + 1 < shape[axis] {
                let diff = values[flat + stride] - values[flat];
                checked += 1;
                if worst.as_ref().is_none_or(|w| diff < w.2) {
                    worst = Some((idx.clone(), axis, diff));
                }
            }
            stride *= shape[axis];
        }
    }
    let worst = worst
        .map(|(idx, axis, diff)| {
            let lo = grid.vertex(&idx);
            let mut hi = lo.clone();
            hi[axis] = grid.axis(axis)[idx[axis] + 1];
            Rect::new(lo, hi).map(|r| (r, diff))
        })
        .transpose()?;
    Ok(MonotonicityReport::from_worst(worst, tol, checked))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcClass {
    AbsolutelyContinuous,
    SingularPartDetected,
    Inconclusive,
}

/// Variation and derivative integral restricted to one block of the split at
/// the center of the rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGap {
    pub rect: Rect,
    pub variation_lower_bound: f64,
    pub integral_of_abs_derivative: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ACVerdict {
    pub verdict: AcClass,
    pub integral_of_abs_derivative: f64,
    pub variation_lower_bound: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub variation_stopped: StopReason,
    pub nonconvergent_cells: usize,
    pub total_cells: usize,
    pub local: Vec<LocalGap>,
}

/// Compares `∫|f⁽ⁿ⁾|` (midpoint rule on `grid`, failed cells excluded) with
/// the variation lower bound. Equality within `tol·max(1, V)` means absolutely
/// continuous; a larger positive gap means a singular part.
pub fn classify_ac(
    f: &FuncSource,
    rect: &Rect,
    grid: &GridPartition,
    sched: &HSchedule,
    policy: &RefinePolicy,
    tol: f64,
) -> Result<ACVerdict> {
    check_tol(tol)?;
    let grid = grid.restrict(rect)?;
    let variation = total_variation(f, rect, policy)?;
    let field = derivative_field_with(f, &grid, &QuadrantSign::positive(rect.dim()), sched, CellRule::Gauss2)?;
    let (integral, skipped) = field.quadrature(|e| e.value.map(f64::abs));
    let v = variation.lower_bound;
    let gap = v - integral;

    let center = rect.center();
    let blocks = if rect.contains_interior(&center) {
        rect.split_at(&center)?
    } else {
        Vec::new()
    };
    let mut local = Vec::with_capacity(blocks.len());
    for block in blocks {
        let vb = total_variation(f, &block, policy)?.lower_bound;
        let mut acc = CompensatedSum::new();
        for (flat, est) in field.estimates.iter().enumerate() {
            if let Some(d) = est.value {
                if block.contains(&field.anchor(flat)) {
                    acc.add(d.abs() * field.weight(flat));
                }
            }
        }
        let ib = acc.value();
        local.push(LocalGap {
            rect: block,
            variation_lower_bound: vb,
            integral_of_abs_derivative: ib,
            gap: vb - ib,
        });
    }

    let threshold = tol * v.max(1.0);
    let too_many_failed = skipped as f64 > MAX_NONCONVERGENT_SHARE * field.estimates.len() as f64;
    let verdict = if variation.stopped != StopReason::Converged || too_many_failed {
        AcClass::Inconclusive
    } else if gap.abs() <= threshold {
        AcClass::AbsolutelyContinuous
    } else if gap > threshold {
        AcClass::SingularPartDetected
    } else {
        AcClass::Inconclusive
    };
    Ok(ACVerdict {
        verdict,
        integral_of_abs_derivative: integral,
        variation_lower_bound: v,
        gap,
        tolerance: tol,
        variation_stopped: variation.stopped,
        nonconvergent_cells: skipped,
        total_cells: field.estimates.len(),
        local,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Rect {
        Rect::unit(n).unwrap()
    }

    fn grid(k: usize) -> GridPartition {
        GridPartition::uniform(&unit(2), &[k, k]).unwrap()
    }

    #[test]
    fn product_is_jointly_monotone() {
        let f = FuncSource::oracle(2, |x| x[0] * x[1]);
        let r = is_jointly_monotone(&f, &grid(8), 0.0).unwrap();
        assert!(r.passed());
        assert_eq!(r.checked, 64);
        assert!(r.require("xy").is_ok());
    }

    #[test]
    fn negative_product_fails_with_cell_witness() {
        let f = FuncSource::oracle(2, |x| -x[0] * x[1]);
        let r = is_jointly_monotone(&f, &grid(8), 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let w = r.witness.clone().unwrap();
        assert!((w.value + w.rect.volume()).abs() < 1e-15);
        assert!(matches!(r.require("f"), Err(Error::Precondition { witness: Some(_), .. })));
    }

    #[test]
    fn componentwise_checks() {
        let sum = FuncSource::oracle(2, |x| x[0] + x[1]);
        assert!(is_componentwise_monotone(&sum, &grid(5), 0.0).unwrap().passed());
        let prod = FuncSource::oracle(2, |x| x[0] * x[1]);
        let sym = GridPartition::uniform(&Rect::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), &[4, 4]).unwrap();
        let r = is_componentwise_monotone(&prod, &sym, 0.0).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let w = r.witness.unwrap();
        assert!(w.rect.is_degenerate() && w.value < 0.0);
    }

    #[test]
    fn quartic_product_is_absolutely_continuous() {
        let f = FuncSource::oracle(2, |x| x[0] * x[0] * x[1] * x[1]).with_domain(unit(2)).unwrap();
        let sched = HSchedule::for_rect(&unit(2));
        let v = classify_ac(&f, &unit(2), &grid(16), &sched, &RefinePolicy::default(), 1e-3).unwrap();
        assert_eq!(v.verdict, AcClass::AbsolutelyContinuous, "{v:?}");
        assert_eq!(v.local.len(), 4);
        let local_v: f64 = v.local.iter().map(|l| l.variation_lower_bound).sum();
        assert!((local_v - v.variation_lower_bound).abs() < 1e-12);
    }

    #[test]
    fn jump_is_singular() {
        let f = FuncSource::oracle(2, |x| if x[0] >= 0.5 && x[1] >= 0.5 { 1.0 } else { 0.0 })
            .with_domain(unit(2))
            .unwrap();
        let sched = HSchedule::for_rect(&unit(2));
        let v = classify_ac(&f, &unit(2), &grid(16), &sched, &RefinePolicy::default(), 1e-3).unwrap();
        assert_eq!(v.verdict, AcClass::SingularPartDetected);
        assert!((v.gap - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separable_gap_is_zero() {
        let f = FuncSource::oracle(2, |x| x[0].exp() + (1.0 + x[1]).ln()).with_domain(unit(2)).unwrap();
        let sched = HSchedule::for_rect(&unit(2));
        let v = classify_ac(&f, &unit(2), &grid(8), &sched, &RefinePolicy::default(), 1e-3).unwrap();
        assert_eq!(v.verdict, AcClass::AbsolutelyContinuous);
        assert!(v.gap.abs() < 1e-9);
    }
}
