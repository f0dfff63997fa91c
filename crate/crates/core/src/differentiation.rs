//! Joint derivatives over shrinking cubes, quadrant derivatives and Dini
//! brackets.
//!
//! For a step `h` and quadrant `ε` the quotient is `Δⁿ_f[x, x+hε] / hⁿ`, the
//! cube being reoriented on axes with `ε_i = -1`. Steps follow a geometric
//! schedule. One-sided quotients of smooth functions carry an `O(h)` bias
//! that only vanishes at steps where cancellation in the corner sum already
//! dominates, so the quotient sequence is also Richardson-extrapolated (two
//! levels, removing the `h` and `h²` terms). An estimate converges when the
//! last three raw quotients, or the last three extrapolated values, agree
//! within `max(rtol·|q|, atol)`, widened to the rounding noise of the corner
//! sum at the current step. A plateau of raw quotients must also be
//! matched by one quotient at an off-schedule step: staircases such as the
//! Cantor function can repeat a quotient exactly along a geometric schedule
//! and then drop.
//!
//! Dini brackets are the extremes of the trailing half of the raw quotient
//! trace. They are finite-window proxies for the upper and lower limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{corner_masks, corner_point, unflatten, GridPartition, GridSample, QuadrantSign, Rect};
use crate::increment::increment_from_corners;
use crate::source::FuncSource;

/// Near-boundary points may shrink the initial step down to `h0 * 2^-17`
/// (which is `2^-20` of the side when `h0` is the default `side / 8`).
const SHRINK_FLOOR_EXPONENT: i32 = 17;

/// Step factor of the confirmation probe; irrational so that the probe never
/// lands on the schedule's lattice.
/// Rounding error of one corner evaluation, in units of `ε·|f|`.
const NOISE_ULPS: f64 = 4.0;

const PROBE_FACTOR: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Geometric step schedule for derivative quotients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HSchedule {
    pub h0: f64,
    pub ratio: f64,
    pub max_steps: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl HSchedule {
    pub const DEFAULT_RATIO: f64 = 0.5;
    pub const DEFAULT_MAX_STEPS: usize = 24;
    pub const DEFAULT_RTOL: f64 = 1e-6;
    pub const DEFAULT_ATOL: f64 = 1e-9;

    /// Default schedule for a rectangle: `h0 = min side / 8`, halving, 24 steps.
    pub fn for_rect(rect: &Rect) -> Self {
        Self::with_h0(rect.min_side() / 8.0)
    }

    pub fn with_h0(h0: f64) -> Self {
        HSchedule {
            h0,
            ratio: Self::DEFAULT_RATIO,
            max_steps: Self::DEFAULT_MAX_STEPS,
            rtol: Self::DEFAULT_RTOL,
            atol: Self::DEFAULT_ATOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(Error::invalid(format!("h0 must be positive, got {}", self.h0)));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::invalid(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        if self.max_steps < 3 {
            return Err(Error::invalid("max_steps must be at least 3"));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::invalid("rtol and atol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub h: f64,
    pub quotient: f64,
}

/// Which sequence satisfied the convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergedOn {
    Quotients,
    Extrapolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    /// `None` when neither sequence settled within the schedule.
    pub value: Option<f64>,
    pub converged_on: Option<ConvergedOn>,
    pub dini_upper: f64,
    pub dini_lower: f64,
    pub trace: Vec<TracePoint>,
    pub quadrant: QuadrantSign,
}

impl DerivativeEstimate {
    pub fn is_converged(&self) -> bool {
        self.value.is_some()
    }

    /// Distance between the last two raw quotients: the size of the
    /// first-order bias still present in the raw trace.
    pub fn last_step_change(&self) -> f64 {
        match self.trace.as_slice() {
            [.., a, b] => (a.quotient - b.quotient).abs(),
            _ => 0.0,
        }
    }
}

/// The cube `[x, x + hε]` with reversed axes reoriented.
fn quadrant_cube(x: &[f64], quadrant: &QuadrantSign, h: f64) -> Result<Rect> {
    let (lo, hi) = x
        .iter()
        .zip(quadrant.dirs())
        .map(|(&xi, &d)| if d > 0 { (xi, xi + h) } else { (xi - h, xi) })
        .unzip();
    Rect::new(lo, hi)
}

fn fit_initial_step(f: &FuncSource, x: &[f64], quadrant: &QuadrantSign, sched: &HSchedule) -> Result<f64> {
    let Some(domain) = f.domain() else {
        return Ok(sched.h0);
    };
    if !domain.contains(x) {
        return Err(Error::domain(format!("point {x:?} lies outside {domain}")));
    }
    let floor = sched.h0 * 2f64.powi(-SHRINK_FLOOR_EXPONENT);
    let mut h = sched.h0;
    while !domain.contains_rect(&quadrant_cube(x, quadrant, h)?) {
        h *= sched.ratio;
        if h < floor {
            return Err(Error::domain(format!(
                "no cube in quadrant {quadrant} at {x:?} fits inside {domain}"
            )));
        }
    }
    Ok(h)
}

/// Agreement tolerance at a step: the schedule's tolerances, widened to the
/// rounding noise of the corner sum that produced the step.
fn step_tol(sched: &HSchedule, value: f64, noise: f64) -> f64 {
    (sched.rtol * value.abs()).max(sched.atol).max(noise)
}

fn last_three_agree(seq: &[f64], sched: &HSchedule, noise: f64) -> bool {
    let [.., a, b, c] = seq else {
        return false;
    };
    let tol = step_tol(sched, *c, noise);
    (a - b).abs() <= tol && (a - c).abs() <= tol && (b - c).abs() <= tol
}

/// Quotient at step `h` and a bound on its rounding error.
fn quotient(f: &FuncSource, x: &[f64], quadrant: &QuadrantSign, h: f64) -> Result<(f64, f64)> {
    let cube = quadrant_cube(x, quadrant, h)?;
    let values = corner_masks(x.len())
        .map(|mask| f.eval(&corner_point(&cube, mask)))
        .collect::<Result<Vec<f64>>>()?;
    let scale = h.powi(x.len() as i32);
    let q = increment_from_corners(&values) / scale;
    if q.is_nan() {
        return Err(Error::NonFinite {
            point: x.to_vec(),
            value: q,
        });
    }
    let magnitude: f64 = values.iter().map(|v| v.abs()).sum();
    Ok((q, NOISE_ULPS * f64::EPSILON * magnitude / scale))
}

fn probe_agrees(f: &FuncSource, x: &[f64], quadrant: &QuadrantSign, h: f64, q: f64, sched: &HSchedule) -> Result<bool> {
    let (p, noise) = quotient(f, x, quadrant, h * PROBE_FACTOR)?;
    Ok((p - q).abs() <= step_tol(sched, q, noise))
}

/// Joint derivative of `f` at `x` in the given quadrant.
pub fn joint_derivative(
    f: &FuncSource,
    x: &[f64],
    quadrant: &QuadrantSign,
    sched: &HSchedule,
) -> Result<DerivativeEstimate> {
    sched.validate()?;
    let n = f.dim();
    if x.len() != n || quadrant.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if x.len() != n { x.len() } else { quadrant.dim() },
        });
    }
    let r = sched.ratio;
    // Worst-case growth of rounding noise through both extrapolation levels.
    let amplification = (1.0 + r) / (1.0 - r) * (1.0 + r * r) / (1.0 - r * r);
    let mut h = fit_initial_step(f, x, quadrant, sched)?;
    let mut trace = Vec::with_capacity(sched.max_steps);
    let mut raw: Vec<f64> = Vec::with_capacity(sched.max_steps);
    let mut first: Vec<f64> = Vec::new();
    let mut second: Vec<f64> = Vec::new();
    let mut value = None;
    let mut converged_on = None;

    for _ in 0..sched.max_steps {
        let (q, noise) = quotient(f, x, quadrant, h)?;
        trace.push(TracePoint { h, quotient: q });
        if let Some(&prev) = raw.last() {
            first.push((q - r * prev) / (1.0 - r));
        }
        raw.push(q);
        if let [.., p1, q1] = first.as_slice() {
            second.push((q1 - r * r * p1) / (1.0 - r * r));
        }
        if last_three_agree(&raw, sched, noise) && probe_agrees(f, x, quadrant, h, q, sched)? {
            value = Some(q);
            converged_on = Some(ConvergedOn::Quotients);
            break;
        }
        if last_three_agree(&second, sched, amplification * noise) {
            value = second.last().copied();
            converged_on = Some(ConvergedOn::Extrapolated);
            break;
        }
        h *= r;
    }

    let window = &raw[raw.len() / 2..];
    let dini_upper = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dini_lower = window.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DerivativeEstimate {
        value,
        converged_on,
        dini_upper,
        dini_lower,
        trace,
        quadrant: quadrant.clone(),
    })
}

/// Upper and lower Dini proxies in the `(+, ..., +)` quadrant, whether or not
/// the quotients converge.
pub fn dini_bracket(f: &FuncSource, x: &[f64], sched: &HSchedule) -> Result<(f64, f64)> {
    let est = joint_derivative(f, x, &QuadrantSign::positive(f.dim()), sched)?;
    Ok((est.dini_upper, est.dini_lower))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub value: Option<f64>,
    pub dini_lower: f64,
    pub dini_upper: f64,
}

/// Where a derivative field samples each cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRule {
    /// One node at the cell center (second-order quadrature).
    #[default]
    Midpoint,
    /// The `2ⁿ` tensor Gauss–Legendre nodes (fourth-order quadrature).
    Gauss2,
}

impl CellRule {
    /// Nodes and weights of the rule on `[lo, hi]`.
    fn nodes(self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let (c, w) = (0.5 * (lo + hi), hi - lo);
        match self {
            CellRule::Midpoint => vec![(c, w)],
            CellRule::Gauss2 => {
                let d = 0.5 * w / 3f64.sqrt();
                vec![(c - d, 0.5 * w), (c + d, 0.5 * w)]
            }
        }
    }
}

/// Joint-derivative estimates at the quadrature nodes of every cell of a
/// partition. Nodes form a tensor grid, so estimates are row-major over
/// `nodes` with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeField {
    pub cells: GridPartition,
    pub rule: CellRule,
    pub quadrant: QuadrantSign,
    /// Node coordinates per axis.
    pub nodes: Vec<Vec<f64>>,
    /// Quadrature weight of each node per axis.
    pub weights: Vec<Vec<f64>>,
    pub estimates: Vec<CellEstimate>,
    pub nonconvergent: usize,
}

impl DerivativeField {
    fn shape(&self) -> Vec<usize> {
        self.nodes.iter().map(Vec::len).collect()
    }

    /// Coordinates of node `flat`.
    pub fn anchor(&self, flat: usize) -> Vec<f64> {
        let idx = unflatten(&self.shape(), flat);
        idx.iter().zip(&self.nodes).map(|(&i, axis)| axis[i]).collect()
    }

    /// Quadrature weight of node `flat`.
    pub fn weight(&self, flat: usize) -> f64 {
        let idx = unflatten(&self.shape(), flat);
        idx.iter().zip(&self.weights).map(|(&i, w)| w[i]).product()
    }

    /// Quadrature of `integrand(estimate)` over the partition; nodes mapped
    /// to `None` are skipped and counted.
    pub fn quadrature<F>(&self, integrand: F) -> (f64, usize)
    where
        F: Fn(&CellEstimate) -> Option<f64>,
    {
        let mut acc = crate::sum::CompensatedSum::new();
        let mut skipped = 0;
        for (flat, est) in self.estimates.iter().enumerate() {
            match integrand(est) {
                Some(v) => acc.add(v * self.weight(flat)),
                None => skipped += 1,
            }
        }
        (acc.value(), skipped)
    }

    /// Values on the node grid; non-convergent nodes get `fill`.
    pub fn to_sample(&self, fill: f64) -> Result<GridSample> {
        let anchors = GridPartition::new(self.nodes.clone())?;
        let values = self.estimates.iter().map(|e| e.value.unwrap_or(fill)).collect();
        GridSample::new(anchors, values)
    }
}

/// Evaluates [`joint_derivative`] at every cell midpoint of `partition`.
pub fn derivative_field(
    f: &FuncSource,
    partition: &GridPartition,
    quadrant: &QuadrantSign,
    sched: &HSchedule,
) -> Result<DerivativeField> {
    derivative_field_with(f, partition, quadrant, sched, CellRule::Midpoint)
}

/// Evaluates [`joint_derivative`] at the nodes of `rule` in every cell.
/// Nodes run in parallel; results are identical to a sequential sweep.
pub fn derivative_field_with(
    f: &FuncSource,
    partition: &GridPartition,
    quadrant: &QuadrantSign,
    sched: &HSchedule,
    rule: CellRule,
) -> Result<DerivativeField> {
    if partition.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: partition.dim(),
        });
    }
    let (nodes, weights): (Vec<Vec<f64>>, Vec<Vec<f64>>) = partition
        .axes()
        .iter()
        .map(|axis| axis.windows(2).flat_map(|w| rule.nodes(w[0], w[1])).unzip())
        .unzip();
    let shape: Vec<usize> = nodes.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let estimates: Vec<CellEstimate> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let idx = unflatten(&shape, flat);
            let x: Vec<f64> = idx.iter().zip(&nodes).map(|(&i, axis)| axis[i]).collect();
            let est = joint_derivative(f, &x, quadrant, sched)?;
            Ok(CellEstimate {
                value: est.value,
                dini_lower: est.dini_lower,
                dini_upper: est.dini_upper,
            })
        })
        .collect::<Result<_>>()?;
    let nonconvergent = estimates.iter().filter(|e| e.value.is_none()).count();
    Ok(DerivativeField {
        cells: partition.clone(),
        rule,
        quadrant: quadrant.clone(),
        nodes,
        weights,
        estimates,
        nonconvergent,
    })
}
