//! Hardy–Krause variation by partition refinement, additivity over split
//! rectangles, and the Jordan decomposition `f = g - h`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{corner_masks, flat_index, multi_indices, unflatten, GridPartition, GridSample, Rect};
use crate::increment::increment_from_corners;
use crate::source::{vertex_values, FuncSource};
use crate::sum::compensated_sum;

/// Absolute floor added to the stall test so that functions with zero
/// variation (whose partition sums are pure rounding noise) still stop.
const STALL_ABS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    UniformBisect,
    AdaptiveWorstCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinePolicy {
    pub mode: RefineMode,
    pub max_rounds: usize,
    pub stall_rtol: f64,
    pub cell_budget: usize,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        RefinePolicy {
            mode: RefineMode::UniformBisect,
            max_rounds: 12,
            stall_rtol: 1e-4,
            cell_budget: 1 << 22,
        }
    }
}

impl RefinePolicy {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::invalid("max_rounds must be at least 1"));
        }
        if !(self.stall_rtol > 0.0) {
            return Err(Error::invalid("stall_rtol must be positive"));
        }
        if (self.cell_budget as u128) < 1u128 << dim {
            return Err(Error::invalid(format!("cell_budget must be at least 2^{dim}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    BudgetExhausted,
    RoundLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub cells: usize,
    /// Partition sum of this round.
    pub raw_sum: f64,
    /// Largest partition sum seen so far; refinement can only lose to rounding.
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationResult {
    pub lower_bound: f64,
    pub trace: Vec<RoundTrace>,
    pub stopped: StopReason,
    pub partition: GridPartition,
}

/// `|Δⁿ_f|` for every cell of `partition`, row-major. Vertices are evaluated
/// once and shared between neighbouring cells.
pub(crate) fn cell_increments(f: &FuncSource, partition: &GridPartition) -> Result<Vec<f64>> {
    let values = vertex_values(f, partition)?;
    Ok(increments_from_vertices(partition, &values))
}

pub(crate) fn increments_from_vertices(partition: &GridPartition, values: &[f64]) -> Vec<f64> {
    let n = partition.dim();
    let vshape = partition.vertex_shape();
    let cshape = partition.cell_shape();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * vshape[i + 1];
    }
    let offsets: Vec<usize> = corner_masks(n)
        .map(|m| (0..n).filter(|&i| m.bit(i)).map(|i| strides[i]).sum())
        .collect();
    (0..partition.num_cells())
        .into_par_iter()
        .map_init(
            || vec![0.0; offsets.len()],
            |corner, flat| {
                let base = flat_index(&vshape, &unflatten(&cshape, flat));
                for (c, off) in corner.iter_mut().zip(&offsets) {
                    *c = values[base + off];
                }
                increment_from_corners(corner)
            },
        )
        .collect()
}

/// `Σ |Δⁿ_f I|` over the sub-rectangles of `partition`.
pub fn variation_on_partition(f: &FuncSource, partition: &GridPartition) -> Result<f64> {
    Ok(compensated_sum(cell_increments(f, partition)?.into_iter().map(f64::abs)))
}

fn check_inside(f: &FuncSource, rect: &Rect) -> Result<()> {
    if rect.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: rect.dim(),
        });
    }
    if let Some(d) = f.domain() {
        if !d.contains_rect(rect) {
            return Err(Error::domain(format!("{rect} is not inside the domain {d}")));
        }
    }
    Ok(())
}

/// Lower bound for the total variation of `f` on `rect`.
///
/// Sampled sources are summed once on their own grid, which is the finest
/// partition that respects the data; the result is exact for them.
pub fn total_variation(f: &FuncSource, rect: &Rect, policy: &RefinePolicy) -> Result<VariationResult> {
    check_inside(f, rect)?;
    policy.validate(rect.dim())?;

    if let Some(sample) = f.as_sample() {
        let partition = sample.partition().restrict(rect)?;
        let s = variation_on_partition(f, &partition)?;
        return Ok(VariationResult {
            lower_bound: s,
            trace: vec![RoundTrace {
                cells: partition.num_cells(),
                raw_sum: s,
                sum: s,
            }],
            stopped: StopReason::Converged,
            partition,
        });
    }

    let mut partition = GridPartition::trivial(rect);
    let mut trace: Vec<RoundTrace> = Vec::new();
    let mut best = 0.0f64;
    let stopped = loop {
        let incs = cell_increments(f, &partition)?;
        let raw = compensated_sum(incs.iter().map(|d| d.abs()));
        best = best.max(raw);
        trace.push(RoundTrace {
            cells: partition.num_cells(),
            raw_sum: raw,
            sum: best,
        });
        let r = trace.len();
        if r >= 3 {
            let gain = trace[r - 1].sum - trace[r - 3].sum;
            if gain <= policy.stall_rtol * best.abs() + STALL_ABS_FLOOR {
                break StopReason::Converged;
            }
        }
        if r >= policy.max_rounds {
            break StopReason::RoundLimit;
        }
        let next = match policy.mode {
            RefineMode::UniformBisect => partition.bisect(),
            RefineMode::AdaptiveWorstCell => {
                let worst = incs
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, d)| if d.abs() > acc.1 { (i, d.abs()) } else { acc })
                    .0;
                let cell = partition.cell(&unflatten(&partition.cell_shape(), worst));
                partition.refine(&cell.center())?
            }
        };
        if next.num_cells() > policy.cell_budget {
            break StopReason::BudgetExhausted;
        }
        partition = next;
    };
    Ok(VariationResult {
        lower_bound: best,
        trace,
        stopped,
        partition,
    })
}

/// Variation on `rect` and the summed variation over the `2ⁿ` blocks cut by
/// `split_point`, under the same policy.
pub fn check_additivity(
    f: &FuncSource,
    rect: &Rect,
    split_point: &[f64],
    policy: &RefinePolicy,
) -> Result<(f64, f64)> {
    if !rect.contains_interior(split_point) {
        return Err(Error::domain(format!("split point {split_point:?} is not interior to {rect}")));
    }
    let whole = total_variation(f, rect, policy)?.lower_bound;
    let parts = rect
        .split_at(split_point)?
        .into_par_iter()
        .map(|r| total_variation(f, &r, policy).map(|v| v.lower_bound))
        .collect::<Result<Vec<f64>>>()?;
    Ok((whole, compensated_sum(parts)))
}

/// `f = g - h` on the vertices of a grid, with `g(x)` the variation of `f`
/// over `[a, x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JordanPair {
    pub g: GridSample,
    pub h: GridSample,
    /// Variation lower bound of each grid cell, row-major.
    pub cell_variation: Vec<f64>,
    pub budget_exhausted: usize,
    pub round_limited: usize,
}

/// Jordan decomposition on the vertices of `grid` restricted to `rect`.
///
/// Each cell's variation is computed once and `g` is the n-dimensional prefix
/// sum of the cell variations, so `g` vanishes on the lower faces of `rect`.
/// Sub-problems that stop on their budget or round limit are counted rather
/// than treated as errors.
pub fn jordan_decompose(
    f: &FuncSource,
    rect: &Rect,
    grid: &GridPartition,
    policy: &RefinePolicy,
) -> Result<JordanPair> {
    check_inside(f, rect)?;
    if grid.dim() != rect.dim() {
        return Err(Error::DimensionMismatch {
            expected: rect.dim(),
            found: grid.dim(),
        });
    }
    let grid = grid.restrict(rect)?;
    let cshape = grid.cell_shape();
    let vshape = grid.vertex_shape();
    let results = (0..grid.num_cells())
        .into_par_iter()
        .map(|flat| total_variation(f, &grid.cell(&unflatten(&cshape, flat)), policy))
        .collect::<Result<Vec<_>>>()?;
    let budget_exhausted = results.iter().filter(|r| r.stopped == StopReason::BudgetExhausted).count();
    let round_limited = results.iter().filter(|r| r.stopped == StopReason::RoundLimit).count();
    let cell_variation: Vec<f64> = results.iter().map(|r| r.lower_bound).collect();

    let mut g = vec![0.0; grid.num_vertices()];
    for (flat, idx) in multi_indices(&cshape).enumerate() {
        let shifted: Vec<usize> = idx.iter().map(|i| i + 1).collect();
        g[flat_index(&vshape, &shifted)] = cell_variation[flat];
    }
    prefix_sum_in_place(&mut g, &vshape);

    let f_values = vertex_values(f, &grid)?;
    let h: Vec<f64> = g.iter().zip(&f_values).map(|(g, f)| g - f).collect();
    Ok(JordanPair {
        g: GridSample::new(grid.clone(), g)?,
        h: GridSample::new(grid, h)?,
        cell_variation,
        budget_exhausted,
        round_limited,
    })
}

/// Cumulative sums along every axis of a row-major array.
fn prefix_sum_in_place(data: &mut [f64], shape: &[usize]) {
    let n = shape.len();
    for axis in 0..n {
        let stride: usize = shape[axis + 1..].iter().product();
        let len = shape[axis];
        for start in 0..data.len() {
            if (start / stride).is_multiple_of(len) {
                for k in 1..len {
                    let cur = start + k * stride;
                    data[cur] += data[cur - stride];
                }
            }
        }
    }
}
