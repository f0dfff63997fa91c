//! Rectangles, corner enumeration, grid partitions and grid indexing.
//!
//! Grids are stored per axis as strictly increasing breakpoint lists. Flat
//! arrays over a grid (vertex values, per-cell data) are row-major: the last
//! axis varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension. An increment costs `2^n` evaluations.
pub const MAX_DIM: usize = 12;

/// Axis-aligned closed rectangle `[lo, hi]` in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        check_dim(lo.len())?;
        for (i, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::invalid(format!("rect bound on axis {i} is not finite")));
            }
            if a > b {
                return Err(Error::invalid(format!(
                    "rect lower bound {a} exceeds upper bound {b} on axis {i}"
                )));
            }
        }
        Ok(Rect { lo, hi })
    }

    /// The unit cube `[0, 1]^n`.
    pub fn unit(n: usize) -> Result<Self> {
        Rect::new(vec![0.0; n], vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn min_side(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    /// True when some side has zero length.
    pub fn is_degenerate(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a == b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (a, b))| *a <= *x && *x <= *b)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    /// True when `point` lies strictly inside on every axis.
    pub fn contains_interior(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (a, b))| *a < *x && *x < *b)
    }

    /// The `2^n` sub-rectangles obtained by cutting every axis at `point`,
    /// in corner-mask order (bit `i` set selects the upper half of axis `i`).
    pub fn split_at(&self, point: &[f64]) -> Result<Vec<Rect>> {
        if !self.contains(point) {
            return Err(Error::domain(format!("split point {point:?} lies outside {self}")));
        }
        Ok(corner_masks(self.dim())
            .map(|mask| {
                let (lo, hi) = (0..self.dim())
                    .map(|i| {
                        if mask.bit(i) {
                            (point[i], self.hi[i])
                        } else {
                            (self.lo[i], point[i])
                        }
                    })
                    .unzip();
                Rect { lo, hi }
            })
            .collect())
    }
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if n > MAX_DIM {
        return Err(Error::DimensionTooLarge(n));
    }
    Ok(())
}

/// A corner selector `eps in {0,1}^n`, packed into bits (`eps_1` is bit 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CornerMask {
    bits: u32,
    dim: usize,
}

impl CornerMask {
    pub fn new(bits: u32, dim: usize) -> Self {
        debug_assert!(dim <= MAX_DIM && bits < (1 << dim));
        CornerMask { bits, dim }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn bit(&self, axis: usize) -> bool {
        self.bits >> axis & 1 == 1
    }

    pub fn flags(&self) -> Vec<bool> {
        (0..self.dim).map(|i| self.bit(i)).collect()
    }

    /// `(-1)^(n + sum eps_i)`.
    pub fn sign(&self) -> f64 {
        if (self.dim as u32 + self.bits.count_ones()).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

/// All `2^n` masks in binary counting order.
pub fn corner_masks(n: usize) -> impl Iterator<Item = CornerMask> {
    (0..1u32 << n).map(move |bits| CornerMask::new(bits, n))
}

/// Corners `a + eps o (b - a)` of `rect` with their masks, in binary counting order.
pub fn corners(rect: &Rect) -> Vec<(CornerMask, Vec<f64>)> {
    corner_masks(rect.dim())
        .map(|mask| (mask, corner_point(rect, mask)))
        .collect()
}

pub(crate) fn corner_point(rect: &Rect, mask: CornerMask) -> Vec<f64> {
    (0..rect.dim())
        .map(|i| if mask.bit(i) { rect.hi[i] } else { rect.lo[i] })
        .collect()
}

/// Direction pattern `eps in {-1, +1}^n` selecting the quadrant of a
/// derivative cube.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantSign {
    dirs: Vec<i8>,
}

impl QuadrantSign {
    pub fn new(dirs: Vec<i8>) -> Result<Self> {
        check_dim(dirs.len())?;
        if let Some(d) = dirs.iter().find(|d| **d != 1 && **d != -1) {
            return Err(Error::invalid(format!("quadrant direction must be +1 or -1, got {d}")));
        }
        Ok(QuadrantSign { dirs })
    }

    /// The `(+, ..., +)` quadrant.
    pub fn positive(n: usize) -> Self {
        QuadrantSign { dirs: vec![1; n] }
    }

    /// All `2^n` quadrants; bit `i` of the enumeration index flips axis `i` to `-1`.
    pub fn all(n: usize) -> Vec<Self> {
        corner_masks(n)
            .map(|m| QuadrantSign {
                dirs: (0..n).map(|i| if m.bit(i) { -1 } else { 1 }).collect(),
            })
            .collect()
    }

    pub fn dirs(&self) -> &[i8] {
        &self.dirs
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }
}

impl std::fmt::Display for QuadrantSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<&str> = self.dirs.iter().map(|d| if *d > 0 { "+" } else { "-" }).collect();
        write!(f, "({})", s.join(","))
    }
}

/// Row-major iterator over all multi-indices of `shape`.
#[derive(Debug, Clone)]
pub struct MultiIndexIter {
    shape: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut axis = self.shape.len();
        while axis > 0 {
            axis -= 1;
            succ[axis] += 1;
            if succ[axis] < self.shape[axis] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[axis] = 0;
        }
        Some(current)
    }
}

pub fn multi_indices(shape: &[usize]) -> MultiIndexIter {
    let empty = shape.contains(&0);
    MultiIndexIter {
        shape: shape.to_vec(),
        next: if empty { None } else { Some(vec![0; shape.len()]) },
    }
}

/// Row-major flat offset of `idx` in an array of `shape`.
pub fn flat_index(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &s)| acc * s + i)
}

/// Inverse of [`flat_index`].
pub fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for axis in (0..shape.len()).rev() {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    idx
}

/// Product grid over a rectangle. Each axis holds strictly increasing
/// breakpoints whose first and last entries are the rectangle bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    axes: Vec<Vec<f64>>,
}

impl GridPartition {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(axes.len())?;
        for (i, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::invalid(format!("axis {i} has no breakpoints")));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("axis {i} has a non-finite breakpoint")));
            }
            if let Some(w) = axis.windows(2).position(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "axis {i} breakpoints are not strictly increasing at position {}",
                    w + 1
                )));
            }
        }
        Ok(GridPartition { axes })
    }

    /// `counts[i]` equal cells along axis `i`. Degenerate sides get a single breakpoint.
    pub fn uniform(rect: &Rect, counts: &[usize]) -> Result<Self> {
        if counts.len() != rect.dim() {
            return Err(Error::DimensionMismatch {
                expected: rect.dim(),
                found: counts.len(),
            });
        }
        let axes = counts
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let (a, b) = (rect.lo[i], rect.hi[i]);
                if a == b {
                    return Ok(vec![a]);
                }
                if k == 0 {
                    return Err(Error::invalid(format!("axis {i} needs at least one cell")));
                }
                let mut axis: Vec<f64> = (0..=k).map(|j| a + (b - a) * j as f64 / k as f64).collect();
                axis[k] = b;
                Ok(axis)
            })
            .collect::<Result<Vec<_>>>()?;
        GridPartition::new(axes)
    }

    /// The one-cell partition whose only sub-rectangle is `rect`.
    pub fn trivial(rect: &Rect) -> Self {
        let axes = (0..rect.dim())
            .map(|i| {
                if rect.lo[i] == rect.hi[i] {
                    vec![rect.lo[i]]
                } else {
                    vec![rect.lo[i], rect.hi[i]]
                }
            })
            .collect();
        GridPartition { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn rect(&self) -> Rect {
        Rect {
            lo: self.axes.iter().map(|a| a[0]).collect(),
            hi: self.axes.iter().map(|a| a[a.len() - 1]).collect(),
        }
    }

    /// Number of cells along each axis.
    pub fn cell_shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len() - 1).collect()
    }

    /// Number of breakpoints along each axis.
    pub fn vertex_shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.cell_shape().iter().product()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_shape().iter().product()
    }

    pub fn vertex(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(&i, a)| a[i]).collect()
    }

    pub fn cell(&self, idx: &[usize]) -> Rect {
        Rect {
            lo: idx.iter().zip(&self.axes).map(|(&i, a)| a[i]).collect(),
            hi: idx.iter().zip(&self.axes).map(|(&i, a)| a[i + 1]).collect(),
        }
    }

    /// Cell midpoints along each axis.
    pub fn midpoints(&self) -> Vec<Vec<f64>> {
        self.axes
            .iter()
            .map(|a| a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
            .collect()
    }

    /// Inserts each coordinate of `point` into its axis.
    pub fn refine(&self, point: &[f64]) -> Result<Self> {
        let rect = self.rect();
        if !rect.contains(point) {
            return Err(Error::domain(format!(
                "refinement point {point:?} lies outside {rect}"
            )));
        }
        let axes = self
            .axes
            .iter()
            .zip(point)
            .map(|(axis, &x)| insert_sorted(axis, x))
            .collect();
        Ok(GridPartition { axes })
    }

    /// Halves every cell on every axis.
    pub fn bisect(&self) -> Self {
        let axes = self
            .axes
            .iter()
            .map(|axis| {
                let mut out = Vec::with_capacity(2 * axis.len());
                for w in axis.windows(2) {
                    out.push(w[0]);
                    let mid = 0.5 * (w[0] + w[1]);
                    if w[0] < mid && mid < w[1] {
                        out.push(mid);
                    }
                }
                out.push(axis[axis.len() - 1]);
                out
            })
            .collect();
        GridPartition { axes }
    }

    /// Union of the breakpoints of two partitions of the same rectangle.
    pub fn merge(&self, other: &GridPartition) -> Result<Self> {
        if self.rect() != other.rect() {
            return Err(Error::domain("cannot merge partitions of different rectangles"));
        }
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| {
                let mut out: Vec<f64> = a.iter().chain(b).copied().collect();
                out.sort_by(f64::total_cmp);
                out.dedup();
                out
            })
            .collect();
        Ok(GridPartition { axes })
    }

    /// Restriction to `rect`: breakpoints strictly inside plus the bounds of `rect`.
    pub fn restrict(&self, rect: &Rect) -> Result<Self> {
        if !self.rect().contains_rect(rect) {
            return Err(Error::domain(format!("{rect} is not inside the partition rectangle")));
        }
        let axes = self
            .axes
            .iter()
            .enumerate()
            .map(|(i, axis)| {
                let (a, b) = (rect.lo[i], rect.hi[i]);
                let mut out = vec![a];
                out.extend(axis.iter().copied().filter(|&x| a < x && x < b));
                if b > a {
                    out.push(b);
                }
                out
            })
            .collect();
        Ok(GridPartition { axes })
    }

    /// True when every breakpoint of `coarser` appears in `self` and both cover the same rectangle.
    pub fn is_refinement_of(&self, coarser: &GridPartition) -> bool {
        self.dim() == coarser.dim()
            && self.rect() == coarser.rect()
            && self
                .axes
                .iter()
                .zip(&coarser.axes)
                .all(|(fine, coarse)| coarse.iter().all(|x| fine.binary_search_by(|y| y.total_cmp(x)).is_ok()))
    }

    /// Sub-rectangles in row-major order.
    pub fn subrects(&self) -> impl Iterator<Item = Rect> + '_ {
        multi_indices(&self.cell_shape()).map(move |idx| self.cell(&idx))
    }
}

fn insert_sorted(axis: &[f64], x: f64) -> Vec<f64> {
    let mut out = axis.to_vec();
    if let Err(pos) = out.binary_search_by(|y| y.total_cmp(&x)) {
        out.insert(pos, x);
    }
    out
}

/// Function values tabulated at every vertex of a partition, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    partition: GridPartition,
    values: Vec<f64>,
}

impl GridSample {
    pub fn new(partition: GridPartition, values: Vec<f64>) -> Result<Self> {
        let expected = partition.num_vertices();
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "grid sample has {} values, expected {expected}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("grid sample value at offset {pos} is not finite")));
        }
        Ok(GridSample { partition, values })
    }

    pub fn partition(&self) -> &GridPartition {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[flat_index(&self.partition.vertex_shape(), idx)]
    }

    pub fn into_parts(self) -> (GridPartition, Vec<f64>) {
        (self.partition, self.values)
    }
}
