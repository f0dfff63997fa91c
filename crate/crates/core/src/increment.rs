//! Joint increments `Δⁿ_f[a, b]`.
//!
//! Two independent routes are provided: the `2^n`-term alternating corner sum
//! ([`joint_increment`]) and the literal recursion on the last coordinate
//! ([`joint_increment_recursive`]). A rectangle with any zero-length side has
//! increment exactly `0.0`, returned without evaluating `f`.

use crate::error::{Error, Result};
use crate::geometry::{check_dim, corner_masks, corner_point, Rect};
use crate::source::FuncSource;
use crate::sum::CompensatedSum;

fn check_compatible(f: &FuncSource, rect: &Rect) -> Result<()> {
    check_dim(rect.dim())?;
    if f.dim() != rect.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: rect.dim(),
        });
    }
    Ok(())
}

/// Corner-sum increment `Σ_ε (-1)^(n+Σε) f(a + ε∘(b-a))`, accumulated with
/// compensated summation.
pub fn joint_increment(f: &FuncSource, rect: &Rect) -> Result<f64> {
    check_compatible(f, rect)?;
    if rect.is_degenerate() {
        return Ok(0.0);
    }
    let mut acc = CompensatedSum::new();
    for mask in corner_masks(rect.dim()) {
        acc.add(mask.sign() * f.eval(&corner_point(rect, mask))?);
    }
    Ok(acc.value())
}

/// Increment from corner values already evaluated in corner-mask order.
pub(crate) fn increment_from_corners(values: &[f64]) -> f64 {
    let n = values.len().trailing_zeros() as usize;
    let mut acc = CompensatedSum::new();
    for mask in corner_masks(n) {
        acc.add(mask.sign() * values[mask.bits() as usize]);
    }
    acc.value()
}

/// Increment by the defining recursion: restrict the last free coordinate to
/// its upper and lower bound and subtract the two `(n-1)`-dimensional
/// increments. Plain floating-point arithmetic throughout.
pub fn joint_increment_recursive(f: &FuncSource, rect: &Rect) -> Result<f64> {
    check_compatible(f, rect)?;
    if rect.is_degenerate() {
        return Ok(0.0);
    }
    let mut point = rect.lo().to_vec();
    recurse(f, rect, rect.dim(), &mut point)
}

fn recurse(f: &FuncSource, rect: &Rect, free: usize, point: &mut Vec<f64>) -> Result<f64> {
    if free == 0 {
        return f.eval(point);
    }
    let axis = free - 1;
    point[axis] = rect.hi()[axis];
    let upper = recurse(f, rect, axis, point)?;
    point[axis] = rect.lo()[axis];
    let lower = recurse(f, rect, axis, point)?;
    Ok(upper - lower)
}

/// Increment over the rectangle spanned by two arbitrary points; coordinates
/// may come in either order, each reversed axis flips the sign.
pub(crate) fn signed_increment(f: &FuncSource, a: &[f64], x: &[f64]) -> Result<f64> {
    let mut sign = 1.0;
    let (lo, hi): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(x)
        .map(|(&ai, &xi)| {
            if xi < ai {
                sign = -sign;
                (xi, ai)
            } else {
                (ai, xi)
            }
        })
        .unzip();
    Ok(sign * joint_increment(f, &Rect::new(lo, hi)?)?)
}

/// The anchored function `x ↦ Δⁿ_f[origin, x]`.
///
/// Nothing is cached; every evaluation of the result costs `2^n` evaluations
/// of `f`. Evaluate it onto a grid explicitly when repeated access is needed.
pub fn tilde_transform(f: &FuncSource, origin: &[f64]) -> Result<FuncSource> {
    check_dim(origin.len())?;
    if origin.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: origin.len(),
        });
    }
    if let Some(d) = f.domain() {
        if !d.contains(origin) {
            return Err(Error::domain(format!("anchor {origin:?} lies outside {d}")));
        }
    }
    let inner = f.clone();
    let anchor = origin.to_vec();
    let out = FuncSource::fallible_oracle(f.dim(), move |x| signed_increment(&inner, &anchor, x));
    match f.domain() {
        Some(d) => out.with_domain(d),
        None => Ok(out),
    }
}
