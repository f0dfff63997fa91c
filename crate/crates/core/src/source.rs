//! Function sources: pure oracles or tabulated grid samples.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{check_dim, flat_index, unflatten, GridPartition, GridSample, Rect};

type EvalFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// How a sampled source answers queries that fall between grid vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    /// Only exact grid vertices may be queried.
    #[default]
    VertexOnly,
    /// Value of the nearest vertex (ties go to the lower vertex).
    Nearest,
    /// Multilinear interpolation inside the enclosing cell.
    Multilinear,
}

/// A real-valued function of `n` variables.
///
/// Oracles must be deterministic and free of side effects; every numerical
/// routine assumes that evaluating the same point twice gives the same bits.
#[derive(Clone)]
pub enum FuncSource {
    Oracle {
        dim: usize,
        domain: Option<Rect>,
        f: Arc<EvalFn>,
    },
    Sampled {
        sample: Arc<GridSample>,
        interp: Interp,
    },
}

impl fmt::Debug for FuncSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuncSource::Oracle { dim, domain, .. } => f
                .debug_struct("Oracle")
                .field("dim", dim)
                .field("domain", domain)
                .finish_non_exhaustive(),
            FuncSource::Sampled { sample, interp } => f
                .debug_struct("Sampled")
                .field("vertex_shape", &sample.partition().vertex_shape())
                .field("interp", interp)
                .finish(),
        }
    }
}

impl FuncSource {
    pub fn oracle<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        FuncSource::Oracle {
            dim,
            domain: None,
            f: Arc::new(move |x| Ok(f(x))),
        }
    }

    /// Oracle whose evaluation can itself fail; errors propagate unchanged.
    pub fn fallible_oracle<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        FuncSource::Oracle {
            dim,
            domain: None,
            f: Arc::new(f),
        }
    }

    pub fn sampled(sample: GridSample, interp: Interp) -> Self {
        FuncSource::Sampled {
            sample: Arc::new(sample),
            interp,
        }
    }

    /// Restricts an oracle to `rect`; queries outside become domain errors.
    pub fn with_domain(self, rect: Rect) -> Result<Self> {
        match self {
            FuncSource::Oracle { dim, f, .. } => {
                if rect.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: rect.dim(),
                    });
                }
                Ok(FuncSource::Oracle {
                    dim,
                    domain: Some(rect),
                    f,
                })
            }
            FuncSource::Sampled { .. } => Err(Error::invalid(
                "sampled sources are bounded by their grid; the domain cannot be replaced",
            )),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FuncSource::Oracle { dim, .. } => *dim,
            FuncSource::Sampled { sample, .. } => sample.partition().dim(),
        }
    }

    /// Where the source may be queried; `None` means all of `R^n`.
    pub fn domain(&self) -> Option<Rect> {
        match self {
            FuncSource::Oracle { domain, .. } => domain.clone(),
            FuncSource::Sampled { sample, .. } => Some(sample.partition().rect()),
        }
    }

    pub fn as_sample(&self) -> Option<&GridSample> {
        match self {
            FuncSource::Sampled { sample, .. } => Some(sample),
            FuncSource::Oracle { .. } => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let value = match self {
            FuncSource::Oracle { domain, f, .. } => {
                if let Some(d) = domain {
                    if !d.contains(x) {
                        return Err(Error::domain(format!("point {x:?} lies outside {d}")));
                    }
                }
                f(x)?
            }
            FuncSource::Sampled { sample, interp } => eval_sampled(sample, *interp, x)?,
        };
        if !value.is_finite() {
            return Err(Error::NonFinite {
                point: x.to_vec(),
                value,
            });
        }
        Ok(value)
    }

    /// Evaluates the source at every vertex of `partition`.
    pub fn sample_on(&self, partition: &GridPartition) -> Result<GridSample> {
        let values = vertex_values(self, partition)?;
        GridSample::new(partition.clone(), values)
    }
}

/// Values at every vertex of `partition`, row-major. Evaluation runs in
/// parallel; the output order does not depend on scheduling.
pub(crate) fn vertex_values(f: &FuncSource, partition: &GridPartition) -> Result<Vec<f64>> {
    if partition.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: partition.dim(),
        });
    }
    let shape = partition.vertex_shape();
    (0..partition.num_vertices())
        .into_par_iter()
        .map(|flat| f.eval(&partition.vertex(&unflatten(&shape, flat))))
        .collect()
}

fn eval_sampled(sample: &GridSample, interp: Interp, x: &[f64]) -> Result<f64> {
    let partition = sample.partition();
    let rect = partition.rect();
    if !rect.contains(x) {
        return Err(Error::domain(format!("point {x:?} lies outside the sampled grid {rect}")));
    }
    let shape = partition.vertex_shape();
    match interp {
        Interp::VertexOnly => {
            let idx = x
                .iter()
                .zip(partition.axes())
                .map(|(xi, axis)| axis.binary_search_by(|b| b.total_cmp(xi)).ok())
                .collect::<Option<Vec<usize>>>()
                .ok_or_else(|| {
                    Error::domain(format!(
                        "point {x:?} is not a grid vertex and interpolation is disabled"
                    ))
                })?;
            Ok(sample.values()[flat_index(&shape, &idx)])
        }
        Interp::Nearest => {
            let idx: Vec<usize> = x
                .iter()
                .zip(partition.axes())
                .map(|(&xi, axis)| {
                    let (j, t) = locate(axis, xi);
                    if t > 0.5 {
                        j + 1
                    } else {
                        j
                    }
                })
                .collect();
            Ok(sample.values()[flat_index(&shape, &idx)])
        }
        Interp::Multilinear => {
            let located: Vec<(usize, f64)> = x
                .iter()
                .zip(partition.axes())
                .map(|(&xi, axis)| locate(axis, xi))
                .collect();
            let n = x.len();
            let mut acc = 0.0;
            let mut idx = vec![0; n];
            for bits in 0..1u32 << n {
                let mut w = 1.0;
                for (axis, &(j, t)) in located.iter().enumerate() {
                    if bits >> axis & 1 == 1 {
                        w *= t;
                        idx[axis] = (j + 1).min(shape[axis] - 1);
                    } else {
                        w *= 1.0 - t;
                        idx[axis] = j;
                    }
                }
                if w != 0.0 {
                    acc += w * sample.values()[flat_index(&shape, &idx)];
                }
            }
            Ok(acc)
        }
    }
}

/// Index of the cell containing `x` and the fractional position inside it.
fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    if axis.len() == 1 {
        return (0, 0.0);
    }
    let j = match axis.binary_search_by(|b| b.total_cmp(&x)) {
        Ok(j) => return (j.min(axis.len() - 2), if j == axis.len() - 1 { 1.0 } else { 0.0 }),
        Err(pos) => pos - 1,
    };
    (j, (x - axis[j]) / (axis[j + 1] - axis[j]))
}

/// Extends `f` beyond the upper corner of `rect` by clamping every coordinate
/// that exceeds `rect.hi` back onto it. Coordinates equal to the bound are
/// left untouched, so the wrapper agrees with `f` on all of `rect`.
pub fn clamp_extension(f: FuncSource, rect: &Rect) -> Result<FuncSource> {
    check_dim(rect.dim())?;
    if rect.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: rect.dim(),
        });
    }
    let hi = rect.hi().to_vec();
    Ok(FuncSource::fallible_oracle(f.dim(), move |x| {
        let clamped: Vec<f64> = x.iter().zip(&hi).map(|(&xi, &b)| if xi > b { b } else { xi }).collect();
        f.eval(&clamped)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy_sample() -> GridSample {
        let p = GridPartition::uniform(&Rect::unit(2).unwrap(), &[2, 2]).unwrap();
        FuncSource::oracle(2, |x| x[0] * x[1]).sample_on(&p).unwrap()
    }

    #[test]
    fn oracle_reports_non_finite_values_with_point() {
        let f = FuncSource::oracle(1, |x| 1.0 / x[0]);
        match f.eval(&[0.0]) {
            Err(Error::NonFinite { point, .. }) => assert_eq!(point, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oracle_domain_is_enforced() {
        let f = FuncSource::oracle(2, |x| x[0])
            .with_domain(Rect::unit(2).unwrap())
            .unwrap();
        assert!(f.eval(&[0.5, 0.5]).is_ok());
        assert!(matches!(f.eval(&[1.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(f.eval(&[0.5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn vertex_only_rejects_off_grid_queries() {
        let f = FuncSource::sampled(xy_sample(), Interp::VertexOnly);
        assert_eq!(f.eval(&[0.5, 1.0]).unwrap(), 0.5);
        assert!(matches!(f.eval(&[0.25, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(f.eval(&[1.25, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn multilinear_reproduces_bilinear_function() {
        let f = FuncSource::sampled(xy_sample(), Interp::Multilinear);
        for &(x, y) in &[(0.3, 0.7), (0.0, 1.0), (1.0, 1.0), (0.5, 0.25)] {
            assert!((f.eval(&[x, y]).unwrap() - x * y).abs() < 1e-15);
        }
    }

    #[test]
    fn nearest_snaps_to_vertices() {
        let f = FuncSource::sampled(xy_sample(), Interp::Nearest);
        assert_eq!(f.eval(&[0.3, 0.8]).unwrap(), 0.5);
        assert_eq!(f.eval(&[0.25, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn oracle_is_repeatable() {
        let f = FuncSource::oracle(3, |x| (x[0] * 7.0).sin() * x[1].exp() - x[2]);
        for p in [[0.1, 0.2, 0.3], [0.9, -0.4, 2.0]] {
            assert_eq!(f.eval(&p).unwrap().to_bits(), f.eval(&p).unwrap().to_bits());
        }
    }

    #[test]
    fn clamp_extension_agrees_inside_and_clamps_above() {
        let r = Rect::unit(2).unwrap();
        let f = FuncSource::oracle(2, |x| x[0] + 10.0 * x[1]).with_domain(r.clone()).unwrap();
        let g = clamp_extension(f, &r).unwrap();
        assert_eq!(g.eval(&[0.5, 1.0]).unwrap(), 10.5);
        assert_eq!(g.eval(&[1.7, 1.2]).unwrap(), 11.0);
    }
}
