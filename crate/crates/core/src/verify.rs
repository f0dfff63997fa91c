//! Numerical checks of the differentiation theorems. Each check returns a
//! [`TheoremReport`] comparing a left-hand side with a right-hand side.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::classify::{is_jointly_monotone, ACVerdict, AcClass};
use crate::differentiation::{derivative_field, derivative_field_with, joint_derivative, CellRule, HSchedule};
use crate::error::{Error, Result};
use crate::geometry::{GridPartition, QuadrantSign, Rect};
use crate::increment::joint_increment;
use crate::quadrature::integrate;
use crate::source::FuncSource;
use crate::sum::CompensatedSum;
use crate::variation::{total_variation, RefinePolicy, RoundTrace, StopReason};
use crate::zoo::{Density, Tag, ZooFunction};

/// Tolerance used to certify joint monotonicity as a precondition.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Relative margin allowed on inequalities whose right side is itself a
/// numerical lower bound or a corner sum.
pub const LE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    LebesgueMonotone,
    LebesgueBv,
    QuadrantAgreement,
    FubiniSeries,
    IntegralDifferentiation,
    L1MeanConvergence,
    Ftc,
    ZeroDerivativeRigidity,
}

impl Theorem {
    pub const ALL: [Theorem; 8] = [
        Theorem::LebesgueMonotone,
        Theorem::LebesgueBv,
        Theorem::QuadrantAgreement,
        Theorem::FubiniSeries,
        Theorem::IntegralDifferentiation,
        Theorem::L1MeanConvergence,
        Theorem::Ftc,
        Theorem::ZeroDerivativeRigidity,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Theorem::LebesgueMonotone => "lebesgue_monotone",
            Theorem::LebesgueBv => "lebesgue_bv",
            Theorem::QuadrantAgreement => "quadrant_agreement",
            Theorem::FubiniSeries => "fubini_series",
            Theorem::IntegralDifferentiation => "integral_differentiation",
            Theorem::L1MeanConvergence => "l1_mean_convergence",
            Theorem::Ftc => "ftc",
            Theorem::ZeroDerivativeRigidity => "zero_derivative_rigidity",
        }
    }

    /// Whether the zoo member carries the structure the check needs.
    pub fn applies_to(self, z: &ZooFunction) -> bool {
        let e = &z.entry;
        match self {
            Theorem::LebesgueMonotone => e.has(Tag::JointlyMonotone),
            Theorem::LebesgueBv => true,
            Theorem::QuadrantAgreement => e.has(Tag::Ac) && z.density.is_none(),
            Theorem::FubiniSeries => z.series.is_some(),
            Theorem::IntegralDifferentiation | Theorem::L1MeanConvergence => z.density.is_some(),
            Theorem::Ftc => e.has(Tag::Ac),
            Theorem::ZeroDerivativeRigidity => e.has(Tag::AdditiveSeparable),
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| Error::invalid(format!("unknown theorem `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "EQ")]
    Eq,
}

impl Relation {
    pub fn holds(self, lhs: f64, rhs: f64, slack: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs + slack,
            Relation::Eq => (lhs - rhs).abs() <= slack,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Le => "LE",
            Relation::Eq => "EQ",
        }
    }
}

/// Writes non-finite numbers as `null`.
pub(crate) fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn opt_finite_or_null<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => finite_or_null(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rect: Option<Rect>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<HSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<RefinePolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Cells or points where an estimate did not converge.
    pub failed_cells: usize,
    pub total_cells: usize,
    /// Sub-conditions of the check that failed independently of lhs/rhs.
    pub violations: usize,
    #[serde(serialize_with = "opt_finite_or_null")]
    pub worst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variation_stopped: Option<StopReason>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub variation_trace: Vec<RoundTrace>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sequence: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub function: String,
    pub inputs: Inputs,
    #[serde(serialize_with = "finite_or_null")]
    pub lhs: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub rhs: f64,
    pub relation: Relation,
    #[serde(serialize_with = "finite_or_null")]
    pub slack: f64,
    pub pass: bool,
    pub diagnostics: Diagnostics,
}

impl TheoremReport {
    fn new(
        theorem: Theorem,
        function: &str,
        inputs: Inputs,
        (lhs, rhs, relation, slack): (f64, f64, Relation, f64),
        diagnostics: Diagnostics,
    ) -> Self {
        let pass = relation.holds(lhs, rhs, slack) && diagnostics.violations == 0;
        TheoremReport {
            theorem: theorem.id().to_string(),
            function: function.to_string(),
            inputs,
            lhs,
            rhs,
            relation,
            slack,
            pass,
            diagnostics,
        }
    }

    /// A failed report for a check whose preconditions were not met.
    pub fn rejected(theorem: Theorem, function: &str, relation: Relation, reason: String) -> Self {
        TheoremReport {
            theorem: theorem.id().to_string(),
            function: function.to_string(),
            inputs: Inputs::default(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            relation,
            slack: 0.0,
            pass: false,
            diagnostics: Diagnostics {
                violations: 1,
                notes: vec![reason],
                ..Diagnostics::default()
            },
        }
    }

    /// Recomputes `pass` from the stored fields.
    pub fn is_consistent(&self) -> bool {
        self.pass == (self.relation.holds(self.lhs, self.rhs, self.slack) && self.diagnostics.violations == 0)
    }

    pub fn sort_key(&self) -> (&str, &str) {
        (&self.theorem, &self.function)
    }
}

/// Restricts an unbounded oracle to `rect` so that derivative cubes stay inside it.
fn confine(f: &FuncSource, rect: &Rect) -> Result<FuncSource> {
    match f {
        FuncSource::Oracle { domain: None, .. } => f.clone().with_domain(rect.clone()),
        _ => Ok(f.clone()),
    }
}

fn require_monotone(f: &FuncSource, grid: &GridPartition, what: &str) -> Result<()> {
    is_jointly_monotone(f, grid, MONOTONE_TOL)?.require(what)
}

fn base_inputs(rect: &Rect, grid: &GridPartition, sched: &HSchedule) -> Inputs {
    Inputs {
        rect: Some(rect.clone()),
        grid: Some(grid.cell_shape()),
        schedule: Some(*sched),
        ..Inputs::default()
    }
}

/// Value at the `ceil(q·len)`-th smallest position.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Greater));
    let k = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[k - 1]
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Greater));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// `∫ f⁽ⁿ⁾ ≤ Δⁿ_f[a,b]` for jointly monotone `f`, with every converged
/// derivative cell required to be non-negative.
pub fn check_lebesgue_monotone(
    name: &str,
    f: &FuncSource,
    rect: &Rect,
    grid: &GridPartition,
    sched: &HSchedule,
) -> Result<TheoremReport> {
    let f = confine(f, rect)?;
    let grid = grid.restrict(rect)?;
    require_monotone(&f, &grid, name)?;
    let field = derivative_field_with(&f, &grid, &QuadrantSign::positive(rect.dim()), sched, CellRule::Gauss2)?;
    let (lhs, _) = field.quadrature(|e| Some(e.value.unwrap_or(e.dini_lower)));
    let negative = field
        .estimates
        .iter()
        .filter(|e| e.value.is_some_and(|v| v < -sched.atol))
        .count();
    let rhs = joint_increment(&f, rect)?;
    let mut diagnostics = Diagnostics {
        failed_cells: field.nonconvergent,
        total_cells: field.estimates.len(),
        violations: negative,
        worst: field.estimates.iter().filter_map(|e| e.value).reduce(f64::min),
        ..Diagnostics::default()
    };
    if negative > 0 {
        diagnostics.notes.push(format!("{negative} cells with negative derivative"));
    }
    Ok(TheoremReport::new(
        Theorem::LebesgueMonotone,
        name,
        base_inputs(rect, &grid, sched),
        (lhs, rhs, Relation::Le, LE_MARGIN * rhs.abs().max(1.0)),
        diagnostics,
    ))
}

/// `∫|f⁽ⁿ⁾| ≤ V(f)` for `f` of bounded variation.
pub fn check_lebesgue_bv(
    name: &str,
    f: &FuncSource,
    rect: &Rect,
    grid: &GridPartition,
    sched: &HSchedule,
    policy: &RefinePolicy,
) -> Result<TheoremReport> {
    let f = confine(f, rect)?;
    let grid = grid.restrict(rect)?;
    let variation = total_variation(&f, rect, policy)?;
    if variation.stopped != StopReason::Converged {
        return Err(Error::Precondition {
            reason: format!("variation of {name} stopped with {:?}", variation.stopped),
            witness: None,
        });
    }
    let field = derivative_field_with(&f, &grid, &QuadrantSign::positive(rect.dim()), sched, CellRule::Gauss2)?;
    let (lhs, _) = field.quadrature(|e| {
        Some(match e.value {
            Some(v) => v.abs(),
            None if e.dini_lower <= 0.0 && e.dini_upper >= 0.0 => 0.0,
            None => e.dini_lower.abs().min(e.dini_upper.abs()),
        })
    });
    let rhs = variation.lower_bound;
    let diagnostics = Diagnostics {
        failed_cells: field.nonconvergent,
        total_cells: field.estimates.len(),
        variation_stopped: Some(variation.stopped),
        variation_trace: variation.trace,
        ..Diagnostics::default()
    };
    let mut inputs = base_inputs(rect, &grid, sched);
    inputs.policy = Some(*policy);
    Ok(TheoremReport::new(
        Theorem::LebesgueBv,
        name,
        inputs,
        (lhs, rhs, Relation::Le, LE_MARGIN * rhs.abs().max(1.0)),
        diagnostics,
    ))
}

/// All `2ⁿ` quadrant derivatives agree: the 95th percentile of the per-point
/// spread over convergent points must not exceed `10·rtol`.
pub fn check_quadrant_agreement(
    name: &str,
    f: &FuncSource,
    points: &[Vec<f64>],
    sched: &HSchedule,
) -> Result<TheoremReport> {
    let quadrants = QuadrantSign::all(f.dim());
    let spreads = points
        .par_iter()
        .map(|x| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for q in &quadrants {
                match joint_derivative(f, x, q, sched)?.value {
                    Some(v) => {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    None => return Ok(None),
                }
            }
            Ok(Some(hi - lo))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let mut converged: Vec<f64> = spreads.iter().flatten().copied().collect();
    let worst = converged.iter().copied().reduce(f64::max);
    let lhs = quantile(&mut converged, 0.95);
    let diagnostics = Diagnostics {
        failed_cells: spreads.len() - converged.len(),
        total_cells: spreads.len(),
        worst,
        ..Diagnostics::default()
    };
    let inputs = Inputs {
        schedule: Some(*sched),
        points: Some(points.len()),
        ..Inputs::default()
    };
    Ok(TheoremReport::new(
        Theorem::QuadrantAgreement,
        name,
        inputs,
        (lhs, 10.0 * sched.rtol, Relation::Le, 0.0),
        diagnostics,
    ))
}

/// Sum of sources, evaluated term by term.
pub fn sum_of(terms: &[FuncSource]) -> Result<FuncSource> {
    let dim = terms.first().map(FuncSource::dim).ok_or_else(|| Error::invalid("empty series"))?;
    if terms.iter().any(|t| t.dim() != dim) {
        return Err(Error::invalid("series terms differ in dimension"));
    }
    let terms = terms.to_vec();
    Ok(FuncSource::fallible_oracle(dim, move |x| {
        let mut acc = CompensatedSum::new();
        for t in &terms {
            acc.add(t.eval(x)?);
        }
        Ok(acc.value())
    }))
}

/// Derivative of the partial sum against the sum of term derivatives, cell by
/// cell. Passes when the median discrepancy is at most `tol` and at least 95%
/// of cells lie within `10·tol`.
pub fn check_fubini_series(
    name: &str,
    terms: &[FuncSource],
    rect: &Rect,
    grid: &GridPartition,
    sched: &HSchedule,
    tol: f64,
) -> Result<TheoremReport> {
    let grid = grid.restrict(rect)?;
    let terms = terms.iter().map(|t| confine(t, rect)).collect::<Result<Vec<_>>>()?;
    for (i, t) in terms.iter().enumerate() {
        require_monotone(t, &grid, &format!("term {} of {name}", i + 1))?;
    }
    let quadrant = QuadrantSign::positive(rect.dim());
    let partial = confine(&sum_of(&terms)?, rect)?;
    let whole = derivative_field(&partial, &grid, &quadrant, sched)?;
    let fields = terms
        .iter()
        .map(|t| derivative_field(t, &grid, &quadrant, sched))
        .collect::<Result<Vec<_>>>()?;
    let mut discrepancies = Vec::with_capacity(whole.estimates.len());
    for (cell, est) in whole.estimates.iter().enumerate() {
        let termwise: Option<f64> = fields.iter().map(|fd| fd.estimates[cell].value).sum();
        if let (Some(a), Some(b)) = (est.value, termwise) {
            discrepancies.push((a - b).abs());
        }
    }
    let total = whole.estimates.len();
    let within = discrepancies.iter().filter(|&&d| d <= 10.0 * tol).count();
    let worst = discrepancies.iter().copied().reduce(f64::max);
    let lhs = median(&mut discrepancies);
    let mut diagnostics = Diagnostics {
        failed_cells: total - discrepancies.len(),
        total_cells: total,
        worst,
        ..Diagnostics::default()
    };
    if (within as f64) < 0.95 * total as f64 {
        diagnostics.violations = 1;
        diagnostics.notes.push(format!("only {within} of {total} cells within 10·tol"));
    }
    let mut inputs = base_inputs(rect, &grid, sched);
    inputs.tol = Some(tol);
    inputs.terms = Some(terms.len());
    Ok(TheoremReport::new(Theorem::FubiniSeries, name, inputs, (lhs, tol, Relation::Le, 0.0), diagnostics))
}

fn axis_cuts(grid: &GridPartition) -> Vec<Vec<f64>> {
    grid.axes().to_vec()
}

/// `x ↦ ∫_a^x density`, by Gauss–Legendre on the pieces of `quad_grid`.
pub fn integral_function(density: &FuncSource, rect: &Rect, quad_grid: &GridPartition) -> Result<FuncSource> {
    let a = rect.lo().to_vec();
    let cuts = axis_cuts(quad_grid);
    let density = density.clone();
    let out = FuncSource::fallible_oracle(rect.dim(), move |x| {
        let r = Rect::new(a.clone(), x.to_vec())?;
        integrate(|u| density.eval(u), &r, &cuts, 1)
    });
    out.with_domain(rect.clone())
}

/// The joint derivative of `x ↦ ∫_a^x density` reproduces the density at the
/// given continuity points; the 95th-percentile error is compared with `tol`.
pub fn check_integral_differentiation(
    name: &str,
    density: &FuncSource,
    rect: &Rect,
    points: &[Vec<f64>],
    sched: &HSchedule,
    quad_grid: &GridPartition,
    tol: f64,
) -> Result<TheoremReport> {
    let big_f = integral_function(density, rect, quad_grid)?;
    let quadrant = QuadrantSign::positive(rect.dim());
    let errors = points
        .par_iter()
        .map(|x| {
            let est = joint_derivative(&big_f, x, &quadrant, sched)?;
            let exact = density.eval(x)?;
            Ok(est.value.map(|v| (v - exact).abs()))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let failed = errors.iter().filter(|e| e.is_none()).count();
    let mut all: Vec<f64> = errors.iter().map(|e| e.unwrap_or(f64::INFINITY)).collect();
    let worst = all.iter().copied().reduce(f64::max);
    let lhs = quantile(&mut all, 0.95);
    let diagnostics = Diagnostics {
        failed_cells: failed,
        total_cells: points.len(),
        worst,
        ..Diagnostics::default()
    };
    let inputs = Inputs {
        rect: Some(rect.clone()),
        grid: Some(quad_grid.cell_shape()),
        schedule: Some(*sched),
        tol: Some(tol),
        points: Some(points.len()),
        ..Inputs::default()
    };
    Ok(TheoremReport::new(
        Theorem::IntegralDifferentiation,
        name,
        inputs,
        (lhs, tol, Relation::Le, 0.0),
        diagnostics,
    ))
}

/// Panels per quadrature piece for the outer integral of the L¹ distance.
const L1_OUTER_PANELS: usize = 8;
const L1_GROWTH_SLACK: f64 = 1.1;
/// Distances below this are quadrature noise; growth among them is ignored.
const L1_NOISE_FLOOR: f64 = 1e-12;

/// `∫|F_h - f|` over `rect` with `F_h(x) = h⁻ⁿ ∫_{[x, x+h]} f`.
pub fn l1_distance(density: &FuncSource, rect: &Rect, h: f64, quad_grid: &GridPartition) -> Result<f64> {
    let cuts = axis_cuts(quad_grid);
    let n = rect.dim();
    let scale = h.powi(n as i32);
    integrate(
        |x| {
            let cube = Rect::new(x.to_vec(), x.iter().map(|v| v + h).collect())?;
            let avg = integrate(|u| density.eval(u), &cube, &cuts, 1)? / scale;
            Ok((avg - density.eval(x)?).abs())
        },
        rect,
        &cuts,
        L1_OUTER_PANELS,
    )
}

/// The averaged functions `F_h` approach the density in `L¹`: distances must
/// not grow by more than 10% between consecutive steps and the last one must
/// be at most `tol`.
pub fn check_l1_mean_convergence(
    name: &str,
    density: &FuncSource,
    rect: &Rect,
    h_list: &[f64],
    quad_grid: &GridPartition,
    tol: f64,
) -> Result<TheoremReport> {
    if h_list.is_empty() || h_list.iter().any(|&h| !(h > 0.0)) || h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("h_list must be positive and strictly decreasing"));
    }
    let distances = h_list
        .par_iter()
        .map(|&h| l1_distance(density, rect, h, quad_grid))
        .collect::<Result<Vec<f64>>>()?;
    let growth = distances
        .windows(2)
        .filter(|w| w[1] > L1_GROWTH_SLACK * w[0] + L1_NOISE_FLOOR)
        .count();
    let lhs = *distances.last().expect("non-empty");
    let mut diagnostics = Diagnostics {
        violations: growth,
        sequence: distances,
        ..Diagnostics::default()
    };
    if growth > 0 {
        diagnostics.notes.push(format!("{growth} steps where the distance grew by more than 10%"));
    }
    let inputs = Inputs {
        rect: Some(rect.clone()),
        grid: Some(quad_grid.cell_shape()),
        tol: Some(tol),
        h_list: Some(h_list.to_vec()),
        ..Inputs::default()
    };
    Ok(TheoremReport::new(
        Theorem::L1MeanConvergence,
        name,
        inputs,
        (lhs, tol, Relation::Le, 0.0),
        diagnostics,
    ))
}

/// `Δⁿ_f[a,b] = ∫ f⁽ⁿ⁾` for absolutely continuous `f`. Non-convergent cells are
/// left out of the integral and counted.
pub fn check_ftc(
    name: &str,
    f: &FuncSource,
    rect: &Rect,
    grid: &GridPartition,
    sched: &HSchedule,
    tol: f64,
    verdict: Option<&ACVerdict>,
) -> Result<TheoremReport> {
    if let Some(v) = verdict {
        if v.verdict != AcClass::AbsolutelyContinuous {
            return Err(Error::Precondition {
                reason: format!(
                    "{name} is classified {:?} (gap {:e}, V {:e}, integral {:e})",
                    v.verdict, v.gap, v.variation_lower_bound, v.integral_of_abs_derivative
                ),
                witness: None,
            });
        }
    }
    let f = confine(f, rect)?;
    let grid = grid.restrict(rect)?;
    let field = derivative_field_with(&f, &grid, &QuadrantSign::positive(rect.dim()), sched, CellRule::Gauss2)?;
    let (rhs, skipped) = field.quadrature(|e| e.value);
    let lhs = joint_increment(&f, rect)?;
    let diagnostics = Diagnostics {
        failed_cells: skipped,
        total_cells: field.estimates.len(),
        ..Diagnostics::default()
    };
    let mut inputs = base_inputs(rect, &grid, sched);
    inputs.tol = Some(tol);
    Ok(TheoremReport::new(
        Theorem::Ftc,
        name,
        inputs,
        (lhs, rhs, Relation::Eq, tol * rhs.abs().max(1.0)),
        diagnostics,
    ))
}

/// A function with vanishing joint derivative has zero increment.
pub fn check_zero_derivative_rigidity(name: &str, f: &FuncSource, rect: &Rect, atol: f64) -> Result<TheoremReport> {
    let lhs = joint_increment(f, rect)?;
    let inputs = Inputs {
        rect: Some(rect.clone()),
        tol: Some(atol),
        ..Inputs::default()
    };
    Ok(TheoremReport::new(
        Theorem::ZeroDerivativeRigidity,
        name,
        inputs,
        (lhs, 0.0, Relation::Eq, atol),
        Diagnostics::default(),
    ))
}

/// Settings shared by every check of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Cells per axis; `None` picks 32 for `n ≤ 3` and 8 above.
    pub grid: Option<Vec<usize>>,
    pub rect: Option<Rect>,
    pub tol: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub policy: RefinePolicy,
    pub seed: u64,
    pub points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            grid: None,
            rect: None,
            tol: None,
            rtol: HSchedule::DEFAULT_RTOL,
            atol: HSchedule::DEFAULT_ATOL,
            policy: RefinePolicy::default(),
            seed: 0,
            points: 100,
        }
    }
}

pub fn default_cells_per_axis(dim: usize) -> usize {
    if dim <= 3 {
        32
    } else {
        8
    }
}

/// Default `tol` of each theorem when none is configured.
pub fn default_tol(theorem: Theorem) -> f64 {
    match theorem {
        Theorem::FubiniSeries => 1e-6,
        Theorem::IntegralDifferentiation => 1e-4,
        Theorem::L1MeanConvergence => 2e-2,
        Theorem::Ftc => 1e-3,
        Theorem::ZeroDerivativeRigidity => 1e-12,
        Theorem::LebesgueMonotone | Theorem::LebesgueBv | Theorem::QuadrantAgreement => 0.0,
    }
}

pub const DEFAULT_H_LIST: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

impl VerifyConfig {
    pub fn rect_for(&self, z: &ZooFunction) -> Rect {
        self.rect.clone().unwrap_or_else(|| z.entry.rect.clone())
    }

    pub fn grid_for(&self, rect: &Rect) -> Result<GridPartition> {
        let counts = match &self.grid {
            Some(c) if c.len() == rect.dim() => c.clone(),
            Some(c) => {
                return Err(Error::DimensionMismatch {
                    expected: rect.dim(),
                    found: c.len(),
                })
            }
            None => vec![default_cells_per_axis(rect.dim()); rect.dim()],
        };
        GridPartition::uniform(rect, &counts)
    }

    pub fn schedule_for(&self, rect: &Rect) -> HSchedule {
        HSchedule {
            rtol: self.rtol,
            atol: self.atol,
            ..HSchedule::for_rect(rect)
        }
    }

    fn rng(&self, theorem: Theorem, id: &str) -> ChaCha8Rng {
        // Each (theorem, function) pair gets its own stream so results do not
        // depend on which other checks run.
        let mut key = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for b in theorem.id().bytes().chain([0]).chain(id.bytes()) {
            key = (key ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(key)
    }
}

/// Uniform random points with every coordinate at least `margin·side` away
/// from the faces of `rect`.
pub fn interior_points<R: Rng>(rng: &mut R, rect: &Rect, count: usize, margin: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..rect.dim())
                .map(|i| {
                    let (a, s) = (rect.lo()[i], rect.side(i));
                    a + s * rng.gen_range(margin..1.0 - margin)
                })
                .collect()
        })
        .collect()
}

/// Random interior continuity points of a density.
pub fn density_points<R: Rng>(rng: &mut R, density: &Density, rect: &Rect, count: usize) -> Vec<Vec<f64>> {
    let margin = 1e-2 * rect.min_side();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = interior_points(rng, rect, 1, 0.02).pop().expect("one point");
        if density.is_continuity_point(&p, margin) {
            out.push(p);
        }
    }
    out
}

/// Quadrature grid for a density: its breakpoints inside `rect`.
pub fn density_quad_grid(density: &Density, rect: &Rect) -> Result<GridPartition> {
    GridPartition::trivial(rect).merge(&GridPartition::new(
        (0..rect.dim())
            .map(|i| {
                let (a, b) = (rect.lo()[i], rect.hi()[i]);
                let mut axis = vec![a];
                axis.extend(density.breakpoints[i].iter().copied().filter(|&c| a < c && c < b));
                axis.push(b);
                axis
            })
            .collect(),
    )?)
}

/// Runs one theorem on one zoo member with the batch settings. Precondition
/// failures become failed reports rather than errors.
pub fn run_check(theorem: Theorem, z: &ZooFunction, cfg: &VerifyConfig) -> Result<TheoremReport> {
    let id = z.entry.id.as_str();
    let rect = cfg.rect_for(z);
    if rect.dim() != z.entry.dim {
        return Err(Error::DimensionMismatch {
            expected: z.entry.dim,
            found: rect.dim(),
        });
    }
    let tol = cfg.tol.unwrap_or_else(|| default_tol(theorem));
    let sched = cfg.schedule_for(&rect);
    let mut rng = cfg.rng(theorem, id);
    let missing = |what: &str| Error::Precondition {
        reason: format!("{id} has no {what}"),
        witness: None,
    };
    let result = match theorem {
        Theorem::LebesgueMonotone => check_lebesgue_monotone(id, &z.source, &rect, &cfg.grid_for(&rect)?, &sched),
        Theorem::LebesgueBv => check_lebesgue_bv(id, &z.source, &rect, &cfg.grid_for(&rect)?, &sched, &cfg.policy),
        Theorem::QuadrantAgreement => {
            let f = confine(&z.source, &rect)?;
            let points = interior_points(&mut rng, &rect, cfg.points, 1.0 / 16.0);
            check_quadrant_agreement(id, &f, &points, &sched)
        }
        Theorem::FubiniSeries => match &z.series {
            Some(series) => {
                let k = series.truncation_for(cfg.atol);
                check_fubini_series(id, &series.terms(k), &rect, &cfg.grid_for(&rect)?, &sched, tol)
            }
            None => Err(missing("series representation")),
        },
        Theorem::IntegralDifferentiation => match &z.density {
            Some(d) => {
                let points = density_points(&mut rng, d, &rect, 2 * cfg.points);
                check_integral_differentiation(id, &d.density, &rect, &points, &sched, &density_quad_grid(d, &rect)?, tol)
            }
            None => Err(missing("density")),
        },
        Theorem::L1MeanConvergence => match &z.density {
            Some(d) => check_l1_mean_convergence(id, &d.density, &rect, &DEFAULT_H_LIST, &density_quad_grid(d, &rect)?, tol),
            None => Err(missing("density")),
        },
        Theorem::Ftc => check_ftc(id, &z.source, &rect, &cfg.grid_for(&rect)?, &sched, tol, None),
        Theorem::ZeroDerivativeRigidity => check_zero_derivative_rigidity(id, &z.source, &rect, tol),
    };
    let relation = match theorem {
        Theorem::Ftc | Theorem::ZeroDerivativeRigidity => Relation::Eq,
        _ => Relation::Le,
    };
    match result {
        Err(e @ Error::Precondition { .. }) => Ok(TheoremReport::rejected(theorem, id, relation, e.to_string())),
        other => other,
    }
}

/// Runs every requested pair concurrently; the result is sorted by
/// `(theorem, function)` and does not depend on scheduling.
pub fn run_batch(pairs: &[(Theorem, &ZooFunction)], cfg: &VerifyConfig) -> Result<Vec<TheoremReport>> {
    let mut reports = pairs
        .par_iter()
        .map(|(t, z)| run_check(*t, z, cfg))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{zoo_build, Params};

    fn zoo(id: &str) -> ZooFunction {
        zoo_build(id, &Params::new()).unwrap()
    }

    fn small() -> VerifyConfig {
        VerifyConfig {
            grid: Some(vec![8, 8]),
            points: 10,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn product_monotone_check_is_tight() {
        let r = run_check(Theorem::LebesgueMonotone, &zoo("coordinate_product"), &small()).unwrap();
        assert!(r.pass && r.is_consistent());
        assert!((r.lhs - 1.0).abs() < 1e-9 && r.rhs == 1.0);
    }

    #[test]
    fn non_monotone_input_is_rejected_with_witness() {
        let z = zoo("neg_product");
        let rect = Rect::unit(2).unwrap();
        let grid = GridPartition::uniform(&rect, &[4, 4]).unwrap();
        let err = check_lebesgue_monotone("neg_product", &z.source, &rect, &grid, &HSchedule::for_rect(&rect));
        assert!(matches!(err, Err(Error::Precondition { witness: Some(_), .. })));
        let r = run_check(Theorem::LebesgueMonotone, &z, &small()).unwrap();
        assert!(!r.pass && r.is_consistent());
        assert!(r.lhs.is_nan());
    }

    #[test]
    fn kink_bv_check() {
        let r = run_check(Theorem::LebesgueBv, &zoo("kink"), &small()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.lhs.abs() < 1e-9 && (r.rhs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quadrant_agreement_on_product() {
        let r = run_check(Theorem::QuadrantAgreement, &zoo("coordinate_product"), &small()).unwrap();
        assert!(r.pass);
        assert!(r.lhs < 1e-9);
    }

    #[test]
    fn single_term_series_is_self_consistent() {
        let z = zoo("geometric_series");
        let rect = Rect::unit(2).unwrap();
        let grid = GridPartition::uniform(&rect, &[4, 4]).unwrap();
        let terms = z.series.unwrap().terms(1);
        let r = check_fubini_series("g", &terms, &rect, &grid, &HSchedule::for_rect(&rect), 1e-12).unwrap();
        assert!(r.pass);
        assert_eq!(r.lhs, 0.0);
    }

    #[test]
    fn constant_density_reproduced() {
        let r = run_check(Theorem::IntegralDifferentiation, &zoo("density_constant"), &small()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.lhs < 1e-9);
    }

    #[test]
    fn l1_distance_of_linear_density_is_h() {
        let z = zoo("density_linear");
        let rect = Rect::unit(2).unwrap();
        let d = z.density.unwrap();
        let q = density_quad_grid(&d, &rect).unwrap();
        let v = l1_distance(&d.density, &rect, 0.05, &q).unwrap();
        assert!((v - 0.05).abs() < 1e-12, "{v}");
    }

    #[test]
    fn ftc_and_rigidity() {
        let r = run_check(Theorem::Ftc, &zoo("power_product"), &small()).unwrap();
        assert!(r.pass && (r.rhs - 1.0).abs() < 1e-6);
        let r = run_check(Theorem::ZeroDerivativeRigidity, &zoo("additive_separable"), &small()).unwrap();
        assert!(r.pass && r.lhs.abs() <= 1e-12);
    }

    #[test]
    fn ftc_refuses_singular_verdict() {
        let v = ACVerdict {
            verdict: AcClass::SingularPartDetected,
            integral_of_abs_derivative: 0.0,
            variation_lower_bound: 1.0,
            gap: 1.0,
            tolerance: 1e-3,
            variation_stopped: StopReason::Converged,
            nonconvergent_cells: 0,
            total_cells: 1,
            local: vec![],
        };
        let z = zoo("cantor_product");
        let rect = Rect::unit(2).unwrap();
        let grid = GridPartition::uniform(&rect, &[2, 2]).unwrap();
        let res = check_ftc("c", &z.source, &rect, &grid, &HSchedule::for_rect(&rect), 1e-3, Some(&v));
        assert!(matches!(res, Err(Error::Precondition { .. })));
    }

    #[test]
    fn report_json_writes_null_for_nan() {
        let r = TheoremReport::rejected(Theorem::Ftc, "x", Relation::Eq, "no".into());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"lhs\":null"));
    }

    #[test]
    fn quantiles() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&mut v, 0.95), 95.0);
        assert_eq!(median(&mut [3.0, 1.0, 2.0, 10.0]), 2.5);
        assert!(quantile(&mut [], 0.5).is_nan());
    }

    #[test]
    fn theorem_ids_round_trip() {
        for t in Theorem::ALL {
            assert_eq!(t.id().parse::<Theorem>().unwrap(), t);
        }
    }
}
