//! Built-in functions with known increments, variations and derivatives.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, LN_2};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, Rect};
use crate::source::FuncSource;

pub const CANTOR_DEPTH: usize = 20;

/// Terms summed when a series family is used as a single function; the
/// remaining tail is below `2^-60`.
const SERIES_TERMS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    JointlyMonotone,
    #[serde(rename = "AC")]
    Ac,
    Singular,
    AdditiveSeparable,
    Series,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::JointlyMonotone => "JointlyMonotone",
            Tag::Ac => "AC",
            Tag::Singular => "Singular",
            Tag::AdditiveSeparable => "AdditiveSeparable",
            Tag::Series => "Series",
        })
    }
}

/// Constructor parameters as `key=value` strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    /// Parses `key=value`.
    pub fn insert_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("parameter `{pair}` is not of the form key=value")))?;
        self.0.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::invalid(format!("parameter {key}={s} is not valid"))),
        }
    }

    fn only(&self, id: &str, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::invalid(format!("`{id}` does not take parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Metadata and ground truth of a zoo member on its reference rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub id: String,
    pub dim: usize,
    pub params: BTreeMap<String, String>,
    pub tags: Vec<Tag>,
    pub rect: Rect,
    pub increment: Option<f64>,
    pub variation: Option<f64>,
    /// Closed form of the joint derivative, as text.
    pub derivative: Option<String>,
}

impl ZooEntry {
    pub fn has(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }
}

type TermFn = dyn Fn(usize) -> FuncSource + Send + Sync;

/// A convergent series `Σ_{i≥1} f_i` of jointly monotone terms.
#[derive(Clone)]
pub struct Series {
    term: Arc<TermFn>,
    /// `Σ_{i>K} sup|f_i|` on the reference rectangle is `tail_ratio^K`.
    tail_ratio: f64,
}

impl fmt::Debug for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Series").field("tail_ratio", &self.tail_ratio).finish_non_exhaustive()
    }
}

impl Series {
    /// The `i`-th term, starting at 1.
    pub fn term(&self, i: usize) -> FuncSource {
        (self.term)(i)
    }

    pub fn terms(&self, k: usize) -> Vec<FuncSource> {
        (1..=k).map(|i| self.term(i)).collect()
    }

    pub fn tail_bound(&self, k: usize) -> f64 {
        self.tail_ratio.powi(k as i32)
    }

    /// Smallest `K` whose tail bound is below `atol`.
    pub fn truncation_for(&self, atol: f64) -> usize {
        (1..=1000).find(|&k| self.tail_bound(k) < atol).unwrap_or(1000)
    }
}

/// An integrable density together with the lines where it may jump.
#[derive(Debug, Clone)]
pub struct Density {
    pub density: FuncSource,
    /// Per-axis coordinates of possible discontinuities.
    pub breakpoints: Vec<Vec<f64>>,
}

impl Density {
    /// True when every coordinate of `x` is at least `margin` away from the
    /// breakpoints of its axis.
    pub fn is_continuity_point(&self, x: &[f64], margin: f64) -> bool {
        x.iter()
            .zip(&self.breakpoints)
            .all(|(xi, bs)| bs.iter().all(|b| (xi - b).abs() >= margin))
    }
}

#[derive(Debug, Clone)]
pub struct ZooFunction {
    pub entry: ZooEntry,
    pub source: FuncSource,
    pub series: Option<Series>,
    pub density: Option<Density>,
}

pub const ZOO_IDS: &[&str] = &[
    "additive_separable",
    "atom_cdf",
    "cantor_product",
    "constant",
    "coordinate_product",
    "density_constant",
    "density_indicator",
    "density_linear",
    "geometric_series",
    "jump_atom_series",
    "kink",
    "neg_product",
    "power_product",
    "quartic_minus_product",
    "sin_product",
];

/// Cantor function by `depth` levels of the ternary self-similarity; at
/// exhaustion the remaining argument is returned linearly.
pub fn cantor(x: f64, depth: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let mut x = x;
    let mut offset = 0.0;
    let mut scale = 1.0;
    for _ in 0..depth {
        if x < 1.0 / 3.0 {
            x *= 3.0;
        } else if x > 2.0 / 3.0 {
            offset += 0.5 * scale;
            x = 3.0 * x - 2.0;
        } else {
            return offset + 0.5 * scale;
        }
        scale *= 0.5;
    }
    offset + scale * x
}

/// `1` for `t ≥ 0`, else `0`.
fn heaviside(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Jump locations of the `i`-th atom of the jump series.
pub fn jump_atom_location(i: usize) -> (f64, f64) {
    let q = (1 + (5 * i) % 11) as f64 / 12.0;
    let r = (1 + (7 * i) % 11) as f64 / 12.0;
    (q, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Vec<f64>,
    pub mass: f64,
}

/// Parses `x1,..,xn@m;...`.
pub fn parse_atoms(s: &str) -> Result<Vec<Atom>> {
    s.split(';')
        .filter(|a| !a.trim().is_empty())
        .map(|a| {
            let (p, m) = a
                .split_once('@')
                .ok_or_else(|| Error::invalid(format!("atom `{a}` is not of the form x1,..,xn@mass")))?;
            let point = p
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::invalid(format!("bad atom coordinates `{p}`")))?;
            let mass: f64 = m.trim().parse().map_err(|_| Error::invalid(format!("bad atom mass `{m}`")))?;
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(Error::invalid(format!("atom mass must be non-negative, got {mass}")));
            }
            if point.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!("atom coordinates must be finite: `{p}`")));
            }
            Ok(Atom { point, mass })
        })
        .collect()
}

fn product(x: &[f64]) -> f64 {
    x.iter().product()
}

struct Built {
    source: FuncSource,
    tags: Vec<Tag>,
    rect: Rect,
    increment: f64,
    variation: f64,
    derivative: &'static str,
    series: Option<Series>,
    density: Option<Density>,
}

impl Built {
    fn new(source: FuncSource, tags: &[Tag], rect: Rect, increment: f64, variation: f64, derivative: &'static str) -> Self {
        Built {
            source,
            tags: tags.to_vec(),
            rect,
            increment,
            variation,
            derivative,
            series: None,
            density: None,
        }
    }

    fn with_density(mut self, density: FuncSource, breakpoints: Vec<Vec<f64>>) -> Self {
        self.density = Some(Density { density, breakpoints });
        self
    }

    fn with_series(mut self, series: Series) -> Self {
        self.series = Some(series);
        self
    }
}

fn dim_param(p: &Params) -> Result<usize> {
    let n: usize = p.get("n", 2)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    check_dim(n)?;
    Ok(n)
}

/// Builds a zoo member. Unknown ids and parameters are errors.
pub fn zoo_build(id: &str, params: &Params) -> Result<ZooFunction> {
    let mut resolved = BTreeMap::new();
    let series_total = 1.0 - 0.5f64.powi(SERIES_TERMS as i32);
    let built = match id {
        "coordinate_product" | "neg_product" | "power_product" => {
            params.only(id, &["n"])?;
            let n = dim_param(params)?;
            resolved.insert("n".into(), n.to_string());
            let rect = Rect::unit(n)?;
            match id {
                "coordinate_product" => Built::new(FuncSource::oracle(n, product), &[Tag::JointlyMonotone, Tag::Ac], rect, 1.0, 1.0, "1"),
                "neg_product" => Built::new(FuncSource::oracle(n, |x| -product(x)), &[Tag::Ac], rect, -1.0, 1.0, "-1"),
                _ => Built::new(
                    FuncSource::oracle(n, |x| x.iter().map(|v| v * v).product()),
                    &[Tag::JointlyMonotone, Tag::Ac],
                    rect,
                    1.0,
                    1.0,
                    "2^n prod x_i",
                ),
            }
        }
        "quartic_minus_product" => {
            params.only(id, &[])?;
            Built::new(
                FuncSource::oracle(2, |x| x[0] * x[0] * x[1] * x[1] - x[0] * x[1]),
                &[Tag::Ac],
                Rect::unit(2)?,
                0.0,
                0.375 + 0.5 * LN_2,
                "4xy - 1",
            )
        }
        "additive_separable" => {
            params.only(id, &[])?;
            Built::new(
                FuncSource::oracle(2, |x| x[0].exp() + (1.0 + x[1]).ln()),
                &[Tag::AdditiveSeparable, Tag::Ac, Tag::JointlyMonotone],
                Rect::unit(2)?,
                0.0,
                0.0,
                "0",
            )
        }
        "constant" => {
            params.only(id, &["n", "value"])?;
            let n = dim_param(params)?;
            let c: f64 = params.get("value", 1.0)?;
            if !c.is_finite() {
                return Err(Error::invalid("value must be finite"));
            }
            resolved.insert("n".into(), n.to_string());
            resolved.insert("value".into(), format!("{c:?}"));
            Built::new(
                FuncSource::oracle(n, move |_| c),
                &[Tag::AdditiveSeparable, Tag::Ac, Tag::JointlyMonotone],
                Rect::unit(n)?,
                0.0,
                0.0,
                "0",
            )
        }
        "sin_product" => {
            params.only(id, &[])?;
            Built::new(
                FuncSource::oracle(2, |x| x[0].sin() * x[1].sin()),
                &[Tag::JointlyMonotone, Tag::Ac],
                Rect::new(vec![0.0; 2], vec![FRAC_PI_2; 2])?,
                1.0,
                1.0,
                "cos x cos y",
            )
        }
        "cantor_product" => {
            params.only(id, &["n", "depth"])?;
            let n = dim_param(params)?;
            let depth: usize = params.get("depth", CANTOR_DEPTH)?;
            if depth == 0 || depth > 60 {
                return Err(Error::invalid("depth must lie in 1..=60"));
            }
            resolved.insert("n".into(), n.to_string());
            resolved.insert("depth".into(), depth.to_string());
            Built::new(
                FuncSource::oracle(n, move |x| x.iter().map(|&v| cantor(v, depth)).product()),
                &[Tag::JointlyMonotone, Tag::Singular],
                Rect::unit(n)?,
                1.0,
                1.0,
                "0 off the Cantor set",
            )
        }
        "atom_cdf" => {
            params.only(id, &["atoms"])?;
            let atoms = match params.0.get("atoms") {
                Some(s) => parse_atoms(s)?,
                None => vec![Atom {
                    point: vec![0.5, 0.5],
                    mass: 1.0,
                }],
            };
            let n = atoms.first().map_or(2, |a| a.point.len());
            if n == 0 || atoms.iter().any(|a| a.point.len() != n) {
                return Err(Error::invalid("all atoms must have the same positive dimension"));
            }
            check_dim(n)?;
            let inside: f64 = atoms
                .iter()
                .filter(|a| a.point.iter().all(|&c| c > 0.0 && c <= 1.0))
                .map(|a| a.mass)
                .sum();
            let text: Vec<String> = atoms
                .iter()
                .map(|a| {
                    let p: Vec<String> = a.point.iter().map(|c| format!("{c:?}")).collect();
                    format!("{}@{:?}", p.join(","), a.mass)
                })
                .collect();
            resolved.insert("atoms".into(), text.join(";"));
            let source = FuncSource::oracle(n, move |x| {
                atoms
                    .iter()
                    .filter(|a| a.point.iter().zip(x).all(|(p, xi)| heaviside(xi - p) == 1.0))
                    .map(|a| a.mass)
                    .sum()
            });
            Built::new(source, &[Tag::JointlyMonotone, Tag::Singular], Rect::unit(n)?, inside, inside, "0 off the jump lines")
        }
        "kink" => {
            params.only(id, &[])?;
            Built::new(
                FuncSource::oracle(2, |x| (x[0] + x[1] - 1.0).abs()),
                &[Tag::JointlyMonotone, Tag::Singular],
                Rect::unit(2)?,
                2.0,
                2.0,
                "0 off the line x + y = 1",
            )
        }
        "density_constant" => {
            params.only(id, &["n", "c"])?;
            let n = dim_param(params)?;
            let c: f64 = params.get("c", 3.0)?;
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::invalid("c must be a non-negative number"));
            }
            resolved.insert("n".into(), n.to_string());
            resolved.insert("c".into(), format!("{c:?}"));
            Built::new(FuncSource::oracle(n, move |x| c * product(x)), &[Tag::JointlyMonotone, Tag::Ac], Rect::unit(n)?, c, c, "c")
                .with_density(FuncSource::oracle(n, move |_| c), vec![Vec::new(); n])
        }
        "density_linear" => {
            params.only(id, &[])?;
            Built::new(
                FuncSource::oracle(2, |x| 0.5 * x[0] * x[1] * (x[0] + x[1])),
                &[Tag::JointlyMonotone, Tag::Ac],
                Rect::unit(2)?,
                1.0,
                1.0,
                "x + y",
            )
            .with_density(FuncSource::oracle(2, |x| x[0] + x[1]), vec![Vec::new(); 2])
        }
        "density_indicator" => {
            params.only(id, &[])?;
            let clip = |t: f64| t.clamp(0.0, 0.5);
            let inside = |t: f64| (0.0..=0.5).contains(&t);
            Built::new(
                FuncSource::oracle(2, move |x| clip(x[0]) * clip(x[1])),
                &[Tag::JointlyMonotone, Tag::Ac],
                Rect::unit(2)?,
                0.25,
                0.25,
                "1 on [0, 1/2]^2, else 0",
            )
            .with_density(
                FuncSource::oracle(2, move |x| if inside(x[0]) && inside(x[1]) { 1.0 } else { 0.0 }),
                vec![vec![0.0, 0.5]; 2],
            )
        }
        "geometric_series" => {
            params.only(id, &[])?;
            let series = Series {
                term: Arc::new(|i| {
                    let w = 0.5f64.powi(i as i32);
                    FuncSource::oracle(2, move |x| w * x[0] * x[1])
                }),
                tail_ratio: 0.5,
            };
            Built::new(
                FuncSource::oracle(2, move |x| series_total * x[0] * x[1]),
                &[Tag::Series, Tag::JointlyMonotone, Tag::Ac],
                Rect::unit(2)?,
                series_total,
                series_total,
                "1",
            )
            .with_series(series)
        }
        "jump_atom_series" => {
            params.only(id, &[])?;
            let series = Series {
                term: Arc::new(|i| {
                    let w = 0.5f64.powi(i as i32);
                    let (q, r) = jump_atom_location(i);
                    FuncSource::oracle(2, move |x| w * heaviside(x[0] - q) * heaviside(x[1] - r))
                }),
                tail_ratio: 0.5,
            };
            let source = FuncSource::oracle(2, |x| {
                (1..=SERIES_TERMS)
                    .map(|i| {
                        let (q, r) = jump_atom_location(i);
                        0.5f64.powi(i as i32) * heaviside(x[0] - q) * heaviside(x[1] - r)
                    })
                    .sum()
            });
            Built::new(
                source,
                &[Tag::Series, Tag::JointlyMonotone, Tag::Singular],
                Rect::unit(2)?,
                series_total,
                series_total,
                "0 off the jump lines",
            )
            .with_series(series)
        }
        other => return Err(Error::UnknownFunction(other.to_string())),
    };
    let mut tags = built.tags;
    tags.sort();
    Ok(ZooFunction {
        entry: ZooEntry {
            id: id.to_string(),
            dim: built.source.dim(),
            params: resolved,
            tags,
            rect: built.rect,
            increment: Some(built.increment),
            variation: Some(built.variation),
            derivative: Some(built.derivative.to_string()),
        },
        source: built.source,
        series: built.series,
        density: built.density,
    })
}

/// Every zoo member with default parameters, in id order.
pub fn zoo_list() -> Vec<ZooEntry> {
    ZOO_IDS
        .iter()
        .map(|id| zoo_build(id, &Params::new()).expect("defaults are valid").entry)
        .collect()
}
