//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 when a theorem check
//! fails, 2 on usage or I/O errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classify::{classify_ac, is_componentwise_monotone, is_jointly_monotone, ACVerdict, MonotonicityReport};
use crate::differentiation::{joint_derivative, DerivativeEstimate, HSchedule};
use crate::error::{Error, Result};
use crate::geometry::{GridPartition, QuadrantSign, Rect};
use crate::gridfile::{read_grid, write_grid};
use crate::increment::joint_increment;
use crate::report::{write_report, ReportFormat};
use crate::source::{FuncSource, Interp};
use crate::variation::{jordan_decompose, total_variation, RefineMode, RefinePolicy, RoundTrace, StopReason};
use crate::verify::{default_cells_per_axis, run_batch, Theorem, VerifyConfig};
use crate::zoo::{zoo_build, zoo_list, Params, ZooFunction, ZOO_IDS};

pub const JOBS_ENV: &str = "HKVAR_JOBS";

#[derive(Debug, Parser)]
#[command(name = "hkvar", version, about = "Joint increments, joint derivatives and Hardy-Krause variation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    Vertex,
    Nearest,
    Multilinear,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Rectangle as lo1,..,lon:hi1,..,hin
    #[arg(long, global = true, value_parser = parse_rect, allow_hyphen_values = true)]
    pub rect: Option<Rect>,
    /// Cells per axis as k1,..,kn
    #[arg(long, global = true, value_parser = parse_counts)]
    pub grid: Option<Counts>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub rtol: Option<f64>,
    #[arg(long, global = true)]
    pub atol: Option<f64>,
    /// Maximum refinement rounds for variation
    #[arg(long, global = true)]
    pub max_refine: Option<usize>,
    #[arg(long, global = true)]
    pub cell_budget: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    /// Zoo function id
    #[arg(long, global = true)]
    pub function: Option<String>,
    /// Zoo constructor parameter key=value (repeatable)
    #[arg(long = "param", global = true)]
    pub params: Vec<String>,
    /// Tabulated function in the grid text format
    #[arg(long, global = true, conflicts_with = "function")]
    pub grid_file: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "vertex")]
    pub interp: InterpArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint increment over the rectangle
    Increment,
    /// Joint derivative at a point
    Derivative {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        point: Point,
        /// Direction per axis, e.g. +,- (default all +)
        #[arg(long, value_parser = parse_quadrant, allow_hyphen_values = true)]
        quadrant: Option<QuadrantSign>,
        /// Initial step (default min side / 8)
        #[arg(long)]
        h0: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Total variation lower bound by partition refinement
    Variation {
        /// Refine the cell with the largest increment instead of bisecting all cells
        #[arg(long)]
        adaptive: bool,
    },
    /// Jordan decomposition written as two grid files
    Decompose {
        /// Output files are <prefix>_g.grid and <prefix>_h.grid
        #[arg(long)]
        prefix: PathBuf,
    },
    /// Monotonicity and absolute-continuity classification
    Classify,
    /// Run theorem checks on zoo functions
    Verify {
        /// Theorem id or `all`
        #[arg(long, default_value = "all")]
        theorem: String,
    },
    /// Built-in functions
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ZooAction {
    List,
}

/// Comma-separated lists are single values, not repeated flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Counts(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("`{c}` is not a number")))
        .collect()
}

fn parse_rect(s: &str) -> std::result::Result<Rect, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo1,..,lon:hi1,..,hin")?;
    Rect::new(parse_list(lo)?, parse_list(hi)?).map_err(|e| e.to_string())
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    parse_list(s).map(Point)
}

fn parse_counts(s: &str) -> std::result::Result<Counts, String> {
    s.split(',')
        .map(|c| match c.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(k),
            _ => Err(format!("`{c}` is not a positive integer")),
        })
        .collect::<std::result::Result<_, _>>()
        .map(Counts)
}

fn parse_quadrant(s: &str) -> std::result::Result<QuadrantSign, String> {
    let dirs = s
        .split(',')
        .map(|c| match c.trim() {
            "+" | "+1" | "1" => Ok(1),
            "-" | "-1" => Ok(-1),
            other => Err(format!("`{other}` is not + or -")),
        })
        .collect::<std::result::Result<Vec<i8>, String>>()?;
    QuadrantSign::new(dirs).map_err(|e| e.to_string())
}

/// A resolved function together with its default rectangle.
struct Target {
    name: String,
    source: FuncSource,
    rect: Rect,
}

impl Global {
    fn params(&self) -> Result<Params> {
        let mut p = Params::new();
        for pair in &self.params {
            p.insert_pair(pair)?;
        }
        Ok(p)
    }

    fn target(&self) -> Result<Target> {
        let (name, source, default_rect) = match (&self.function, &self.grid_file) {
            (Some(id), None) => {
                let z = zoo_build(id, &self.params()?)?;
                (id.clone(), z.source.clone(), z.entry.rect.clone())
            }
            (None, Some(path)) => {
                let sample = read_grid(path)?;
                let rect = sample.partition().rect();
                let interp = match self.interp {
                    InterpArg::Vertex => Interp::VertexOnly,
                    InterpArg::Nearest => Interp::Nearest,
                    InterpArg::Multilinear => Interp::Multilinear,
                };
                (path.display().to_string(), FuncSource::sampled(sample, interp), rect)
            }
            _ => return Err(Error::invalid("exactly one of --function or --grid-file is required")),
        };
        let rect = self.rect.clone().unwrap_or(default_rect);
        if rect.dim() != source.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: rect.dim(),
            });
        }
        Ok(Target { name, source, rect })
    }

    fn grid(&self, rect: &Rect) -> Result<GridPartition> {
        let counts = match &self.grid {
            Some(Counts(c)) => c.clone(),
            None => vec![default_cells_per_axis(rect.dim()); rect.dim()],
        };
        if counts.len() != rect.dim() {
            return Err(Error::DimensionMismatch {
                expected: rect.dim(),
                found: counts.len(),
            });
        }
        GridPartition::uniform(rect, &counts)
    }

    fn schedule(&self, rect: &Rect) -> HSchedule {
        let d = HSchedule::for_rect(rect);
        HSchedule {
            rtol: self.rtol.unwrap_or(d.rtol),
            atol: self.atol.unwrap_or(d.atol),
            ..d
        }
    }

    fn policy(&self) -> RefinePolicy {
        let d = RefinePolicy::default();
        RefinePolicy {
            max_rounds: self.max_refine.unwrap_or(d.max_rounds),
            cell_budget: self.cell_budget.unwrap_or(d.cell_budget),
            ..d
        }
    }

    fn report_format(&self) -> ReportFormat {
        match self.format {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

enum Outcome {
    Done,
    ChecksFailed,
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` (or `--out`) and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let pool = match cli.global.jobs {
        Some(0) => {
            let _ = writeln!(err, "error: --jobs must be at least 1");
            return 2;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 2;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| execute(&cli, &mut buf));
    let written = match &cli.global.out {
        Some(path) => std::fs::write(path, &buf).map_err(|e| Error::io(path, e)),
        None => out.write_all(&buf).map_err(|e| Error::io("<stdout>", e)),
    };
    match (result, written) {
        (Ok(Outcome::Done), Ok(())) => 0,
        (Ok(Outcome::ChecksFailed), Ok(())) => 1,
        (Err(e), _) | (_, Err(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn json<T: Serialize>(value: &T, out: &mut Vec<u8>) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Error::invalid(e.to_string()))?;
    out.push(b'\n');
    Ok(())
}

#[derive(Serialize)]
struct DerivativeOutput<'a> {
    point: &'a [f64],
    #[serde(flatten)]
    estimate: &'a DerivativeEstimate,
}

#[derive(Serialize)]
struct VariationOutput<'a> {
    function: &'a str,
    rect: &'a Rect,
    lower_bound: f64,
    stopped: StopReason,
    cells: usize,
    trace: &'a [RoundTrace],
}

#[derive(Serialize)]
struct ClassifyOutput<'a> {
    function: &'a str,
    rect: &'a Rect,
    jointly_monotone: MonotonicityReport,
    componentwise_monotone: MonotonicityReport,
    absolute_continuity: ACVerdict,
}

#[derive(Serialize)]
struct DecomposeOutput {
    g: PathBuf,
    h: PathBuf,
    cells: usize,
    budget_exhausted: usize,
    round_limited: usize,
}

#[derive(Serialize)]
struct ZooRow {
    id: String,
    dim: usize,
    tags: Vec<String>,
    rect: Rect,
}

fn csv_rows(out: &mut Vec<u8>, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

fn execute(cli: &Cli, out: &mut Vec<u8>) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Increment => {
            let t = g.target()?;
            let v = joint_increment(&t.source, &t.rect)?;
            writeln!(out, "{v:?}").map_err(|e| Error::io("<output>", e))?;
        }
        Command::Derivative {
            point,
            quadrant,
            h0,
            max_steps,
        } => {
            let t = g.target()?;
            let mut sched = g.schedule(&t.rect);
            if let Some(h) = h0 {
                sched.h0 = *h;
            }
            if let Some(m) = max_steps {
                sched.max_steps = *m;
            }
            let q = quadrant.clone().unwrap_or_else(|| QuadrantSign::positive(t.source.dim()));
            let f = match &t.source {
                FuncSource::Oracle { domain: None, .. } => t.source.clone().with_domain(t.rect.clone())?,
                other => other.clone(),
            };
            let est = joint_derivative(&f, &point.0, &q, &sched)?;
            match g.format {
                FormatArg::Json => json(&DerivativeOutput { point: &point.0, estimate: &est }, out)?,
                FormatArg::Csv => csv_rows(
                    out,
                    &["h", "quotient"],
                    est.trace.iter().map(|p| vec![format!("{:?}", p.h), format!("{:?}", p.quotient)]),
                )?,
            }
        }
        Command::Variation { adaptive } => {
            let t = g.target()?;
            let mut policy = g.policy();
            if *adaptive {
                policy.mode = RefineMode::AdaptiveWorstCell;
            }
            let v = total_variation(&t.source, &t.rect, &policy)?;
            match g.format {
                FormatArg::Json => json(
                    &VariationOutput {
                        function: &t.name,
                        rect: &t.rect,
                        lower_bound: v.lower_bound,
                        stopped: v.stopped,
                        cells: v.partition.num_cells(),
                        trace: &v.trace,
                    },
                    out,
                )?,
                FormatArg::Csv => csv_rows(
                    out,
                    &["round", "cells", "raw_sum", "sum"],
                    v.trace.iter().enumerate().map(|(i, r)| {
                        vec![
                            (i + 1).to_string(),
                            r.cells.to_string(),
                            format!("{:?}", r.raw_sum),
                            format!("{:?}", r.sum),
                        ]
                    }),
                )?,
            }
        }
        Command::Decompose { prefix } => {
            let t = g.target()?;
            let grid = match (t.source.as_sample(), &g.grid) {
                (Some(s), None) => s.partition().restrict(&t.rect)?,
                _ => g.grid(&t.rect)?,
            };
            let pair = jordan_decompose(&t.source, &t.rect, &grid, &g.policy())?;
            let with_suffix = |suffix: &str| {
                let mut name = prefix.as_os_str().to_owned();
                name.push(suffix);
                PathBuf::from(name)
            };
            let (gp, hp) = (with_suffix("_g.grid"), with_suffix("_h.grid"));
            write_grid(&pair.g, &gp)?;
            write_grid(&pair.h, &hp)?;
            json(
                &DecomposeOutput {
                    g: gp,
                    h: hp,
                    cells: grid.num_cells(),
                    budget_exhausted: pair.budget_exhausted,
                    round_limited: pair.round_limited,
                },
                out,
            )?;
        }
        Command::Classify => {
            let t = g.target()?;
            let grid = g.grid(&t.rect)?;
            let mono_tol = g.atol.unwrap_or(crate::verify::MONOTONE_TOL);
            let f = match &t.source {
                FuncSource::Oracle { domain: None, .. } => t.source.clone().with_domain(t.rect.clone())?,
                other => other.clone(),
            };
            let report = ClassifyOutput {
                function: &t.name,
                rect: &t.rect,
                jointly_monotone: is_jointly_monotone(&f, &grid, mono_tol)?,
                componentwise_monotone: is_componentwise_monotone(&f, &grid, mono_tol)?,
                absolute_continuity: classify_ac(
                    &f,
                    &t.rect,
                    &grid,
                    &g.schedule(&t.rect),
                    &g.policy(),
                    g.tol.unwrap_or(1e-3),
                )?,
            };
            json(&report, out)?;
        }
        Command::Verify { theorem } => {
            if g.grid_file.is_some() {
                return Err(Error::invalid("verify runs on zoo functions; use --function"));
            }
            let theorems: Vec<Theorem> = if theorem == "all" {
                Theorem::ALL.to_vec()
            } else {
                vec![theorem.parse()?]
            };
            let explicit = |s: &Option<String>| s.as_deref().filter(|id| *id != "all").map(str::to_string);
            let functions: Vec<ZooFunction> = match explicit(&g.function) {
                Some(id) => vec![zoo_build(&id, &g.params()?)?],
                None => ZOO_IDS
                    .iter()
                    .map(|id| zoo_build(id, &Params::new()))
                    .collect::<Result<_>>()?,
            };
            let single = functions.len() == 1 && theorems.len() == 1;
            let pairs: Vec<(Theorem, &ZooFunction)> = theorems
                .iter()
                .flat_map(|&t| functions.iter().map(move |z| (t, z)))
                .filter(|(t, z)| single || t.applies_to(z))
                .collect();
            let cfg = VerifyConfig {
                grid: g.grid.as_ref().map(|c| c.0.clone()),
                rect: g.rect.clone(),
                tol: g.tol,
                rtol: g.rtol.unwrap_or(HSchedule::DEFAULT_RTOL),
                atol: g.atol.unwrap_or(HSchedule::DEFAULT_ATOL),
                policy: g.policy(),
                seed: g.seed,
                ..VerifyConfig::default()
            };
            let reports = run_batch(&pairs, &cfg)?;
            write_report(&reports, g.report_format(), &mut *out)?;
            if reports.iter().any(|r| !r.pass) {
                return Ok(Outcome::ChecksFailed);
            }
        }
        Command::Zoo { action: ZooAction::List } => {
            let rows: Vec<ZooRow> = zoo_list()
                .into_iter()
                .map(|e| ZooRow {
                    id: e.id,
                    dim: e.dim,
                    tags: e.tags.iter().map(ToString::to_string).collect(),
                    rect: e.rect,
                })
                .collect();
            match g.format {
                FormatArg::Json => json(&rows, out)?,
                FormatArg::Csv => csv_rows(
                    out,
                    &["id", "dim", "tags", "rect"],
                    rows.iter()
                        .map(|r| vec![r.id.clone(), r.dim.to_string(), r.tags.join(" "), r.rect.to_string()]),
                )?,
            }
        }
    }
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("hkvar").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn increment_of_product() {
        let (code, out, _) = call(&["increment", "--function", "coordinate_product", "--rect", "0,0:1,1"]);
        assert_eq!(code, 0);
        assert_eq!(out.trim(), "1.0");
    }

    #[test]
    fn usage_errors_exit_two() {
        let (code, _, err) = call(&["increment", "--rect", "0,0:1"]);
        assert_eq!(code, 2);
        assert!(err.contains("--rect"), "{err}");
        let (code, _, err) = call(&["increment", "--function", "nope"]);
        assert_eq!(code, 2);
        assert!(err.contains("nope"));
        assert_eq!(call(&["increment"]).0, 2);
    }

    #[test]
    fn parsers() {
        assert_eq!(parse_rect("0,1:2,3").unwrap(), Rect::new(vec![0.0, 1.0], vec![2.0, 3.0]).unwrap());
        assert!(parse_rect("0,1").is_err());
        assert_eq!(parse_quadrant("+,-").unwrap().dirs(), &[1, -1]);
        assert!(parse_counts("3,0").is_err());
        assert_eq!(parse_counts("3,4").unwrap(), Counts(vec![3, 4]));
    }
}
