//! Text format for tabulated grids.
//!
//! ```text
//! HKGRID 1
//! dim 2
//! axis 2 0.0000000000000000e0 1.0000000000000000e0
//! axis 2 0.0000000000000000e0 1.0000000000000000e0
//! values 4
//! 0.0000000000000000e0
//! 0.0000000000000000e0
//! 0.0000000000000000e0
//! 1.0000000000000000e0
//! ```
//!
//! Values are row-major over the vertices with the last axis varying fastest.
//! Numbers carry 17 significant digits, so a write followed by a read is
//! bit-exact. Blank lines are ignored.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{check_dim, GridPartition, GridSample};

const MAGIC: &str = "HKGRID";
const VERSION: u32 = 1;

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn grid_to_string(sample: &GridSample) -> String {
    let p = sample.partition();
    let mut out = format!("{MAGIC} {VERSION}\ndim {}\n", p.dim());
    for axis in p.axes() {
        out.push_str(&format!("axis {}", axis.len()));
        for b in axis {
            out.push(' ');
            out.push_str(&fmt_num(*b));
        }
        out.push('\n');
    }
    out.push_str(&format!("values {}\n", sample.values().len()));
    for v in sample.values() {
        out.push_str(&fmt_num(*v));
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    origin: &'a str,
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(origin: &'a str, text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Lines {
            origin,
            inner: it.peekable(),
            last: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::GridFormat {
            path: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n;
                Ok((n, l))
            }
            None => Err(self.err(self.last + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    /// Next line split into a keyword and its fields.
    fn keyword(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next(&format!("`{key}` line"))?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok((n, parts.collect())),
            Some(k) => Err(self.err(n, format!("expected `{key}`, found `{k}`"))),
            None => Err(self.err(n, format!("expected `{key}`"))),
        }
    }

    fn count(&self, line: usize, field: Option<&&str>, what: &str) -> Result<usize> {
        field
            .ok_or_else(|| self.err(line, format!("missing {what}")))?
            .parse()
            .map_err(|_| self.err(line, format!("{what} is not a non-negative integer")))
    }

    fn number(&self, line: usize, s: &str) -> Result<f64> {
        let v: f64 = s.parse().map_err(|_| self.err(line, format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(line, format!("non-finite value `{s}`")));
        }
        Ok(v)
    }
}

/// Parses the text format; `origin` names the source in error messages.
pub fn grid_from_str(text: &str, origin: &str) -> Result<GridSample> {
    let mut lines = Lines::new(origin, text);
    let (n, fields) = lines.keyword(MAGIC)?;
    if fields != [VERSION.to_string().as_str()] {
        return Err(lines.err(n, format!("unsupported version {:?}", fields.join(" "))));
    }
    let (n, fields) = lines.keyword("dim")?;
    let dim = lines.count(n, fields.first(), "dimension")?;
    if dim == 0 || fields.len() != 1 {
        return Err(lines.err(n, "dim takes one positive integer"));
    }
    check_dim(dim).map_err(|e| lines.err(n, e.to_string()))?;

    let mut axes = Vec::with_capacity(dim);
    for i in 0..dim {
        let (n, fields) = lines.keyword("axis")?;
        let count = lines.count(n, fields.first(), "breakpoint count")?;
        if fields.len() - 1 != count {
            return Err(lines.err(
                n,
                format!("axis {i} declares {count} breakpoints but lists {}", fields.len() - 1),
            ));
        }
        let axis = fields[1..].iter().map(|s| lines.number(n, s)).collect::<Result<Vec<f64>>>()?;
        if count == 0 || axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(lines.err(n, format!("axis {i} breakpoints must be non-empty and strictly increasing")));
        }
        axes.push(axis);
    }
    let partition = GridPartition::new(axes).map_err(|e| lines.err(lines.last, e.to_string()))?;

    let (n, fields) = lines.keyword("values")?;
    let count = lines.count(n, fields.first(), "value count")?;
    let expected = partition.num_vertices();
    if count != expected {
        return Err(lines.err(n, format!("values declares {count} entries but the axes need {expected}")));
    }
    let mut values = Vec::with_capacity(expected);
    while let Some(&(n, line)) = lines.inner.peek() {
        lines.inner.next();
        lines.last = n;
        if values.len() == expected {
            return Err(lines.err(n, format!("payload longer than the {expected} declared values")));
        }
        values.push(lines.number(n, line)?);
    }
    if values.len() != expected {
        return Err(lines.err(
            lines.last + 1,
            format!("payload length mismatch: expected {expected} values, found {}", values.len()),
        ));
    }
    GridSample::new(partition, values)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridSample> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    grid_from_str(&text, &path.display().to_string())
}

pub fn write_grid(sample: &GridSample, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, grid_to_string(sample)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::source::FuncSource;

    fn xy() -> GridSample {
        let p = GridPartition::uniform(&Rect::unit(2).unwrap(), &[1, 1]).unwrap();
        FuncSource::oracle(2, |x| x[0] * x[1]).sample_on(&p).unwrap()
    }

    #[test]
    fn minimal_grid_text() {
        let text = grid_to_string(&xy());
        assert_eq!(
            text,
            "HKGRID 1\ndim 2\naxis 2 0.0000000000000000e0 1.0000000000000000e0\n\
             axis 2 0.0000000000000000e0 1.0000000000000000e0\nvalues 4\n\
             0.0000000000000000e0\n0.0000000000000000e0\n0.0000000000000000e0\n1.0000000000000000e0\n"
        );
        assert_eq!(grid_from_str(&text, "t").unwrap(), xy());
    }

    #[test]
    fn awkward_values_round_trip() {
        let p = GridPartition::new(vec![vec![-0.1, 1.0 / 3.0, 2.0]]).unwrap();
        let s = GridSample::new(p, vec![f64::MIN_POSITIVE, -1.0e300, std::f64::consts::PI]).unwrap();
        let back = grid_from_str(&grid_to_string(&s), "t").unwrap();
        for (a, b) in s.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(s.partition(), back.partition());
    }

    fn line_of(err: Error) -> (usize, String) {
        match err {
            Error::GridFormat { line, message, .. } => (line, message),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_names_counts() {
        let text = grid_to_string(&xy());
        let cut: Vec<&str> = text.lines().take(7).collect();
        let (line, msg) = line_of(grid_from_str(&cut.join("\n"), "t").unwrap_err());
        assert_eq!(line, 8);
        assert!(msg.contains("expected 4") && msg.contains("found 2"), "{msg}");
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let (line, _) = line_of(grid_from_str("HKGRID 2\n", "t").unwrap_err());
        assert_eq!(line, 1);
        let bad_axis = "HKGRID 1\ndim 1\naxis 2 1.0 0.5\nvalues 2\n0\n0\n";
        assert_eq!(line_of(grid_from_str(bad_axis, "t").unwrap_err()).0, 3);
        let nan = "HKGRID 1\ndim 1\naxis 2 0 1\nvalues 2\n0\nNaN\n";
        assert_eq!(line_of(grid_from_str(nan, "t").unwrap_err()).0, 6);
        let long = "HKGRID 1\ndim 1\naxis 2 0 1\nvalues 2\n0\n1\n2\n";
        assert_eq!(line_of(grid_from_str(long, "t").unwrap_err()).0, 7);
        let count = "HKGRID 1\ndim 1\naxis 3 0 1\nvalues 2\n0\n1\n";
        assert_eq!(line_of(grid_from_str(count, "t").unwrap_err()).0, 3);
    }

    #[test]
    fn file_round_trip_and_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.grid");
        write_grid(&xy(), &path).unwrap();
        assert_eq!(read_grid(&path).unwrap(), xy());
        assert!(matches!(read_grid(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
