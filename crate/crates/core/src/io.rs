//! CSV tables with a `#` comment header block.
//!
//! Numbers are written as `{:.16e}`, which carries 17 significant digits and
//! therefore parses back to the identical `f64`. Rewriting a table that was
//! read back reproduces the original bytes.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::harmonics::HarmonicField;
use crate::spectral::SpectralBasis;

/// Unit system stamped on every table.
pub const UNITS: &str = "length=mm time=us speed=mm/us diffusivity=mm^2/us";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Num(f64),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Text(s) => {
                if s.contains([',', '"', '\n', '\r']) {
                    out.push('"');
                    out.push_str(&s.replace('"', "\"\""));
                    out.push('"');
                } else {
                    out.push_str(s);
                }
            }
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Num(v) => {
                let _ = write!(out, "{v:.16e}");
            }
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A table as written to or read from disk. Cells read back are kept as
/// raw strings; [`Table::number`] parses them on demand.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    /// Header block as `(key, value)` pairs, in order.
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(meta: Vec<(String, String)>, columns: &[&str]) -> Self {
        Self { meta, columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::ShapeMismatch { expected: self.columns.len(), got: row.len() });
        }
        self.rows.push(
            row.iter()
                .map(|c| {
                    let mut s = String::new();
                    c.render(&mut s);
                    s
                })
                .collect(),
        );
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidParameter(format!("no column named {name}")))
    }

    pub fn number(&self, row: usize, col: usize) -> Result<f64> {
        let raw = &self.rows[row][col];
        raw.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("cell {raw:?} is not a number")))
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let header: Vec<String> = self.columns.iter().map(|c| quote(c)).collect();
        let _ = writeln!(out, "{}", header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        w.write_all(out.as_bytes())
    }

    pub fn to_string_lossless(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("tables are valid UTF-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut table = Table::default();
        let mut header_seen = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidParameter(format!("read error: {e}")))?;
            if !header_seen {
                if let Some(rest) = line.strip_prefix("# ") {
                    let (k, v) = rest.split_once(": ").unwrap_or((rest, ""));
                    table.meta.push((k.to_string(), v.to_string()));
                    continue;
                }
                table.columns = split_record(&line, lineno + 1)?;
                header_seen = true;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let raw = raw_fields(&line);
            if raw.len() != table.columns.len() {
                return Err(Error::InvalidParameter(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    table.columns.len(),
                    raw.len()
                )));
            }
            table.rows.push(raw);
        }
        if !header_seen {
            return Err(Error::InvalidParameter("table has no column header".into()));
        }
        Ok(table)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::new();
    Cell::Text(s.to_string()).render(&mut out);
    out
}

/// Fields of one record, unquoted.
fn split_record(line: &str, lineno: usize) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match (quoted, c) {
            (true, '"') if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            (true, '"') => quoted = false,
            (false, '"') if cur.is_empty() => quoted = true,
            (false, ',') => out.push(std::mem::take(&mut cur)),
            (_, c) => cur.push(c),
        }
    }
    if quoted {
        return Err(Error::InvalidParameter(format!("line {lineno}: unterminated quote")));
    }
    out.push(cur);
    Ok(out)
}

/// Fields of one record exactly as they appear on disk, quotes included,
/// so that rewriting reproduces the input.
fn raw_fields(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for c in line.chars() {
        if c == '"' {
            quoted = !quoted;
        }
        if c == ',' && !quoted {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out
}

/// Header block shared by every output of one run.
pub fn standard_meta(tool_version: &str, config_hash: &str, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut meta = vec![
        ("tool".to_string(), format!("mhj {tool_version}")),
        ("config_sha256".to_string(), config_hash.to_string()),
        ("units".to_string(), UNITS.to_string()),
    ];
    meta.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    meta
}

/// Harmonic field as rows (m, j, k, re, im) with 1-based eigenspace j and
/// index k within the eigenspace.
pub fn field_table(u: &HarmonicField, basis: &SpectralBasis, meta: Vec<(String, String)>) -> Result<Table> {
    u.check_basis(basis)?;
    let mut t = Table::new(meta, &["m", "j", "k", "re", "im"]);
    for m in 1..=u.harmonics() {
        for j in 0..basis.num_spaces() {
            for (k, i) in basis.space(j).enumerate() {
                let c = u.get(m, i);
                t.push(vec![m.into(), (j + 1).into(), (k + 1).into(), c.re.into(), c.im.into()])?;
            }
        }
    }
    Ok(t)
}

pub fn field_from_table(t: &Table, basis: &SpectralBasis) -> Result<HarmonicField> {
    let cols = [t.column_index("m")?, t.column_index("j")?, t.column_index("k")?, t.column_index("re")?, t.column_index("im")?];
    let mut entries = Vec::with_capacity(t.rows.len());
    let mut big_m = 0;
    for r in 0..t.rows.len() {
        let idx = |c: usize| -> Result<usize> {
            let v = t.number(r, cols[c])?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("row {}: index {v} is not a positive integer", r + 1)));
            }
            Ok(v as usize)
        };
        let (m, j, k) = (idx(0)?, idx(1)?, idx(2)?);
        if j > basis.num_spaces() || k > basis.multiplicity(j - 1) {
            return Err(Error::ConfigMismatch(format!("row {}: mode ({j}, {k}) outside the basis", r + 1)));
        }
        big_m = big_m.max(m);
        entries.push((m, basis.space(j - 1).start + k - 1, Complex64::new(t.number(r, cols[3])?, t.number(r, cols[4])?)));
    }
    let mut u = HarmonicField::zeros(big_m, basis.num_modes());
    for (m, i, c) in entries {
        u.set(m, i, c);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, Geometry};

    #[test]
    fn numbers_round_trip_exactly() {
        let mut t = Table::new(vec![("tool".into(), "x".into())], &["model", "value"]);
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, 6e-7];
        for v in vals {
            t.push(vec!["jmgt".into(), v.into()]).unwrap();
        }
        let text = t.to_string_lossless();
        let back = Table::read_from(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_string_lossless(), text);
        for (r, v) in vals.iter().enumerate() {
            assert_eq!(back.number(r, 1).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn text_with_commas_is_quoted() {
        let mut t = Table::new(Vec::new(), &["a"]);
        t.push(vec!["x, \"y\"".into()]).unwrap();
        let text = t.to_string_lossless();
        assert!(text.contains("\"x, \"\"y\"\"\""));
        assert_eq!(Table::read_from(text.as_bytes()).unwrap().to_string_lossless(), text);
    }

    #[test]
    fn field_round_trip() {
        let g = Geometry::rectangle([1.0, 1.0], [8, 8], [0.1, 0.3], [0.9, 0.3], 5).unwrap();
        let b = build_basis(&g, 3).unwrap();
        let u = HarmonicField::from_fn(2, b.num_modes(), |m, i| Complex64::new(m as f64 / 7.0, -(i as f64) / 3.0));
        let t = field_table(&u, &b, Vec::new()).unwrap();
        let back = field_from_table(&Table::read_from(t.to_string_lossless().as_bytes()).unwrap(), &b).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = "a,b\n1,2\n3\n";
        assert!(Table::read_from(text.as_bytes()).is_err());
    }
}
