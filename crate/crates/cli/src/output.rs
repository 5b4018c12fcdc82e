//! CSV tables, gnuplot scripts and the run manifest.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

/// One CSV cell. Reals are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Real(x) if x.is_nan() => "nan".into(),
            Cell::Real(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// A `(t_or_T, statistic, stderr)` series.
    pub fn series(name: impl Into<String>, t: &[f64], value: &[f64], stderr: &[f64]) -> Self {
        let mut table = Table::new(name, &["t_or_T", "statistic", "stderr"]);
        for ((t, v), e) in t.iter().zip(value).zip(stderr) {
            table.push(vec![(*t).into(), (*v).into(), (*e).into()]);
        }
        table
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::render).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Log–log plots of every series table, one page per file.
pub fn gnuplot_script(tables: &[&Table]) -> String {
    let mut out = String::from("set datafile separator ','\nset key top left\nset grid\n");
    for t in tables {
        let loglog = !t.name.starts_with("spectrum_");
        let _ = writeln!(out, "\nset title '{}'", t.name.trim_end_matches(".csv").replace('_', " "));
        if loglog {
            out.push_str("set logscale xy\n");
        } else {
            out.push_str("unset logscale\n");
        }
        let _ = writeln!(out, "set xlabel '{}'\nset ylabel '{}'", t.header[0], t.header[1]);
        let col = if loglog { "(abs($2))" } else { "2" };
        let _ = writeln!(out, "plot '{}' using 1:{col} every ::1 with linespoints title '{}'", t.name, t.header[1]);
        out.push_str("pause -1\n");
    }
    out
}
