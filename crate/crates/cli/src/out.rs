//! CSV output with a fixed header and 17 significant digits for reals.

use std::fmt::Write as _;
use std::io::{self, Write};

/// One CSV cell.
pub enum Cell<'a> {
    Text(&'a str),
    Real(f64),
    Int(usize),
    Empty,
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell<'_> {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::Text(v)
    }
}

impl<'a> From<&'a String> for Cell<'a> {
    fn from(v: &'a String) -> Self {
        Cell::Text(v)
    }
}

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.buf.push(',');
            }
            match c {
                Cell::Text(s) => self.buf.push_str(&quote(s)),
                Cell::Real(v) => self.buf.push_str(&real(*v)),
                Cell::Int(v) => write!(self.buf, "{v}").unwrap(),
                Cell::Empty => {}
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> io::Result<()> {
        let mut out = io::stdout().lock();
        out.write_all(self.buf.as_bytes())?;
        out.flush()
    }

    #[cfg(test)]
    pub fn into_string(self) -> String {
        self.buf
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
