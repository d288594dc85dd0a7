//! Plain-text export of a convex program and its parser.
//!
//! ```text
//! behc-convex v1 kind=lb N=1 eta=0.5 vars=9 rows=23
//! 0 0 1.0000000000000000e0
//! ...
//! b 22 1.0000000000000000e0
//! group 0 0 3 4
//! c 0 0.0000000000000000e0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{BehcError, Result};
use crate::program::ConvexProgram;
use crate::qgraph::BoundKind;

/// Parsed contents of an export file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedProgram {
    pub kind: BoundKind,
    pub n: usize,
    pub eta: f64,
    pub vars: usize,
    pub rows: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub b: Vec<(usize, f64)>,
    pub groups: Vec<(usize, u8, Vec<usize>)>,
    pub c: Vec<(usize, f64)>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_text(prog: &ConvexProgram) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "behc-convex v1 kind={} N={} eta={} vars={} rows={}",
        prog.kind().short_name(),
        prog.last_node(),
        prog.eta(),
        prog.num_vars(),
        prog.num_rows()
    )
    .unwrap();
    for &(r, c, v) in prog.a().entries() {
        writeln!(out, "{r} {c} {}", num(v)).unwrap();
    }
    for (r, &v) in prog.b().iter().enumerate() {
        if v != 0.0 {
            writeln!(out, "b {r} {}", num(v)).unwrap();
        }
    }
    for g in prog.groups() {
        write!(out, "group {} {}", g.q, g.x).unwrap();
        for c in &g.cols {
            write!(out, " {c}").unwrap();
        }
        out.push('\n');
    }
    for (j, &c) in prog.linear_cost().iter().enumerate() {
        writeln!(out, "c {j} {}", num(c)).unwrap();
    }
    out
}

pub fn write_file(prog: &ConvexProgram, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(prog))?;
    Ok(())
}

fn bad(line: usize, what: &str) -> BehcError {
    BehcError::Parse(format!("line {line}: {what}"))
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| bad(line, what))
}

pub fn parse(text: &str) -> Result<ExportedProgram> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("behc-convex") || toks.next() != Some("v1") {
        return Err(bad(1, "not a behc-convex v1 header"));
    }
    let (mut kind, mut n, mut eta, mut vars, mut rows) = (None, None, None, None, None);
    for t in toks {
        let (k, v) = t.split_once('=').ok_or_else(|| bad(1, t))?;
        match k {
            "kind" => kind = BoundKind::from_short_name(v),
            "N" => n = v.parse().ok(),
            "eta" => eta = v.parse().ok(),
            "vars" => vars = v.parse().ok(),
            "rows" => rows = v.parse().ok(),
            _ => return Err(bad(1, &format!("unknown key {k}"))),
        }
    }
    let mut out = ExportedProgram {
        kind: kind.ok_or_else(|| bad(1, "kind"))?,
        n: n.ok_or_else(|| bad(1, "N"))?,
        eta: eta.ok_or_else(|| bad(1, "eta"))?,
        vars: vars.ok_or_else(|| bad(1, "vars"))?,
        rows: rows.ok_or_else(|| bad(1, "rows"))?,
        triplets: Vec::new(),
        b: Vec::new(),
        groups: Vec::new(),
        c: Vec::new(),
    };
    for (i, line) in lines {
        let ln = i + 1;
        let mut t = line.split_whitespace();
        match t.next() {
            None => continue,
            Some("b") => out
                .b
                .push((field(t.next(), ln, "row")?, field(t.next(), ln, "value")?)),
            Some("c") => out
                .c
                .push((field(t.next(), ln, "col")?, field(t.next(), ln, "value")?)),
            Some("group") => {
                let q = field(t.next(), ln, "q")?;
                let x = field(t.next(), ln, "x")?;
                let cols = t
                    .map(|c| c.parse().map_err(|_| bad(ln, "col")))
                    .collect::<Result<Vec<usize>>>()?;
                out.groups.push((q, x, cols));
            }
            Some(r) => {
                let r = r.parse().map_err(|_| bad(ln, "row"))?;
                let c = field(t.next(), ln, "col")?;
                let v = field(t.next(), ln, "value")?;
                if r >= out.rows || c >= out.vars {
                    return Err(bad(ln, "index out of range"));
                }
                out.triplets.push((r, c, v));
            }
        }
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<ExportedProgram> {
    parse(&std::fs::read_to_string(path)?)
}
