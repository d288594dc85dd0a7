//! Capacity to a requested precision, and the analytic gap bound.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{BehcError, Result};
use crate::model::h2;
use crate::program::build_program;
use crate::qgraph::BoundKind;
use crate::solver::{maximize, SolveOptions, SolveResult};

/// Interior clamp applied to `eta` before solving.
pub const ETA_CLAMP: f64 = 1e-9;

/// `max_p H2(p) / (N p + 1)` by golden-section search.
pub fn gap_bound(n: usize) -> f64 {
    let f = |p: f64| h2(p) / (n as f64 * p + 1.0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).max(fc).max(fd)
}

#[derive(Debug, Clone)]
pub struct CapacityOptions {
    pub solve: SolveOptions,
    /// Overrides the starting `N`.
    pub start_n: Option<usize>,
    /// Largest `N` tried before giving up.
    pub max_n: usize,
    /// Bisect down to the smallest `N` meeting the precision.
    pub minimal_n: bool,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions {
            solve: SolveOptions::default(),
            start_n: None,
            max_n: 256,
            minimal_n: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityStatus {
    /// `eta` was 0 or 1.
    Analytic,
    Converged,
    /// `max_n` reached; the bounds are still valid.
    PrecisionNotReached,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityResult {
    pub eta: f64,
    pub precision: f64,
    /// Midpoint of `[lower, upper]`.
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub psi: f64,
    pub wall_time_s: f64,
    pub status: CapacityStatus,
}

impl CapacityResult {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn nodes(&self) -> usize {
        self.n + 1
    }
}

/// Certified lower and upper programs at one `N`.
#[derive(Debug, Clone)]
pub struct BoundPair {
    pub lower: SolveResult,
    pub upper: SolveResult,
}

impl BoundPair {
    pub fn a(&self) -> f64 {
        self.lower.lower_certified
    }

    pub fn b(&self) -> f64 {
        self.upper.upper_certified
    }
}

/// Solves one side at `(eta, N)`.
pub fn solve_bound(kind: BoundKind, eta: f64, n: usize, opts: &SolveOptions) -> Result<SolveResult> {
    let prog = build_program(kind, n, eta)?;
    maximize(&prog, None, opts)
}

/// Solves both programs at `(eta, N)` in parallel.
pub fn solve_pair(eta: f64, n: usize, opts: &SolveOptions) -> Result<BoundPair> {
    let (lower, upper) = rayon::join(
        || solve_bound(BoundKind::LowerBound, eta, n, opts),
        || solve_bound(BoundKind::UpperBound, eta, n, opts),
    );
    Ok(BoundPair {
        lower: lower?,
        upper: upper?,
    })
}

pub fn start_n(eta: f64) -> usize {
    ((10.0 / eta).ceil() as usize).max(4)
}

pub fn compute_capacity(eta: f64, precision: f64, opts: &CapacityOptions) -> Result<CapacityResult> {
    if !(precision > 0.0) {
        return Err(BehcError::InvalidParameter(format!("precision {precision} must be positive")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(BehcError::InvalidParameter(format!("eta={eta} is not a probability")));
    }
    let t0 = Instant::now();
    if eta == 0.0 || eta == 1.0 {
        return Ok(CapacityResult {
            eta,
            precision,
            value: eta,
            lower: eta,
            upper: eta,
            n: 0,
            psi: gap_bound(0),
            wall_time_s: t0.elapsed().as_secs_f64(),
            status: CapacityStatus::Analytic,
        });
    }
    let e = eta.clamp(ETA_CLAMP, 1.0 - ETA_CLAMP);
    let mut n = opts.start_n.unwrap_or_else(|| start_n(e)).min(opts.max_n).max(1);
    let mut failed_below = 0;
    let (n, pair, status) = loop {
        let pair = solve_pair(e, n, &opts.solve)?;
        let gap = pair.b() - pair.a();
        log::info!("eta={e} N={n} a={:.9} b={:.9} gap={gap:.3e}", pair.a(), pair.b());
        if gap <= precision {
            break (n, pair, CapacityStatus::Converged);
        }
        if n >= opts.max_n {
            break (n, pair, CapacityStatus::PrecisionNotReached);
        }
        failed_below = n;
        n = (2 * n).min(opts.max_n);
    };
    let (n, pair) = if opts.minimal_n && status == CapacityStatus::Converged {
        let (mut lo, mut hi, mut best) = (failed_below, n, pair);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let p = solve_pair(e, mid, &opts.solve)?;
            if p.b() - p.a() <= precision {
                hi = mid;
                best = p;
            } else {
                lo = mid;
            }
        }
        (hi, best)
    } else {
        (n, pair)
    };
    let (a, b) = (pair.a(), pair.b());
    Ok(CapacityResult {
        eta,
        precision,
        value: 0.5 * (a + b),
        lower: a,
        upper: b,
        n,
        psi: gap_bound(n),
        wall_time_s: t0.elapsed().as_secs_f64(),
        status,
    })
}

/// Worker count from the `THREADS` variable, else the available parallelism.
pub fn threads_from_env() -> usize {
    std::env::var("THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One [`compute_capacity`] per `eta`, rows computed concurrently.
pub fn table_sweep(
    etas: &[f64],
    precision: f64,
    opts: &CapacityOptions,
    threads: usize,
) -> Vec<Result<CapacityResult>> {
    let run = || {
        etas.par_iter()
            .map(|&eta| {
                if eta <= 0.0 || eta >= 1.0 {
                    return Err(BehcError::DegenerateEta(eta));
                }
                compute_capacity(eta, precision, opts)
            })
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

/// `lo:hi:step` or a comma-separated list.
pub fn parse_etas(spec: &str) -> Result<Vec<f64>> {
    let bad = || BehcError::Parse(format!("bad eta list {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (lo, hi, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        // rounded to 12 digits so 0.1:0.9:0.1 yields 0.3, not 0.30000000000000004
        return Ok((0..=count)
            .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    spec.split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect()
}

pub const CSV_HEADER: &str = "eta,lb,nodes,ub";

/// Table-shaped CSV; `nodes` is `N + 1`. Numbers carry 12 significant digits.
pub fn write_csv<W: Write>(mut w: W, rows: &[CapacityResult]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{:.11e},{},{:.11e}", r.eta, r.lower, r.nodes(), r.upper)?;
    }
    Ok(())
}

/// Rows of a CSV written by [`write_csv`] as `(eta, lb, nodes, ub)`.
pub fn read_csv(text: &str) -> Result<Vec<(f64, f64, usize, f64)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(BehcError::Parse("missing CSV header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || BehcError::Parse(format!("bad CSV row {l:?}"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}
