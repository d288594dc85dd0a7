//! Command-line front end.
//!
//! Every command emits one record per line, either as `key=value` pairs or
//! as JSON. Exit status is 2 for argument errors, 1 for numeric failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::capacity::{
    compute_capacity, gap_bound, parse_etas, solve_bound, table_sweep, threads_from_env, write_csv,
    CapacityOptions, CapacityResult, CapacityStatus,
};
use crate::export;
use crate::model::h2;
use crate::noisy::{search_bsc, AuxMode, SearchOptions};
use crate::program::build_program;
use crate::qgraph::BoundKind;
use crate::solver::{SolveOptions, SolveStatus};
use crate::verify::{self, Suite};
use crate::BehcError;

pub const SCHEMA: &str = "1";

#[derive(Parser, Debug)]
#[command(name = "behc", version, about = "Capacity bounds for the binary energy-harvesting channel")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Lb,
    Ub,
}

impl From<Kind> for BoundKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Lb => BoundKind::LowerBound,
            Kind::Ub => BoundKind::UpperBound,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Aux {
    Binary,
    Structured,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Capacity to a requested precision.
    Capacity {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        precision: f64,
        /// Bisect to the smallest node count meeting the precision.
        #[arg(long)]
        minimal_n: bool,
        #[command(flatten)]
        limits: Limits,
    },
    /// One certified bound at a fixed graph size.
    Bound {
        #[arg(long, value_enum)]
        side: Side,
        #[arg(long)]
        eta: f64,
        /// Number of graph nodes, N + 1.
        #[arg(long)]
        nodes: usize,
    },
    /// Analytic gap bound for a graph with this many nodes.
    GapBound {
        #[arg(long)]
        nodes: usize,
    },
    /// Capacity for a list of eta values, written as CSV.
    Sweep {
        /// `lo:hi:step` or a comma-separated list.
        #[arg(long)]
        etas: String,
        #[arg(long)]
        precision: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        minimal_n: bool,
        #[command(flatten)]
        limits: Limits,
    },
    /// Policy search for an achievable rate over a BSC.
    Noisy {
        #[arg(long)]
        eta: f64,
        /// BSC crossover probability.
        #[arg(long)]
        p: f64,
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Aux::Binary)]
        aux: Aux,
        /// Graph family; `ub` saturates at the last node.
        #[arg(long, value_enum, default_value_t = Kind::Ub)]
        graph: Kind,
    },
    /// Invariant suites.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Write a convex program to a text file.
    Export {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Limits {
    /// Largest node count tried.
    #[arg(long, default_value_t = 257)]
    max_nodes: usize,
}

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Fixed notation with 12 significant digits and at least 9 decimals.
pub fn fixed12(x: f64) -> String {
    if x == 0.0 {
        return format!("{:.12}", 0.0);
    }
    if !x.is_finite() || x.abs() < 1e-9 {
        return format!("{x:.11e}");
    }
    let decimals = (11 - x.abs().log10().floor() as i32).max(9) as usize;
    format!("{:.*}", decimals, sig12(x))
}

fn num(x: f64) -> Value {
    json!(sig12(x))
}

/// One line of output.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OutputRecord {
    pub schema: String,
    pub command: String,
    pub params: BTreeMap<String, Value>,
    pub results: BTreeMap<String, Value>,
}

impl OutputRecord {
    fn new(command: &str) -> Self {
        OutputRecord {
            schema: SCHEMA.into(),
            command: command.into(),
            params: BTreeMap::new(),
            results: BTreeMap::new(),
        }
    }

    fn param(mut self, k: &str, v: Value) -> Self {
        self.params.insert(k.into(), v);
        self
    }

    fn result(mut self, k: &str, v: Value) -> Self {
        self.results.insert(k.into(), v);
        self
    }

    fn error(self, e: &BehcError) -> Self {
        self.result("status", json!("error")).result("message", json!(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut parts = vec![format!("schema={}", self.schema), format!("command={}", self.command)];
        for (k, v) in self.params.iter().chain(&self.results) {
            let v = match v {
                Value::String(s) if s.is_empty() || s.contains(char::is_whitespace) => format!("{s:?}"),
                Value::String(s) => s.clone(),
                Value::Number(n) if n.is_f64() => fixed12(n.as_f64().unwrap()),
                other => other.to_string(),
            };
            parts.push(format!("{k}={v}"));
        }
        parts.join(" ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_text(),
            Format::Json => self.to_json(),
        }
    }
}

fn capacity_record(r: &CapacityResult) -> OutputRecord {
    OutputRecord::new("capacity")
        .param("eta", num(r.eta))
        .param("precision", num(r.precision))
        .result("value", num(r.value))
        .result("lower", num(r.lower))
        .result("upper", num(r.upper))
        .result("gap", num(r.gap()))
        .result("nodes", json!(r.nodes()))
        .result("psi", num(r.psi))
        .result("wall_time_s", num(r.wall_time_s))
        .result("status", serde_json::to_value(r.status).unwrap())
}

enum Failure {
    Usage(String),
    Numeric(Vec<OutputRecord>),
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn check_eta(eta: f64, open: bool) -> Result<(), Failure> {
    let ok = if open { eta > 0.0 && eta < 1.0 } else { (0.0..=1.0).contains(&eta) };
    if ok {
        Ok(())
    } else if open {
        Err(usage(format!("--eta must lie in (0, 1), got {eta}")))
    } else {
        Err(usage(format!("--eta must lie in [0, 1], got {eta}")))
    }
}

fn check_precision(p: f64) -> Result<(), Failure> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--precision must be positive, got {p}")))
    }
}

fn min_nodes(nodes: usize, least: usize) -> Result<usize, Failure> {
    if nodes < least {
        Err(usage(format!("--nodes must be at least {least}, got {nodes}")))
    } else {
        Ok(nodes - 1)
    }
}

fn capacity_options(minimal_n: bool, limits: &Limits) -> Result<CapacityOptions, Failure> {
    Ok(CapacityOptions {
        minimal_n,
        max_n: min_nodes(limits.max_nodes, 2)?,
        ..Default::default()
    })
}

fn execute(cmd: Command) -> Result<Vec<OutputRecord>, Failure> {
    match cmd {
        Command::Capacity {
            eta,
            precision,
            minimal_n,
            limits,
        } => {
            check_eta(eta, false)?;
            check_precision(precision)?;
            let opts = capacity_options(minimal_n, &limits)?;
            let rec = OutputRecord::new("capacity")
                .param("eta", num(eta))
                .param("precision", num(precision));
            let r = compute_capacity(eta, precision, &opts).map_err(|e| Failure::Numeric(vec![rec.error(&e)]))?;
            let rec = capacity_record(&r).param("minimal_n", json!(minimal_n));
            if r.status == CapacityStatus::PrecisionNotReached {
                return Err(Failure::Numeric(vec![rec]));
            }
            Ok(vec![rec])
        }
        Command::Bound { side, eta, nodes } => {
            check_eta(eta, true)?;
            let kind = match side {
                Side::Lower => BoundKind::LowerBound,
                Side::Upper => BoundKind::UpperBound,
            };
            let least = if kind == BoundKind::LowerBound { 1 } else { 2 };
            let n = min_nodes(nodes, least)?;
            let rec = OutputRecord::new("bound")
                .param("side", json!(format!("{side:?}").to_lowercase()))
                .param("eta", num(eta))
                .param("nodes", json!(nodes));
            let t0 = Instant::now();
            let r = solve_bound(kind, eta, n, &SolveOptions::default())
                .map_err(|e| Failure::Numeric(vec![rec.clone().error(&e)]))?;
            let value = match side {
                Side::Lower => r.lower_certified,
                Side::Upper => r.upper_certified,
            };
            let status = match r.status {
                SolveStatus::Optimal => "optimal",
                SolveStatus::MaxIterations => "max_iterations",
            };
            let rec = rec
                .result("value", num(value))
                .result("lower_certified", num(r.lower_certified))
                .result("upper_certified", num(r.upper_certified))
                .result("gap", num(r.gap()))
                .result("objective", num(r.objective))
                .result("residual_primal", num(r.residual_primal))
                .result("iterations", json!(r.iterations))
                .result("psi", num(gap_bound(n)))
                .result("wall_time_s", num(t0.elapsed().as_secs_f64()))
                .result("status", json!(status));
            Ok(vec![rec])
        }
        Command::GapBound { nodes } => {
            let n = min_nodes(nodes, 1)?;
            Ok(vec![OutputRecord::new("gap-bound")
                .param("nodes", json!(nodes))
                .result("psi", num(gap_bound(n)))])
        }
        Command::Sweep {
            etas,
            precision,
            out,
            minimal_n,
            limits,
        } => {
            check_precision(precision)?;
            let etas = parse_etas(&etas).map_err(|e| usage(e.to_string()))?;
            for &eta in &etas {
                check_eta(eta, true)?;
            }
            let opts = capacity_options(minimal_n, &limits)?;
            let results = table_sweep(&etas, precision, &opts, threads_from_env());
            let mut records = Vec::new();
            let mut rows = Vec::new();
            let mut failed = false;
            for (eta, r) in etas.iter().zip(results) {
                match r {
                    Ok(r) => {
                        failed |= r.status == CapacityStatus::PrecisionNotReached;
                        records.push(capacity_record(&r).param("out", json!(out.display().to_string())));
                        rows.push(r);
                    }
                    Err(e) => {
                        failed = true;
                        records.push(
                            OutputRecord::new("capacity")
                                .param("eta", num(*eta))
                                .param("precision", num(precision))
                                .error(&e),
                        );
                    }
                }
            }
            let written = std::fs::File::create(&out)
                .map_err(BehcError::from)
                .and_then(|f| write_csv(std::io::BufWriter::new(f), &rows));
            if let Err(e) = written {
                records.push(OutputRecord::new("sweep").param("out", json!(out.display().to_string())).error(&e));
                failed = true;
            }
            if failed {
                Err(Failure::Numeric(records))
            } else {
                Ok(records)
            }
        }
        Command::Noisy {
            eta,
            p,
            nodes,
            restarts,
            seed,
            aux,
            graph,
        } => {
            check_eta(eta, false)?;
            if !(0.0..=0.5).contains(&p) {
                return Err(usage(format!("--p must lie in [0, 0.5], got {p}")));
            }
            if restarts == 0 {
                return Err(usage("--restarts must be at least 1"));
            }
            let n = min_nodes(nodes, 2)?;
            let mode = match aux {
                Aux::Binary => AuxMode::Binary,
                Aux::Structured => AuxMode::Structured,
            };
            let opts = SearchOptions {
                restarts,
                seed,
                mode,
                shape: graph.into(),
                threads: threads_from_env(),
                ..Default::default()
            };
            let rec = OutputRecord::new("noisy")
                .param("eta", num(eta))
                .param("p", num(p))
                .param("nodes", json!(nodes))
                .param("restarts", json!(restarts))
                .param("seed", json!(seed))
                .param("aux", serde_json::to_value(mode).unwrap())
                .param("graph", json!(BoundKind::from(graph).short_name()));
            let t0 = Instant::now();
            let r = search_bsc(eta, p, n, &opts).map_err(|e| Failure::Numeric(vec![rec.clone().error(&e)]))?;
            Ok(vec![rec
                .result("rate", num(r.report.rate))
                .result("bcjr_residual", num(r.report.bcjr_residual))
                .result("stationary_residual", num(r.report.stationary_residual))
                .result("certified", json!(r.report.certified))
                .result("best_restart", json!(r.restart))
                .result("bsc_capacity", num(1.0 - h2(p)))
                .result("wall_time_s", num(t0.elapsed().as_secs_f64()))])
        }
        Command::Verify { suite } => {
            let s: Suite = suite.parse().map_err(usage)?;
            let checks = verify::run(s);
            let failed = checks.iter().any(|c| !c.passed);
            let records = checks
                .into_iter()
                .map(|c| {
                    OutputRecord::new("verify")
                        .param("suite", json!(c.suite))
                        .param("check", json!(c.name))
                        .result("passed", json!(c.passed))
                        .result("detail", json!(c.detail))
                })
                .collect();
            if failed {
                Err(Failure::Numeric(records))
            } else {
                Ok(records)
            }
        }
        Command::Export { kind, eta, nodes, out } => {
            check_eta(eta, true)?;
            let kind = BoundKind::from(kind);
            let n = min_nodes(nodes, if kind == BoundKind::LowerBound { 1 } else { 2 })?;
            let rec = OutputRecord::new("export")
                .param("kind", json!(kind.short_name()))
                .param("eta", num(eta))
                .param("nodes", json!(nodes))
                .param("out", json!(out.display().to_string()));
            let prog = build_program(kind, n, eta).map_err(|e| Failure::Numeric(vec![rec.clone().error(&e)]))?;
            export::write_file(&prog, &out).map_err(|e| Failure::Numeric(vec![rec.clone().error(&e)]))?;
            Ok(vec![rec
                .result("vars", json!(prog.num_vars()))
                .result("rows", json!(prog.num_rows()))
                .result("nnz", json!(prog.a().nnz()))])
        }
    }
}

/// Parses `argv`, runs the command, writes records to `out` and returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                2
            } else {
                let _ = write!(out, "{}", e.render());
                0
            };
            return code;
        }
    };
    let format = cli.format;
    let (records, code) = match execute(cli.command) {
        Ok(r) => (r, 0),
        Err(Failure::Numeric(r)) => (r, 1),
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            return 2;
        }
    };
    for r in &records {
        let _ = writeln!(out, "{}", r.render(format));
    }
    code
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("behc").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn sig12_rounds() {
        assert_eq!(sig12(0.1234567890123456), 0.123456789012);
        assert_eq!(sig12(0.0), 0.0);
        assert_eq!(fixed12(1.0), "1.00000000000");
        assert_eq!(fixed12(0.0010432), "0.00104320000000");
        assert_eq!(fixed12(123.25), "123.250000000");
    }

    #[test]
    fn gap_bound_text_and_json_agree() {
        let (code, text, _) = call(&["gap-bound", "--nodes", "10001"]);
        assert_eq!(code, 0);
        let (_, js, _) = call(&["--format", "json", "gap-bound", "--nodes", "10001"]);
        let rec: serde_json::Value = serde_json::from_str(js.trim()).unwrap();
        let psi = rec["results"]["psi"].as_f64().unwrap();
        assert!((psi - 0.0010432).abs() < 1e-7);
        let shown: f64 = text.split("psi=").nth(1).unwrap().trim().parse().unwrap();
        assert_eq!(shown, psi);
        assert_eq!(rec["schema"], "1");
    }

    #[test]
    fn argument_errors_exit_2() {
        assert_eq!(call(&["bound", "--side", "lower", "--eta", "1.5", "--nodes", "3"]).0, 2);
        assert_eq!(call(&["bound", "--side", "sideways", "--eta", "0.5", "--nodes", "3"]).0, 2);
        assert_eq!(call(&["gap-bound", "--nodes", "0"]).0, 2);
        assert_eq!(call(&["verify", "--suite", "bogus"]).0, 2);
        let (code, _, err) = call(&["frobnicate"]);
        assert_eq!(code, 2);
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        for sub in ["capacity", "bound", "gap-bound", "sweep", "noisy", "verify", "export"] {
            assert!(out.contains(sub), "{sub} missing from help");
        }
    }

    #[test]
    fn degenerate_capacity() {
        let (code, out, _) = call(&["capacity", "--eta", "1", "--precision", "1e-6"]);
        assert_eq!(code, 0);
        assert!(out.contains("value=1.00000000000 ") && out.contains("status=analytic"), "{out}");
    }

    #[test]
    fn unreachable_precision_exits_1() {
        let (code, out, _) = call(&["capacity", "--eta", "0.5", "--precision", "1e-9", "--max-nodes", "3"]);
        assert_eq!(code, 1);
        assert!(out.contains("status=precision_not_reached"), "{out}");
    }
}
