//! Invariant suites runnable from the command line.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::capacity::gap_bound;
use crate::model::{h2, strategy_f, Dmc, HarvestParam};
use crate::noisy::{search_bsc, AuxMode, NoisyInstance, NoisyPolicy, SearchOptions};
use crate::oracle::{finite_diff_gradient, grid_search_lb, simulate_chain, SimConfig};
use crate::program::{build_program, expected_rows, Policy};
use crate::qgraph::{BoundKind, QGraph};
use crate::solver::{maximize, SolveOptions};

const KINDS: [BoundKind; 2] = [BoundKind::LowerBound, BoundKind::UpperBound];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Qgraph,
    Model,
    Program,
    Solver,
    Noisy,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "qgraph" => Suite::Qgraph,
            "model" => Suite::Model,
            "program" => Suite::Program,
            "solver" => Suite::Solver,
            "noisy" => Suite::Noisy,
            "all" => Suite::All,
            _ => return Err(format!("unknown suite {s:?}")),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(
    suite: &'static str,
    name: &'static str,
    f: impl FnOnce() -> crate::Result<(bool, String)>,
) -> Check {
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        suite,
        name,
        passed,
        detail,
    }
}

pub fn run(suite: Suite) -> Vec<Check> {
    let all = suite == Suite::All;
    let mut out = Vec::new();
    if all || suite == Suite::Qgraph {
        out.extend(qgraph_suite());
    }
    if all || suite == Suite::Model {
        out.extend(model_suite());
    }
    if all || suite == Suite::Program {
        out.extend(program_suite());
    }
    if all || suite == Suite::Solver {
        out.extend(solver_suite());
    }
    if all || suite == Suite::Noisy {
        out.extend(noisy_suite());
    }
    out
}

fn qgraph_suite() -> Vec<Check> {
    let s = "qgraph";
    vec![
        check(s, "families_validate", || {
            let bad: Vec<String> = KINDS
                .iter()
                .flat_map(|&k| (0..=40).map(move |n| (k, n)))
                .filter(|&(k, n)| !QGraph::build(k, n).validate().is_empty())
                .map(|(k, n)| format!("{k} N={n}"))
                .collect();
            Ok((bad.is_empty(), format!("failures: {bad:?}")))
        }),
        check(s, "zeros_then_one", || {
            let ok = (1..=20).all(|n| {
                KINDS.iter().all(|&k| {
                    let g = QGraph::build(k, n);
                    g.walk(0, &vec![0; n]) == n && g.walk(0, &[0, 0, 1]) == 0
                })
            });
            Ok((ok, "N zeros reach node N; a one resets".into()))
        }),
    ]
}

fn model_suite() -> Vec<Check> {
    let s = "model";
    let mut out = vec![
        check(s, "laws_sum_to_one", || {
            let mut worst: f64 = 0.0;
            for k in 0..=20 {
                let h = HarvestParam::new(k as f64 / 20.0)?;
                for n in 1..6 {
                    for q in 0..=n {
                        for (x, st) in [(0u8, 0u8), (0, 1), (1, 1)] {
                            let a = h.noiseless_law(0, x, st)? + h.noiseless_law(1, x, st)?;
                            let b = h.modified_law(n, 0, x, st, q)? + h.modified_law(n, 1, x, st, q)?;
                            worst = worst.max((a - 1.0).abs()).max((b - 1.0).abs());
                        }
                    }
                }
            }
            Ok((worst <= 1e-15, format!("max deviation {worst:e}")))
        }),
        check(s, "battery_constraint", || Ok(((0..64).all(|u| strategy_f(u, 0) == 0), String::new()))),
    ];
    for eta in [0.3, 0.7] {
        for kind in KINDS {
            out.push(check(s, "monte_carlo_marginals", || monte_carlo_marginals(kind, eta, 5, 10_000_000)));
        }
    }
    out
}

/// Largest z-score of the simulated `P(S = 0 | u, q)` against its closed form.
pub fn monte_carlo_marginals(kind: BoundKind, eta: f64, n: usize, steps: u64) -> crate::Result<(bool, String)> {
    let h = HarvestParam::new(eta)?;
    let cfg = SimConfig {
        steps,
        seed: 2024,
        ..Default::default()
    };
    let sim = simulate_chain(kind, n, eta, |_, _| 0.5, &cfg)?;
    let mut worst: f64 = 0.0;
    let mut exact_zero = true;
    for q in 0..=n {
        for u in 0..=q {
            let Some((p, se)) = sim.empty_given(u, q) else { continue };
            let want = h.marginal_pi(kind, n, u, q)?;
            if want == 0.0 {
                exact_zero &= p == 0.0;
            } else if se > 0.0 {
                worst = worst.max((p - want).abs() / se);
            }
        }
    }
    Ok((
        worst <= 3.0 && exact_zero,
        format!("{kind} eta={eta} N={n} max |z| = {worst:.3}"),
    ))
}

fn program_suite() -> Vec<Check> {
    let s = "program";
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    vec![
        check(s, "row_counts", || {
            let mut bad = Vec::new();
            for n in 0..=60 {
                for k in KINDS {
                    let p = build_program(k, n, 0.5)?;
                    if p.num_rows() != expected_rows(k, n) {
                        bad.push((k, n));
                    }
                }
            }
            Ok((bad.is_empty(), format!("mismatches: {bad:?}")))
        }),
        check(s, "policy_joints_feasible", || {
            let mut worst: f64 = 0.0;
            for n in [1, 2, 5, 10] {
                for k in KINDS {
                    let prog = build_program(k, n, 0.45)?;
                    for _ in 0..100 {
                        let pol = Policy::random(k, n, &mut rng, 0.01, 0.99);
                        worst = worst.max(prog.residual(&prog.joint_from_policy(&pol, None)?.v));
                    }
                }
            }
            Ok((worst <= 1e-12, format!("max |Av - b| = {worst:e}")))
        }),
        check(s, "concavity", || concavity(&mut rng, 100)),
        check(s, "gradient", || gradient_check(&mut rng, 20)),
    ]
}

/// Worst midpoint-concavity slack over random feasible pairs.
pub fn concavity(rng: &mut ChaCha8Rng, pairs: usize) -> crate::Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for n in [1, 2, 5] {
        for k in KINDS {
            let prog = build_program(k, n, 0.35)?;
            for _ in 0..pairs {
                let a = prog.joint_from_policy(&Policy::random(k, n, rng, 0.01, 0.99), None)?.v;
                let b = prog.joint_from_policy(&Policy::random(k, n, rng, 0.01, 0.99), None)?.v;
                let (fa, fb) = (prog.objective(&a), prog.objective(&b));
                for lam in [0.25, 0.5, 0.75] {
                    let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
                    worst = worst.min(prog.objective(&mid) - lam * fa - (1.0 - lam) * fb);
                }
            }
        }
    }
    Ok((worst >= -1e-12, format!("min slack {worst:e}")))
}

/// Worst relative error of the analytic gradient against central differences.
pub fn gradient_check(rng: &mut ChaCha8Rng, points: usize) -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let n = 1 + i % 5;
        let k = KINDS[i % 2];
        let prog = build_program(k, n, 0.2 + 0.03 * i as f64)?;
        let v = prog.joint_from_policy(&Policy::random(k, n, rng, 0.05, 0.95), None)?.v;
        let g = prog.gradient(&v)?;
        let fd = finite_diff_gradient(&prog, &v, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:e}")))
}

fn solver_suite() -> Vec<Check> {
    let s = "solver";
    let opts = SolveOptions::default();
    let mut out = Vec::new();
    for eta in [0.2, 0.5, 0.8] {
        out.push(check(s, "grid_oracle_inside_interval", || grid_agreement(eta)));
    }
    out.push(check(s, "single_node_lower_is_zero", || {
        let r = maximize(&build_program(BoundKind::LowerBound, 0, 0.5)?, None, &opts)?;
        Ok((r.lower_certified.abs() <= 1e-9 && r.upper_certified.abs() <= 1e-9, format!("[{:e}, {:e}]", r.lower_certified, r.upper_certified)))
    }));
    out.push(check(s, "bounds_within_gap_bound", || {
        let mut worst = f64::NEG_INFINITY;
        for (eta, n) in [(0.3, 4), (0.6, 6), (0.9, 3)] {
            let lb = maximize(&build_program(BoundKind::LowerBound, n, eta)?, None, &opts)?;
            let ub = maximize(&build_program(BoundKind::UpperBound, n, eta)?, None, &opts)?;
            let gap = ub.upper_certified - lb.lower_certified;
            if gap < 0.0 {
                return Ok((false, format!("lower above upper at eta={eta} N={n}")));
            }
            worst = worst.max(gap - gap_bound(n) - 2.0 * opts.gap_tol);
        }
        Ok((worst <= 0.0, format!("max (b - a) - psi(N) = {worst:e}")))
    }));
    out
}

/// Certified interval at `N = 1` against the grid optimum.
pub fn grid_agreement(eta: f64) -> crate::Result<(bool, String)> {
    let grid = grid_search_lb(eta, 1, 1e-3)?;
    let r = maximize(&build_program(BoundKind::LowerBound, 1, eta)?, None, &SolveOptions::default())?;
    let ok = grid.value >= r.lower_certified - 1e-4 && grid.value <= r.upper_certified + 1e-4;
    Ok((
        ok,
        format!(
            "eta={eta} grid {:.9} in [{:.9}, {:.9}]",
            grid.value, r.lower_certified, r.upper_certified
        ),
    ))
}

fn noisy_suite() -> Vec<Check> {
    let s = "noisy";
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    vec![
        check(s, "noiseless_bcjr_invariance", || noiseless_bcjr(&mut rng, 100)),
        check(s, "noiseless_rate_identity", || noiseless_identity(&mut rng, 50)),
        check(s, "bsc_at_full_harvest", || {
            let r = search_bsc(1.0, 0.1, 3, &SearchOptions::default())?;
            let want = 1.0 - h2(0.1);
            Ok((
                r.report.certified && (r.report.rate - want).abs() <= 1e-4,
                format!("rate {:.6} vs {want:.6}", r.report.rate),
            ))
        }),
    ]
}

/// Largest BCJR residual of random structured policies over a noiseless channel.
pub fn noiseless_bcjr(rng: &mut ChaCha8Rng, count: usize) -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 1 + i % 8;
        let eta = 0.05 + 0.9 * (i as f64 / count as f64);
        let inst = NoisyInstance::new(eta, Dmc::noiseless(), n, AuxMode::Structured, BoundKind::LowerBound)?;
        let pol = Policy::random(BoundKind::LowerBound, n, rng, 0.01, 0.99);
        worst = worst.max(inst.bcjr_residual(&NoisyPolicy::from_program(&inst, &pol)?)?);
    }
    Ok((worst <= 1e-10, format!("max residual {worst:e}")))
}

/// Largest gap between the noisy rate at `p = 0` and the program objective.
pub fn noiseless_identity(rng: &mut ChaCha8Rng, count: usize) -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 1 + i % 10;
        let eta = 0.1 + 0.8 * (i as f64 / count as f64);
        let prog = build_program(BoundKind::LowerBound, n, eta)?;
        let inst = NoisyInstance::new(eta, Dmc::bsc(0.0)?, n, AuxMode::Structured, BoundKind::LowerBound)?;
        let pol = Policy::random(BoundKind::LowerBound, n, rng, 0.01, 0.99);
        let f = prog.objective(&prog.joint_from_policy(&pol, None)?.v);
        let r = inst.rate(&NoisyPolicy::from_program(&inst, &pol)?)?;
        worst = worst.max((r.rate - f).abs());
    }
    Ok((worst <= 1e-10, format!("max difference {worst:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        for c in run(Suite::Qgraph).into_iter().chain(run(Suite::Program)) {
            assert!(c.passed, "{}::{} {}", c.suite, c.name, c.detail);
        }
    }

    #[test]
    fn suite_names() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("bogus".parse::<Suite>().is_err());
    }
}
