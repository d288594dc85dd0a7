//! Certified lower and upper bounds at one graph size, with the barrier trace.

use behc::capacity::{gap_bound, solve_pair};
use behc::solver::SolveOptions;

fn main() -> behc::Result<()> {
    let (eta, n) = (0.7, 11);
    let pair = solve_pair(eta, n, &SolveOptions::default())?;
    for r in [&pair.lower, &pair.upper] {
        println!(
            "{}: [{:.10}, {:.10}] after {} Newton steps ({:?})",
            r.kind, r.lower_certified, r.upper_certified, r.iterations, r.status
        );
        for s in r.stages.iter().step_by(4) {
            println!("    mu={:.1e} gap={:.2e}", s.mu, s.gap());
        }
    }
    println!("capacity in [{:.9}, {:.9}], psi({n}) = {:.6}", pair.a(), pair.b(), gap_bound(n));
    let pol = &pair.lower.lower_policy;
    println!("attempt probabilities of the lower-bound policy at node 3: {:?}", &pol.table()[3]);
    Ok(())
}
