//! Brute-force grid search against the interior-point solver on tiny graphs.

use behc::oracle::grid_search_lb;
use behc::program::build_program;
use behc::qgraph::BoundKind;
use behc::solver::{maximize, SolveOptions};

fn main() -> behc::Result<()> {
    for eta in [0.2, 0.5, 0.8] {
        for n in [1, 2] {
            let grid = grid_search_lb(eta, n, 1e-3)?;
            let r = maximize(&build_program(BoundKind::LowerBound, n, eta)?, None, &SolveOptions::default())?;
            println!(
                "eta={eta} N={n}: grid {:.7} at {:?} ({} points), solver [{:.7}, {:.7}]",
                grid.value, grid.argmax, grid.evaluations, r.lower_certified, r.upper_certified
            );
        }
    }
    Ok(())
}
