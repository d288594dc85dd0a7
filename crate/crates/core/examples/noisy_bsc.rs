//! Achievable rates over a binary symmetric channel by policy search.
//!
//! Rates are certified only when the policy is BCJR-invariant. The reference
//! column is an MDP value iteration result for the same channel.

use behc::model::h2;
use behc::noisy::{search_bsc, SearchOptions};

const REFERENCE: [(f64, [f64; 4]); 2] = [
    (0.5, [0.3271, 0.1730, 0.0736, 0.0180]),
    (1.0, [0.5310, 0.2781, 0.1187, 0.0290]),
];

fn main() -> behc::Result<()> {
    let opts = SearchOptions {
        restarts: 2,
        ..Default::default()
    };
    for (eta, refs) in REFERENCE {
        for (p, reference) in [0.1, 0.2, 0.3, 0.4].into_iter().zip(refs) {
            let r = search_bsc(eta, p, 3, &opts)?;
            println!(
                "eta={eta} p={p}: rate {:.4} certified={} residual {:.1e} reference {reference} (1-H(p) = {:.4})",
                r.report.rate,
                r.report.certified,
                r.report.bcjr_residual,
                1.0 - h2(p)
            );
        }
    }
    Ok(())
}
