//! Simulates the battery chain and compares P(S=0 | u, q) to the closed form.

use behc::model::HarvestParam;
use behc::oracle::{simulate_chain, SimConfig};
use behc::qgraph::BoundKind;

fn main() -> behc::Result<()> {
    let (eta, n) = (0.3, 3);
    let h = HarvestParam::new(eta)?;
    let cfg = SimConfig {
        steps: 2_000_000,
        seed: 11,
        ..Default::default()
    };
    for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
        let sim = simulate_chain(kind, n, eta, |u, _| 0.4 + 0.1 * u as f64, &cfg)?;
        println!("{kind}:");
        for q in 0..=n {
            for u in 0..=q {
                if let Some((p, se)) = sim.empty_given(u, q) {
                    let want = h.marginal_pi(kind, n, u, q)?;
                    println!("  q={q} u={u}: {p:.5} +- {se:.5}  closed form {want:.5}");
                }
            }
        }
    }
    Ok(())
}
