//! Battery dynamics, channel laws and the closed-form marginals.

use behc::model::{state_evolution, strategy_f, AuxSets, HarvestParam};
use behc::qgraph::BoundKind;

fn main() -> behc::Result<()> {
    let h = HarvestParam::new(0.3)?;
    println!("state evolution s' = min(s - x + e, 1):");
    for (s, x, e) in [(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 1, 0), (1, 1, 1)] {
        println!("  s={s} x={x} e={e} -> {}", state_evolution(s, x, e)?);
    }
    println!("strategy x = f(u+, s): f(0,1)={} f(0,0)={} f(2,1)={}", strategy_f(0, 1), strategy_f(0, 0), strategy_f(2, 1));
    println!("P(s+=0 | x=1, s=1) = {:.3}", h.noiseless_law(0, 1, 1)?);
    println!("P(s+=0 | x=0, s=0) = {:.3}", h.noiseless_law(0, 0, 0)?);

    let n = 3;
    for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
        let aux = AuxSets::new(kind, n);
        println!("{kind}, N={n}:");
        for q in 0..=n {
            let pi: Vec<String> = aux
                .u_set(q)
                .map(|u| format!("{:.4}", h.marginal_pi(kind, n, u, q).unwrap()))
                .collect();
            println!("  q={q}: U+ sets {:?}, P(S=0|u,q) = [{}]", aux.uplus_set(0, q), pi.join(", "));
        }
    }
    Ok(())
}
