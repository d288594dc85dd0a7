//! Builds both graph families and follows an input sequence through them.

use behc::qgraph::{BoundKind, QGraph};

fn main() {
    let n = 4;
    let inputs = [0, 0, 0, 0, 0, 0, 1, 0, 0];
    for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
        let g = QGraph::build(kind, n);
        println!("{kind}: {} nodes, violations {:?}", g.num_nodes(), g.validate());
        for q in 0..g.num_nodes() {
            println!("  {q} --0--> {}  --1--> {}", g.next(q, 0), g.next(q, 1));
        }
        let mut q = 0;
        let path: Vec<usize> = inputs
            .iter()
            .map(|&x| {
                q = g.next(q, x);
                q
            })
            .collect();
        println!("  path for {inputs:?}: {path:?}");
    }
}
