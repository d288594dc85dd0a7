//! Capacity to a requested precision, growing the graph until the bounds meet.

use behc::capacity::{compute_capacity, CapacityOptions};

fn main() -> behc::Result<()> {
    let eta: f64 = std::env::args().nth(1).map_or(0.7, |s| s.parse().expect("eta"));
    let precision: f64 = std::env::args().nth(2).map_or(1e-5, |s| s.parse().expect("precision"));
    for minimal_n in [false, true] {
        let opts = CapacityOptions {
            minimal_n,
            ..Default::default()
        };
        let r = compute_capacity(eta, precision, &opts)?;
        println!(
            "eta={eta} minimal_n={minimal_n}: C = {:.9} in [{:.9}, {:.9}] with {} nodes ({:?}, {:.2}s)",
            r.value,
            r.lower,
            r.upper,
            r.nodes(),
            r.status,
            r.wall_time_s
        );
    }
    Ok(())
}
