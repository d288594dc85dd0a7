//! The eta-free bound on the distance between the two programs.

use behc::capacity::gap_bound;

fn main() {
    for n in [0, 1, 10, 100, 1000, 10_000] {
        println!("psi({n:>5}) = {:.10}", gap_bound(n));
    }
    // smallest N whose guarantee alone reaches 1e-3
    let n = (0..).find(|&n| gap_bound(n) <= 1e-3).unwrap();
    println!("psi(N) <= 1e-3 from N = {n}");
}
