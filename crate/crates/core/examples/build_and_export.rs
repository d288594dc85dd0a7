//! Assembles both convex programs and writes them in the text export format.

use behc::export;
use behc::program::{build_program, expected_rows};
use behc::qgraph::BoundKind;

fn main() -> behc::Result<()> {
    let dir = std::env::temp_dir();
    for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
        for n in [1, 5, 20] {
            let prog = build_program(kind, n, 0.5)?;
            println!(
                "{kind} N={n:>2}: {:>5} vars, {:>5} rows (expected {}), {:>6} nonzeros",
                prog.num_vars(),
                prog.num_rows(),
                expected_rows(kind, n),
                prog.a().nnz()
            );
        }
        let prog = build_program(kind, 2, 0.5)?;
        let path = dir.join(format!("behc_{}_n2.txt", kind.short_name()));
        export::write_file(&prog, &path)?;
        let back = export::read_file(&path)?;
        println!("  wrote {} ({} triplets)", path.display(), back.triplets.len());
    }
    Ok(())
}
