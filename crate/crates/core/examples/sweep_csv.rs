//! Capacity over a grid of harvesting probabilities, written as CSV.
//!
//! `THREADS` caps the number of rows solved at once.

use behc::capacity::{parse_etas, table_sweep, threads_from_env, write_csv, CapacityOptions};

fn main() -> behc::Result<()> {
    let spec = std::env::args().nth(1).unwrap_or_else(|| "0.5:0.9:0.1".into());
    let etas = parse_etas(&spec)?;
    let rows: Vec<_> = table_sweep(&etas, 1e-4, &CapacityOptions::default(), threads_from_env())
        .into_iter()
        .collect::<behc::Result<_>>()?;
    write_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}
