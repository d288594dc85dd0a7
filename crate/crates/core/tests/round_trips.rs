use behc::capacity::{parse_etas, read_csv, table_sweep, write_csv, CapacityOptions, CSV_HEADER};
use behc::cli::sig12;
use behc::export;
use behc::program::build_program;
use behc::qgraph::BoundKind;

#[test]
fn sweep_csv_round_trip_at_12_digits() {
    let etas = parse_etas("0.6:0.8:0.2").unwrap();
    assert_eq!(etas, vec![0.6, 0.8]);
    let rows: Vec<_> = table_sweep(&etas, 1e-3, &CapacityOptions::default(), 2)
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let back = read_csv(&text).unwrap();
    for (r, (eta, lb, nodes, ub)) in rows.iter().zip(back) {
        assert_eq!(eta, sig12(r.eta));
        assert_eq!(lb, sig12(r.lower));
        assert_eq!(ub, sig12(r.upper));
        assert_eq!(nodes, r.nodes());
    }
}

#[test]
fn sweep_command_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_behc"))
        .args(["sweep", "--etas", "0.7,0.9", "--precision", "1e-3", "--out", path.to_str().unwrap()])
        .env("THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let rows = read_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for (_, lb, _, ub) in rows {
        assert!(0.0 < lb && lb <= ub && ub - lb <= 1e-3);
    }
}

#[test]
fn export_preserves_every_entry() {
    for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
        let prog = build_program(kind, 6, 0.61).unwrap();
        let e = export::parse(&export::to_text(&prog)).unwrap();
        assert_eq!(e.triplets, prog.a().entries());
        let c: Vec<f64> = e.c.iter().map(|&(_, v)| v).collect();
        assert_eq!(c, prog.linear_cost());
    }
}
