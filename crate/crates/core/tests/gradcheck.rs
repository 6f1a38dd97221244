mod common;

use common::gradcheck::{catalog, run_all, SEEDS, TOLERANCE};

#[test]
fn every_operation_matches_central_differences() {
    let mut failed = Vec::new();
    for (name, err, seed) in run_all(SEEDS) {
        println!("{name:<36} worst {err:.2e} (seed {seed})");
        if !(err <= TOLERANCE) {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "gradient mismatch in {failed:?}");
}

#[test]
fn catalog_names_are_unique() {
    let names: Vec<_> = catalog().iter().map(|c| c.name).collect();
    for (i, n) in names.iter().enumerate() {
        assert!(!names[..i].contains(n), "duplicate case {n}");
    }
}
