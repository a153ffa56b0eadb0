use std::collections::BTreeMap;

use tagbench_testkit::grad::sweep;

#[test]
fn every_operation_matches_finite_differences_over_100_seeds() {
    let outcomes = sweep(0..100);
    let mut worst: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    for o in &outcomes {
        let e = worst.entry(o.name).or_insert((0.0, 0));
        if o.rel_error > e.0 || o.rel_error.is_nan() {
            *e = (o.rel_error, o.seed);
        }
    }
    for (name, (err, seed)) in &worst {
        println!("{name:<20} worst {err:.2e} (seed {seed})");
    }
    let failing: Vec<_> = worst.iter().filter(|(_, (e, _))| e.is_nan() || *e > 1e-3).collect();
    assert!(failing.is_empty(), "ops above 1e-3: {failing:?}");
}
