use esmlab::bounds::{exhaustive_sweep, random_sweep, SweepConfig, SweepReport, CHECKS};

fn assert_clean(report: &SweepReport) {
    for (name, t) in CHECKS.iter().zip(&report.tallies) {
        assert_eq!(t.violated, 0, "{name}: {t:?}");
        assert!(t.exercised(), "{name} never exercised: {t:?}");
    }
}

#[test]
fn exhaustive_dimension_four_has_no_violations() {
    let report = exhaustive_sweep(4, 16, false, &SweepConfig::default()).unwrap();
    assert_eq!(report.triples, 3u64.pow(16));
    assert_clean(&report);
}

#[test]
fn random_dimension_twelve_has_no_violations() {
    let report = random_sweep(12, 10_000, 2024, &SweepConfig::default()).unwrap();
    assert_eq!(report.triples, 10_000);
    assert_clean(&report);
}

#[test]
fn random_sweep_is_deterministic() {
    let cfg = SweepConfig::default();
    assert_eq!(random_sweep(9, 300, 5, &cfg).unwrap(), random_sweep(9, 300, 5, &cfg).unwrap());
}
