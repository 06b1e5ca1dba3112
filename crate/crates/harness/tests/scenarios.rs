use safekeeper_harness::scenarios::{list, run_scenario};

#[test]
fn every_scenario_passes() {
    let mut failed = Vec::new();
    for name in list() {
        let r = run_scenario(name, 7).unwrap();
        for a in r.checks.iter().filter(|a| !a.passed) {
            failed.push(format!("{name}: {} ({})", a.name, a.detail));
        }
        if !r.passed {
            failed.push(format!("{name}: overall"));
        }
    }
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn same_seed_same_report() {
    for name in ["honest-login", "failover", "rollback-replay"] {
        let a = serde_json::to_string(&run_scenario(name, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&run_scenario(name, 42).unwrap()).unwrap();
        assert_eq!(a, b, "{name}");
    }
}
