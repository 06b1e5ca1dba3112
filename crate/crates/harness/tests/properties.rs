use proptest::prelude::*;
use safekeeper_harness::net::{Faults, SimNet};
use safekeeper_harness::{rollback, scenarios};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn accepted_passwords_never_reach_the_host(seed in any::<u64>(), pick in 0usize..10) {
        let name = scenarios::list()[pick];
        let r = scenarios::run_scenario(name, seed).unwrap();
        prop_assert!(r.tap.leaks.is_empty(), "{name}: {:?}", r.tap.leaks);
        prop_assert!(r.passed, "{name} seed {seed}");
    }

    #[test]
    fn rollback_never_beats_the_baseline(seed in any::<u64>()) {
        let s = rollback::run_schedule(seed, 50, 144);
        prop_assert_eq!(s.violation_at, None);
        for i in 0..rollback::SALTS {
            prop_assert!(s.adversary_successes[i] <= s.baseline_successes[i]);
        }
    }

    #[test]
    fn network_conserves_messages(seed in any::<u64>(), drop in 0.0f64..1.0, dup in 0.0f64..1.0, n in 0usize..200) {
        let mut net = SimNet::new(seed, Faults { drop, duplicate: dup, reorder: true });
        for i in 0..n {
            net.send("x", i);
        }
        let got = net.drain();
        let st = net.stats().clone();
        prop_assert_eq!(got.len() as u64, st.sent - st.dropped + st.duplicated);
        prop_assert_eq!(st.delivered, got.len() as u64);
        prop_assert_eq!(net.in_flight(), 0);
    }
}
