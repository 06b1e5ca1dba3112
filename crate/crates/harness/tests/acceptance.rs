//! The acceptance gate: one PASS/FAIL line per criterion, non-zero exit if
//! any fails. Runs as its own binary so it can install the counting
//! allocator for the memory criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use aes::Aes128;
use cmac::Mac;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use safekeeper_core::cmac::Cmac;
use safekeeper_core::enclave::{Credential, Enclave, Restore};
use safekeeper_core::{ProcessError, Salt};
use safekeeper_harness::bench::{self, CountingAlloc, Target};
use safekeeper_harness::model_check::{self, ModelConfig};
use safekeeper_harness::report::ScenarioReport;
use safekeeper_harness::sim::{World, DAY};
use safekeeper_harness::{corruption, guessing, rollback, scenarios, vectors};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

/// Outcome of one criterion: pass flag plus a one-line summary.
type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn scenario_checks(r: &ScenarioReport, names: &[&str]) -> Result<(), String> {
    if !r.passed {
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(format!("{} failed: {failed:?}", r.scenario));
    }
    for n in names {
        if !r.checks.iter().any(|c| c.name == *n && c.passed) {
            return Err(format!("{}: check {n} missing", r.scenario));
        }
    }
    Ok(())
}

fn rate_limit_exactness() -> Verdict {
    let w = World::new();
    let e = Enclave::init(w.platform("rate", 1), w.config(144), None).unwrap();
    let mut bad = Vec::new();
    for window in 0..3 {
        for s in 0..10u64 {
            let salt = Salt((s * 7919 + 1).to_be_bytes());
            let ok = (0..144)
                .filter(|_| e.process(Credential::Plain(b"pw"), salt).is_ok())
                .count();
            let extra = e.process(Credential::Plain(b"pw"), salt);
            if ok != 144 || extra != Err(ProcessError::RateLimited) {
                bad.push(format!("window {window} salt {s}: {ok} then {extra:?}"));
            }
        }
        w.clock.advance(DAY);
        e.reset_attempts();
    }
    (
        bad.is_empty(),
        format!("3 windows x 10 salts, exactly 144 then RateLimited; {bad:?}"),
    )
}

fn guessing_time() -> Verdict {
    let analytic = guessing::windows_to_half(20, 144);
    // Oracle: half of 2^20 at 144 per window, rounded up.
    let oracle = (1u64 << 19).div_ceil(144);
    // Oracle for the scaled median: the smallest m with P(found by window
    // m) >= 1/2 when the password sits at a uniform position in 1..=1024.
    let scaled_oracle = (1..)
        .find(|&m: &u64| (1..=1024u64).filter(|k| k.div_ceil(16) <= m).count() * 2 >= 1024)
        .unwrap() as f64;
    let s = guessing::scaled_study(20_240_601, 201, 1 << 10, 16);
    let within = (s.median_windows - scaled_oracle).abs() / scaled_oracle <= 0.15;
    (
        analytic == 3641 && oracle == 3641 && scaled_oracle == 32.0 && s.expected_median == 32 && within,
        format!(
            "analytic {analytic} (oracle {oracle}); scaled median {} over {} runs vs {scaled_oracle} (±15%)",
            s.median_windows, s.runs
        ),
    )
}

fn offline_theft() -> Verdict {
    let mut summary = Vec::new();
    let mut ok = true;
    for seed in [1, 2] {
        let r = scenarios::run_scenario("offline-db-theft", seed).unwrap();
        ok &= scenario_checks(&r, &["offline-verified-guesses", "control-with-true-key"]).is_ok();
        ok &= r.metrics["trials"] == scenarios::OFFLINE_TRIALS && r.metrics["verified"] == 0;
        summary.push(format!(
            "seed {seed}: {} trials, {} verified",
            r.metrics["trials"], r.metrics["verified"]
        ));
    }
    (ok, summary.join("; "))
}

fn rollback_penalties() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["rollback-replay", "crash-no-seal"] {
        let r = scenarios::run_scenario(name, 5).unwrap();
        if let Err(e) = scenario_checks(&r, &[]) {
            notes.push(e);
            ok = false;
        }
    }
    // A direct replay, independent of the scenario code.
    let w = World::new();
    let p = w.platform("direct", 9);
    let e = Enclave::init(p.clone(), w.config(144), None).unwrap();
    let blob = e.shutdown();
    let e = Enclave::init(p.clone(), w.config(144), Some(&blob)).unwrap();
    e.process(Credential::Plain(b"x"), Salt([1; 8])).unwrap();
    e.crash();
    let replayed = Enclave::init(p, w.config(144), Some(&blob)).unwrap();
    ok &= replayed.restore_outcome() == Restore::Penalized;

    let seeds = 300u64;
    let mut penalized = 0;
    let mut ahead = Vec::new();
    for seed in 0..seeds {
        let s = rollback::run_schedule(seed, 50, 144);
        penalized += s.penalized_restores;
        if let Some(at) = s.violation_at {
            ahead.push((seed, at));
        }
    }
    ok &= ahead.is_empty() && penalized > 0;
    notes.push(format!(
        "replay and crash penalized; {seeds} 50-event schedules, {penalized} penalized restores, adversary ahead in {ahead:?}"
    ));
    (ok, notes.join("; "))
}

fn attestation_soundness() -> Verdict {
    let w = World::new();
    let study = corruption::study(&w);
    let mut ok = study.sound();
    let mut notes = vec![format!(
        "{} corruptions, {} rejected, control accepted: {}",
        study.cases(),
        study.rejected(),
        study.control_accepted
    )];
    for (name, must) in [
        (
            "mitm-key-swap",
            &["swapped-key-rejected", "tampered-reports-detected"][..],
        ),
        ("phishing-wrong-measurement", &["off-whitelist-refused"][..]),
    ] {
        if let Err(e) = scenario_checks(&scenarios::run_scenario(name, 3).unwrap(), must) {
            ok = false;
            notes.push(e);
        }
    }
    for reason in ["UntrustedMeasurement", "KeyBindingMismatch", "SignatureError"] {
        ok &= study.reasons.contains_key(reason);
    }
    (ok, notes.join("; "))
}

fn replication() -> Verdict {
    let trace = scenarios::run_scenario("multi-primary-rates", 1).unwrap();
    let trace_ok = scenario_checks(
        &trace,
        &[
            "rates-split",
            "per-primary-grants",
            "rates-after-revocation",
            "revoked-primary-halts",
        ],
    );
    let failover = scenarios::run_scenario("failover", 1).unwrap();
    let failover_ok = scenario_checks(&failover, &["live-sum-bounded"]);
    let config = ModelConfig::default();
    let start = Instant::now();
    let mc = model_check::check(config.clone());
    let transfers = mc.transitions_by_action.get("transfer").copied().unwrap_or(0);
    let ok = trace_ok.is_ok()
        && failover_ok.is_ok()
        && config.replicas == 3
        && config.depth == 8
        && mc.violations.is_empty()
        && mc.max_live_rate_sum <= 144
        && transfers > 0;
    (
        ok,
        format!(
            "worked trace {:?}; model check {} replicas depth {}: {} states, {} transitions ({transfers} transfers), max live sum {}, {} violations in {:.0?}",
            trace_ok.err().unwrap_or_else(|| "exact".into()),
            config.replicas,
            config.depth,
            mc.distinct_states,
            mc.transitions,
            mc.max_live_rate_sum,
            mc.violations.len(),
            start.elapsed()
        ),
    )
}

fn cmac_equivalence() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(0xc0ac);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let key: [u8; 16] = rng.gen();
        let len = rng.gen_range(0..100);
        let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let split = rng.gen_range(0..=len);
        let mut oracle = <cmac::Cmac<Aes128> as Mac>::new_from_slice(&key).unwrap();
        oracle.update(&msg);
        let want: [u8; 16] = oracle.finalize().into_bytes().into();
        let ours = Cmac::new(&key);
        if ours.tag(&msg) != want || ours.tag_parts(&[&msg[..split], &msg[split..]]) != want {
            mismatches += 1;
        }
    }
    let key: [u8; 16] = hex::decode(vectors::RFC4493_KEY).unwrap().try_into().unwrap();
    let published = vectors::RFC4493
        .iter()
        .filter(|(m, t)| hex::encode(Cmac::new(&key).tag(&hex::decode(m).unwrap())) == *t)
        .count();
    (
        mismatches == 0 && published == vectors::RFC4493.len(),
        format!("1000 random cases, {mismatches} mismatches; {published}/4 published vectors"),
    )
}

fn resources() -> Verdict {
    let t = bench::throughput(Target::EnclaveRaw, Duration::from_secs(1));
    let base = bench::memory(0);
    let m = bench::memory(1_000_000);
    match (base, m) {
        (Some(base), Some(m)) => (
            t.per_second >= 10_000.0 && m.bytes_per_salt <= 128.0,
            format!(
                "{:.0} process()/s (floor 10000); {:.1} B/salt at 10^6 salts (limit 128), baseline {} B",
                t.per_second, m.bytes_per_salt, base.baseline_bytes
            ),
        ),
        _ => (false, "counting allocator not active".into()),
    }
}

fn confidentiality_tap() -> Verdict {
    let (mut runs, mut secrets, mut events) = (0, 0, 0);
    let mut leaks = Vec::new();
    for seed in 1..=4 {
        for name in scenarios::list() {
            let r = scenarios::run_scenario(name, seed).unwrap();
            runs += 1;
            secrets += r.tap.secrets_checked;
            events += r.tap.events;
            for l in &r.tap.leaks {
                leaks.push(format!("{name}/{seed}: {l}"));
            }
        }
    }
    (
        leaks.is_empty() && secrets > 0,
        format!("{runs} scenario runs, {secrets} accepted passwords vs {events} host-visible events; leaks {leaks:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("rate-limit exactness", rate_limit_exactness),
        ("guessing-time arithmetic", guessing_time),
        ("offline-theft resistance", offline_theft),
        ("rollback/crash penalties", rollback_penalties),
        ("attestation soundness", attestation_soundness),
        ("replication", replication),
        ("CMAC oracle equivalence", cmac_equivalence),
        ("resource properties", resources),
        ("end-to-end confidentiality tap", confidentiality_tap),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let (ok, detail) = run();
        failed += !ok as usize;
        println!(
            "{} {name}: {detail} [{:.1?}]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed()
        );
    }
    println!("{} of 9 criteria passed in {:.1?}", 9 - failed, start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
