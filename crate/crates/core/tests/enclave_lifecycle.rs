mod common;

use std::sync::Arc;

use common::{World, DAY};
use proptest::prelude::*;
use safekeeper_core::clock::Clock;
use safekeeper_core::enclave::{Credential, Enclave, InitError, ProcessError, Restore};
use safekeeper_core::platform::{SimPlatform, TeePlatform};
use safekeeper_core::seal::UnsealError;
use safekeeper_core::Salt;

fn salt(i: u64) -> Salt {
    Salt(i.to_be_bytes())
}

fn start(world: &World, p: &Arc<SimPlatform>, sealed: Option<&[u8]>) -> Enclave {
    Enclave::init(p.clone(), world.config(144), sealed).unwrap()
}

fn try_pw(e: &Enclave, s: Salt) -> Result<(), ProcessError> {
    e.process(Credential::Plain(b"guess"), s).map(|_| ())
}

#[test]
fn fresh_init_takes_next_counter_value() {
    let w = World::new();
    let p = w.platform("p", 1);
    for _ in 0..6 {
        p.increment_counter();
    }
    let e = start(&w, &p, None);
    assert_eq!(e.boot_counter(), 7);
    assert_eq!(e.restore_outcome(), Restore::Fresh);
    assert!(e.rate_limit_state().is_empty());
}

#[test]
fn clean_restart_restores_everything() {
    let w = World::new();
    let p = w.platform("p", 1);
    for _ in 0..6 {
        p.increment_counter();
    }
    let e = start(&w, &p, None);
    assert_eq!(e.boot_counter(), 7);
    for i in 0..5 {
        for _ in 0..=i {
            try_pw(&e, salt(i)).unwrap();
        }
    }
    let before = e.rate_limit_state();
    let fp = e.key_fingerprint();
    let blob = e.shutdown();
    assert_eq!(try_pw(&e, salt(0)), Err(ProcessError::ShutDown));

    let e2 = start(&w, &p, Some(&blob));
    assert_eq!(e2.boot_counter(), 8);
    assert_eq!(e2.restore_outcome(), Restore::Restored);
    assert_eq!(e2.rate_limit_state(), before);
    assert_eq!(e2.key_fingerprint(), fp);
}

#[test]
fn replay_after_two_restarts_is_penalized() {
    let w = World::new();
    let p = w.platform("p", 1);
    for _ in 0..6 {
        p.increment_counter();
    }
    let e = start(&w, &p, None);
    try_pw(&e, salt(1)).unwrap();
    try_pw(&e, salt(2)).unwrap();
    let old = e.shutdown();

    // Counter model kept independently of the enclave.
    let mut counter = 7u64;
    let sealed_at = counter;
    let e = start(&w, &p, Some(&old));
    counter += 1;
    assert_eq!(e.boot_counter(), counter);
    e.crash();
    let e = start(&w, &p, Some(&old));
    counter += 1;
    assert_eq!(e.boot_counter(), counter);
    assert_ne!(sealed_at + 1, counter);
    assert_eq!(e.restore_outcome(), Restore::Penalized);

    let st = e.rate_limit_state();
    assert_eq!(st.remaining(&salt(1)), Some(0));
    assert_eq!(st.remaining(&salt(2)), Some(0));
    assert_eq!(try_pw(&e, salt(1)), Err(ProcessError::RateLimited));
    assert_eq!(try_pw(&e, salt(99)), Err(ProcessError::RateLimited));
}

#[test]
fn flipped_blob_bit_fails_to_unseal() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    try_pw(&e, salt(1)).unwrap();
    let blob = e.shutdown();
    for bit in [0usize, 8, 8 * 13, blob.len() * 8 - 1, blob.len() * 4] {
        let mut t = blob.clone();
        t[bit / 8] ^= 1 << (bit % 8);
        assert!(matches!(
            Enclave::init(p.clone(), w.config(144), Some(&t)),
            Err(InitError::Unseal(_))
        ));
    }
}

#[test]
fn blob_only_opens_on_same_platform_and_measurement() {
    let w = World::new();
    let p = w.platform("p", 1);
    let q = w.platform("q", 2);
    let e = start(&w, &p, None);
    let blob = e.shutdown();
    assert!(matches!(
        Enclave::init(q, w.config(144), Some(&blob)),
        Err(InitError::Unseal(UnsealError::Authentication))
    ));
    let mut other = w.config(144);
    other.code.identity = "rogue".into();
    assert!(Enclave::init(p, other, Some(&blob)).is_err());
}

#[test]
fn blob_grows_twelve_bytes_per_salt() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = Enclave::provision_with_key(p.clone(), w.config(144), [5; 16]).unwrap();
    let empty = e.shutdown().len();
    let e = Enclave::provision_with_key(p, w.config(144), [5; 16]).unwrap();
    for i in 0..1000 {
        try_pw(&e, salt(i)).unwrap();
    }
    assert_eq!(e.shutdown().len() - empty, 1000 * (8 + 4));
}

#[test]
fn safekey_never_appears_in_blob() {
    let w = World::new();
    let p = w.platform("p", 1);
    let key = [0x5a, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 0xa5];
    let e = Enclave::provision_with_key(p, w.config(144), key).unwrap();
    for i in 0..50 {
        try_pw(&e, salt(i)).unwrap();
    }
    let blob = e.shutdown();
    assert!(!blob.windows(16).any(|w| w == key));
    // Byte histogram sanity: a 16-byte key's worth of any single value
    // would stand out in ciphertext of this size.
    let mut hist = [0usize; 256];
    for b in &blob {
        hist[*b as usize] += 1;
    }
    assert!(hist.iter().all(|&c| c < blob.len() / 16));
}

#[test]
fn exactly_144_per_salt_then_limited() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    for _ in 0..144 {
        try_pw(&e, salt(1)).unwrap();
    }
    assert_eq!(try_pw(&e, salt(1)), Err(ProcessError::RateLimited));
    try_pw(&e, salt(2)).unwrap();
}

#[test]
fn reset_only_after_window() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    let t0 = e.rate_limit_state().t_reset();
    for _ in 0..144 {
        try_pw(&e, salt(1)).unwrap();
    }
    w.clock.advance(DAY - 1);
    e.reset_attempts();
    assert_eq!(e.rate_limit_state().remaining(&salt(1)), Some(0));
    w.clock.advance(1);
    e.reset_attempts();
    assert_eq!(e.rate_limit_state().remaining(&salt(1)), Some(144));
    assert_eq!(e.rate_limit_state().t_reset(), t0 + DAY);
}

#[test]
fn idle_three_windows_advances_three() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    let t0 = e.rate_limit_state().t_reset();
    // t0 is one window after start; idle until just past the grid point
    // two windows after t0: t0, t0+W and t0+2W have passed.
    w.clock.advance_to(t0 + 2 * DAY + 10);
    e.reset_attempts();
    let t = e.rate_limit_state().t_reset();
    assert_eq!(t, t0 + 3 * DAY);
    assert!(t > w.clock.now());
}

#[test]
fn time_source_reset_mid_run_penalizes() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    try_pw(&e, salt(1)).unwrap();
    p.reset_time_source();
    e.reset_attempts();
    assert_eq!(e.rate_limit_state().remaining(&salt(1)), Some(0));
    assert!(e.rate_limit_state().is_penalized());
}

#[test]
fn time_source_reset_between_runs_penalizes() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    try_pw(&e, salt(1)).unwrap();
    let blob = e.shutdown();
    p.reset_time_source();
    let e = start(&w, &p, Some(&blob));
    assert_eq!(e.restore_outcome(), Restore::Penalized);
}

#[test]
fn shared_salt_caps_total_guesses() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    let shared = salt(7);
    let mut ok = 0;
    for account in 0..10 {
        for _ in 0..100 {
            if e.process(Credential::Plain(format!("pw{account}").as_bytes()), shared)
                .is_ok()
            {
                ok += 1;
            }
        }
    }
    assert_eq!(ok, 144);
}

#[test]
fn wrong_length_salt_rejected() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = start(&w, &p, None);
    assert!(matches!(
        e.process_raw(Credential::Plain(b"x"), &[0; 7]),
        Err(ProcessError::SaltLength(_))
    ));
    assert!(e.process_raw(Credential::Plain(b"x"), &[0; 8]).is_ok());
}

#[test]
fn concurrent_callers_never_exceed_max() {
    let w = World::new();
    let p = w.platform("p", 1);
    let e = Arc::new(start(&w, &p, None));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let e = e.clone();
            std::thread::spawn(move || (0..50).filter(|_| try_pw(&e, salt(3)).is_ok()).count())
        })
        .collect();
    let total: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(total, 144);
}

#[derive(Debug, Clone)]
enum Event {
    Guess(u8),
    Advance(u64),
    Reset,
    /// Shut down cleanly and restart from the new blob.
    Restart,
    /// Crash and restart from the most recent blob.
    CrashRestart,
    /// Restart from an arbitrary earlier blob.
    Replay(usize),
    TimeSourceReset,
}

fn event() -> impl Strategy<Value = Event> {
    prop_oneof![
        8 => (0u8..3).prop_map(Event::Guess),
        2 => (0u64..DAY / 2).prop_map(Event::Advance),
        2 => Just(Event::Reset),
        1 => Just(Event::Restart),
        1 => Just(Event::CrashRestart),
        1 => (0usize..8).prop_map(Event::Replay),
        1 => Just(Event::TimeSourceReset),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The adversary drives restarts, crashes and replays; the baseline
    /// sees the same guesses and resets but never restarts. The adversary
    /// never gets more successful guesses for any salt.
    #[test]
    fn rollback_never_beats_crash_free_baseline(events in proptest::collection::vec(event(), 50)) {
        let w = World::new();
        let adv_p = w.platform("adv", 1);
        let base_p = w.platform("base", 2);
        let key = [9u8; 16];
        let mut adv = Enclave::provision_with_key(adv_p.clone(), w.config(4), key).unwrap();
        let base = Enclave::provision_with_key(base_p, w.config(4), key).unwrap();
        let mut blobs: Vec<Vec<u8>> = vec![adv.shutdown()];
        adv = Enclave::init(adv_p.clone(), w.config(4), Some(&blobs[0])).unwrap();
        let mut adv_ok = [0u32; 3];
        let mut base_ok = [0u32; 3];
        for ev in events {
            match ev {
                Event::Guess(s) => {
                    if try_pw(&adv, salt(s as u64)).is_ok() { adv_ok[s as usize] += 1; }
                    if try_pw(&base, salt(s as u64)).is_ok() { base_ok[s as usize] += 1; }
                }
                Event::Advance(d) => { w.clock.advance(d); }
                Event::Reset => { adv.reset_attempts(); base.reset_attempts(); }
                Event::Restart => {
                    let b = adv.shutdown();
                    blobs.push(b.clone());
                    adv = Enclave::init(adv_p.clone(), w.config(4), Some(&b)).unwrap();
                }
                Event::CrashRestart => {
                    adv.crash();
                    let b = blobs.last().unwrap().clone();
                    adv = Enclave::init(adv_p.clone(), w.config(4), Some(&b)).unwrap();
                }
                Event::Replay(i) => {
                    adv.crash();
                    let b = blobs[i % blobs.len()].clone();
                    adv = Enclave::init(adv_p.clone(), w.config(4), Some(&b)).unwrap();
                }
                Event::TimeSourceReset => adv_p.reset_time_source(),
            }
            for s in 0..3 {
                prop_assert!(adv_ok[s] <= base_ok[s], "salt {s}: {adv_ok:?} > {base_ok:?}");
            }
        }
    }
}
