//! Randomized rollback schedules against a crash-free baseline.
//!
//! The adversary controls the host of one enclave: it restarts cleanly,
//! crashes, replays any blob it ever saw and resets the time source. A
//! baseline enclave with the same SafeKey sees the same guesses, time and
//! resets but never restarts. Per salt, the adversary's count of accepted
//! guesses must never exceed the baseline's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use safekeeper_core::enclave::{Credential, Enclave, Restore};
use safekeeper_core::Salt;
use serde::Serialize;

use crate::sim::{World, DAY};

pub const SALTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Event {
    /// Burst of guesses on one salt.
    Guess {
        salt: usize,
        count: u32,
    },
    Advance(u64),
    Reset,
    Restart,
    CrashRestart,
    Replay(usize),
    TimeSourceReset,
}

pub fn random_event(rng: &mut ChaCha20Rng) -> Event {
    match rng.gen_range(0..10) {
        0..=2 => Event::Guess {
            salt: rng.gen_range(0..SALTS),
            count: rng.gen_range(1..=200),
        },
        3 => Event::Advance(rng.gen_range(1..=2 * DAY)),
        4 => Event::Advance(rng.gen_range(1..=3600)),
        5 => Event::Reset,
        6 => Event::Restart,
        7 => Event::CrashRestart,
        8 => Event::Replay(rng.gen_range(0..64)),
        _ => Event::TimeSourceReset,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleOutcome {
    pub events: Vec<Event>,
    pub adversary_successes: [u64; SALTS],
    pub baseline_successes: [u64; SALTS],
    pub penalized_restores: u32,
    /// First event index after which the adversary was ahead, if ever.
    pub violation_at: Option<usize>,
}

fn salt(i: usize) -> Salt {
    Salt((i as u64 + 1).to_be_bytes())
}

pub fn run_schedule(seed: u64, events: usize, attempts_max: u32) -> ScheduleOutcome {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let schedule: Vec<Event> = (0..events).map(|_| random_event(&mut rng)).collect();
    let w = World::new();
    let adv_p = w.platform("adversary", seed);
    let base_p = w.platform("baseline", seed ^ 0x5a5a);
    let key = [0x42; 16];
    let start = |sealed: Option<&[u8]>| match sealed {
        Some(b) => Enclave::init(adv_p.clone(), w.config(attempts_max), Some(b)).expect("own blob"),
        None => Enclave::provision_with_key(adv_p.clone(), w.config(attempts_max), key).unwrap(),
    };
    let base = Enclave::provision_with_key(base_p, w.config(attempts_max), key).unwrap();
    let mut adv = start(None);
    let mut blobs = vec![adv.shutdown()];
    adv = start(Some(&blobs[0]));

    let mut out = ScheduleOutcome {
        events: schedule.clone(),
        adversary_successes: [0; SALTS],
        baseline_successes: [0; SALTS],
        penalized_restores: 0,
        violation_at: None,
    };
    for (i, ev) in schedule.into_iter().enumerate() {
        let mut restarted = None;
        match ev {
            Event::Guess { salt: s, count } => {
                for _ in 0..count {
                    if adv.process(Credential::Plain(b"guess"), salt(s)).is_ok() {
                        out.adversary_successes[s] += 1;
                    }
                    if base.process(Credential::Plain(b"guess"), salt(s)).is_ok() {
                        out.baseline_successes[s] += 1;
                    }
                }
            }
            Event::Advance(d) => {
                w.clock.advance(d);
            }
            Event::Reset => {
                adv.reset_attempts();
                base.reset_attempts();
            }
            Event::Restart => {
                let b = adv.shutdown();
                blobs.push(b.clone());
                restarted = Some(start(Some(&b)));
            }
            Event::CrashRestart => {
                adv.crash();
                restarted = Some(start(Some(blobs.last().unwrap())));
            }
            Event::Replay(k) => {
                adv.crash();
                restarted = Some(start(Some(&blobs[k % blobs.len()])));
            }
            Event::TimeSourceReset => adv_p.reset_time_source(),
        }
        if let Some(e) = restarted {
            if e.restore_outcome() == Restore::Penalized {
                out.penalized_restores += 1;
            }
            adv = e;
        }
        let ahead = (0..SALTS).any(|s| out.adversary_successes[s] > out.baseline_successes[s]);
        if ahead && out.violation_at.is_none() {
            out.violation_at = Some(i);
        }
    }
    out
}
