//! Online guessing cost under the per-salt rate limit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use safekeeper_core::enclave::{Credential, Enclave, ProcessError};
use safekeeper_core::Salt;
use serde::Serialize;

use crate::sim::{World, DAY};

/// Windows needed to make `guesses` attempts at `rate` per window.
pub fn windows_for(guesses: u64, rate: u64) -> u64 {
    guesses.div_ceil(rate)
}

/// Windows until an attacker sweeping half of a `bits`-bit space, the
/// expected work for a 50% success chance.
pub fn windows_to_half(bits: u32, rate: u64) -> u64 {
    windows_for(1u64 << (bits - 1), rate)
}

/// Median windows to success when the password is uniform over `space`
/// and the attacker tries distinct guesses: the median position is
/// ceil(space / 2).
pub fn median_windows_uniform(space: u64, rate: u64) -> u64 {
    windows_for(space.div_ceil(2), rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GuessRun {
    pub seed: u64,
    /// Position of the password in the attacker's order, 1-based.
    pub position: u64,
    /// Window in which the attacker found the password, 1-based.
    pub windows: u64,
    pub guesses: u64,
    /// Most guesses the enclave accepted in any one window.
    pub max_per_window: u32,
}

/// One attacker with direct enclave access against one account whose
/// password is uniform over `space` candidates, `rate` attempts per window.
pub fn attack(seed: u64, space: u32, rate: u32) -> GuessRun {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = World::new();
    let enclave = Enclave::init(w.platform("victim", seed), w.config(rate), None).unwrap();
    let secret = rng.gen_range(0..space);
    let salt = Salt(rng.gen());
    let stored = enclave
        .process(Credential::Plain(format!("pw-{secret}").as_bytes()), salt)
        .unwrap();
    // The theft happens later; registration's attempt has expired.
    w.clock.advance(DAY);
    enclave.reset_attempts();

    let mut order: Vec<u32> = (0..space).collect();
    order.shuffle(&mut rng);
    let position = order.iter().position(|&c| c == secret).unwrap() as u64 + 1;
    let (mut window, mut guesses, mut in_window, mut max_per_window) = (1u64, 0u64, 0u32, 0u32);
    let mut next = order.into_iter();
    let mut pending = next.next();
    while let Some(candidate) = pending {
        match enclave.process(Credential::Plain(format!("pw-{candidate}").as_bytes()), salt) {
            Ok(tag) => {
                guesses += 1;
                in_window += 1;
                max_per_window = max_per_window.max(in_window);
                if tag.ct_eq(&stored) {
                    break;
                }
                pending = next.next();
            }
            Err(ProcessError::RateLimited) => {
                w.clock.advance(DAY);
                enclave.reset_attempts();
                window += 1;
                in_window = 0;
            }
            Err(e) => panic!("unexpected enclave error {e}"),
        }
    }
    GuessRun {
        seed,
        position,
        windows: window,
        guesses,
        max_per_window,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledStudy {
    pub space: u32,
    pub rate: u32,
    pub runs: usize,
    pub median_windows: f64,
    pub expected_median: u64,
    pub relative_error: f64,
    /// Runs where the found window disagrees with ceil(position / rate).
    pub inconsistent_runs: usize,
    pub max_per_window: u32,
}

fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

pub fn scaled_study(base_seed: u64, runs: usize, space: u32, rate: u32) -> ScaledStudy {
    let results: Vec<GuessRun> = (0..runs as u64).map(|i| attack(base_seed + i, space, rate)).collect();
    let mut windows: Vec<u64> = results.iter().map(|r| r.windows).collect();
    windows.sort_unstable();
    let m = median(&windows);
    let expected = median_windows_uniform(space as u64, rate as u64);
    ScaledStudy {
        space,
        rate,
        runs,
        median_windows: m,
        expected_median: expected,
        relative_error: (m - expected as f64).abs() / expected as f64,
        inconsistent_runs: results
            .iter()
            .filter(|r| r.windows != windows_for(r.position, rate as u64))
            .count(),
        max_per_window: results.iter().map(|r| r.max_per_window).max().unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calculator_by_hand() {
        // 2^19 = 524288 = 144 * 3640 + 128.
        assert_eq!(windows_to_half(20, 144), 3641);
        assert_eq!(windows_for(144, 144), 1);
        assert_eq!(windows_for(145, 144), 2);
        assert_eq!(median_windows_uniform(1024, 16), 32);
    }

    #[test]
    fn a_run_respects_the_window_budget() {
        let r = attack(5, 64, 4);
        assert!(r.max_per_window <= 4);
        assert_eq!(r.windows, windows_for(r.position, 4));
        assert_eq!(r.guesses, r.position);
    }
}
