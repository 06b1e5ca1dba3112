//! Quantized per-salt rate limiting: each salt gets `attempts_max`
//! attempts per window; all counters reset together at `t_reset`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::Salt;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no attempts left for this salt until the window resets")]
pub struct RateLimited;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateLimiter {
    attempts: BTreeMap<Salt, u32>,
    attempts_max: u32,
    window: u64,
    t_reset: u64,
    /// Set by a penalty; salts first seen before the next reset start at 0.
    penalized: bool,
}

impl RateLimiter {
    pub fn new(attempts_max: u32, window: u64, now: u64) -> Self {
        assert!(window > 0, "rate-limit window must be positive");
        Self {
            attempts: BTreeMap::new(),
            attempts_max,
            window,
            t_reset: now.saturating_add(window),
            penalized: false,
        }
    }

    pub(crate) fn from_parts(
        attempts: BTreeMap<Salt, u32>,
        attempts_max: u32,
        window: u64,
        t_reset: u64,
        penalized: bool,
    ) -> Self {
        assert!(window > 0, "rate-limit window must be positive");
        let mut attempts = attempts;
        for v in attempts.values_mut() {
            *v = (*v).min(attempts_max);
        }
        Self {
            attempts,
            attempts_max,
            window,
            t_reset,
            penalized,
        }
    }

    pub fn attempts_max(&self) -> u32 {
        self.attempts_max
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn t_reset(&self) -> u64 {
        self.t_reset
    }

    pub fn is_penalized(&self) -> bool {
        self.penalized
    }

    pub fn remaining(&self, salt: &Salt) -> Option<u32> {
        self.attempts.get(salt).copied()
    }

    pub fn len(&self) -> usize {
        self.attempts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attempts.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Salt, &u32)> {
        self.attempts.iter()
    }

    /// Check and decrement in one step.
    pub fn try_consume(&mut self, salt: Salt) -> Result<u32, RateLimited> {
        let initial = if self.penalized { 0 } else { self.attempts_max };
        let left = self.attempts.entry(salt).or_insert(initial);
        if *left == 0 {
            return Err(RateLimited);
        }
        *left -= 1;
        Ok(*left)
    }

    /// Resets every counter if `now` has reached `t_reset`, then moves
    /// `t_reset` forward by whole windows until it lies in the future.
    pub fn reset_if_due(&mut self, now: u64) -> bool {
        if now < self.t_reset {
            return false;
        }
        for v in self.attempts.values_mut() {
            *v = self.attempts_max;
        }
        self.penalized = false;
        let missed = (now - self.t_reset) / self.window + 1;
        self.t_reset = self.t_reset.saturating_add(missed.saturating_mul(self.window));
        true
    }

    /// Maximum penalty: every counter to zero and the next reset pushed to
    /// the first grid point at least one full window away.
    pub fn penalize(&mut self, now: u64) {
        for v in self.attempts.values_mut() {
            *v = 0;
        }
        self.penalized = true;
        let target = now.saturating_add(self.window);
        if self.t_reset < target {
            let steps = (target - self.t_reset).div_ceil(self.window);
            self.t_reset = self.t_reset.saturating_add(steps.saturating_mul(self.window));
        }
    }

    /// Lowering clamps every counter immediately; raising applies to fresh
    /// salts now and to everyone at the next reset.
    pub fn set_attempts_max(&mut self, attempts_max: u32) {
        if attempts_max < self.attempts_max {
            for v in self.attempts.values_mut() {
                *v = (*v).min(attempts_max);
            }
        }
        self.attempts_max = attempts_max;
    }
}
