//! The TEE abstraction boundary and a simulated platform behind it.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::attestation::{Measurement, Quote, QuotingAuthority};
use crate::clock::Clock;
use crate::crypto::sha256;
use crate::replication::RevocationStatement;

pub type TimeNonce = [u8; 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrustedTime {
    pub secs: u64,
    /// Constant for the lifetime of the time source; changes if the source
    /// was reset.
    pub nonce: TimeNonce,
}

/// What an enclave may ask of the hardware.
pub trait TeePlatform: Send + Sync {
    fn platform_id(&self) -> Vec<u8>;
    fn fill_random(&self, buf: &mut [u8]);
    /// Seal key bound to this platform and the given measurement.
    fn seal_key(&self, measurement: &Measurement) -> [u8; 16];
    /// Atomically increments the hardware monotonic counter and returns the
    /// new value.
    fn increment_counter(&self) -> u64;
    fn read_counter(&self) -> u64;
    /// A second, independent monotonic counter, advanced on every change
    /// to the enclave's replication state.
    fn increment_replication_counter(&self) -> u64;
    fn read_replication_counter(&self) -> u64;
    fn trusted_time(&self) -> TrustedTime;
    fn quote(&self, measurement: &Measurement, dh_public: &[u8; 32]) -> Quote;
    /// Authority-signed revocation statements published so far.
    fn published_revocations(&self) -> Vec<RevocationStatement>;
}

/// Shared bulletin of revocation statements, readable by every platform.
#[derive(Clone, Default)]
pub struct RevocationBoard(Arc<Mutex<Vec<RevocationStatement>>>);

impl RevocationBoard {
    pub fn publish(&self, statement: RevocationStatement) {
        self.0.lock().unwrap().push(statement);
    }

    pub fn statements(&self) -> Vec<RevocationStatement> {
        self.0.lock().unwrap().clone()
    }
}

/// Persistent parts of a simulated machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPlatformState {
    #[serde(with = "hex::serde")]
    pub platform_id: Vec<u8>,
    pub counter: u64,
    #[serde(default)]
    pub replication_counter: u64,
    #[serde(with = "hex::serde")]
    pub seal_secret: [u8; 32],
    #[serde(with = "hex::serde")]
    pub time_nonce: TimeNonce,
}

pub struct SimPlatform {
    platform_id: Vec<u8>,
    clock: Arc<dyn Clock>,
    counter: AtomicU64,
    replication_counter: AtomicU64,
    seal_secret: [u8; 32],
    time_nonce: Mutex<TimeNonce>,
    rng: Mutex<ChaCha20Rng>,
    authority: Arc<QuotingAuthority>,
    revocations: RevocationBoard,
}

impl SimPlatform {
    /// A fresh machine. All randomness derives from `seed`.
    pub fn new(
        platform_id: &[u8],
        seed: u64,
        clock: Arc<dyn Clock>,
        authority: Arc<QuotingAuthority>,
        revocations: RevocationBoard,
    ) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut seal_secret = [0u8; 32];
        rng.fill_bytes(&mut seal_secret);
        let mut time_nonce = [0u8; 16];
        rng.fill_bytes(&mut time_nonce);
        Self {
            platform_id: platform_id.to_vec(),
            clock,
            counter: AtomicU64::new(0),
            replication_counter: AtomicU64::new(0),
            seal_secret,
            time_nonce: Mutex::new(time_nonce),
            rng: Mutex::new(rng),
            authority,
            revocations,
        }
    }

    pub fn from_state(
        state: &SimPlatformState,
        seed: u64,
        clock: Arc<dyn Clock>,
        authority: Arc<QuotingAuthority>,
        revocations: RevocationBoard,
    ) -> Self {
        let mut p = Self::new(&state.platform_id, seed, clock, authority, revocations);
        p.counter = AtomicU64::new(state.counter);
        p.replication_counter = AtomicU64::new(state.replication_counter);
        p.seal_secret = state.seal_secret;
        p.time_nonce = Mutex::new(state.time_nonce);
        p
    }

    pub fn state(&self) -> SimPlatformState {
        SimPlatformState {
            platform_id: self.platform_id.clone(),
            counter: self.read_counter(),
            replication_counter: self.read_replication_counter(),
            seal_secret: self.seal_secret,
            time_nonce: *self.time_nonce.lock().unwrap(),
        }
    }

    /// Simulates a reset of the trusted time source: a new nonce.
    pub fn reset_time_source(&self) {
        let mut nonce = [0u8; 16];
        self.fill_random(&mut nonce);
        *self.time_nonce.lock().unwrap() = nonce;
    }
}

impl TeePlatform for SimPlatform {
    fn platform_id(&self) -> Vec<u8> {
        self.platform_id.clone()
    }

    fn fill_random(&self, buf: &mut [u8]) {
        self.rng.lock().unwrap().fill_bytes(buf);
    }

    fn seal_key(&self, measurement: &Measurement) -> [u8; 16] {
        let mut material = Vec::with_capacity(64 + 9);
        material.extend_from_slice(b"seal-key:");
        material.extend_from_slice(&self.seal_secret);
        material.extend_from_slice(&measurement.0);
        let digest = sha256(&material);
        digest[..16].try_into().unwrap()
    }

    fn increment_counter(&self) -> u64 {
        self.counter.fetch_add(1, Ordering::SeqCst) + 1
    }

    fn read_counter(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    fn increment_replication_counter(&self) -> u64 {
        self.replication_counter.fetch_add(1, Ordering::SeqCst) + 1
    }

    fn read_replication_counter(&self) -> u64 {
        self.replication_counter.load(Ordering::SeqCst)
    }

    fn trusted_time(&self) -> TrustedTime {
        TrustedTime {
            secs: self.clock.now(),
            nonce: *self.time_nonce.lock().unwrap(),
        }
    }

    fn quote(&self, measurement: &Measurement, dh_public: &[u8; 32]) -> Quote {
        self.authority.issue_quote(*measurement, dh_public, &self.platform_id)
    }

    fn published_revocations(&self) -> Vec<RevocationStatement> {
        self.revocations.statements()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;

    fn platform(id: &[u8], seed: u64) -> SimPlatform {
        SimPlatform::new(
            id,
            seed,
            Arc::new(SimClock::new(0)),
            Arc::new(QuotingAuthority::from_seed(b"a")),
            RevocationBoard::default(),
        )
    }

    #[test]
    fn counter_is_monotonic() {
        let p = platform(b"p", 1);
        assert_eq!(p.read_counter(), 0);
        assert_eq!(p.increment_counter(), 1);
        assert_eq!(p.increment_counter(), 2);
        assert_eq!(p.read_counter(), 2);
    }

    #[test]
    fn seal_keys_bind_platform_and_measurement() {
        let a = platform(b"a", 1);
        let b = platform(b"b", 2);
        let m1 = Measurement::of_code("one");
        let m2 = Measurement::of_code("two");
        assert_eq!(a.seal_key(&m1), a.seal_key(&m1));
        assert_ne!(a.seal_key(&m1), a.seal_key(&m2));
        assert_ne!(a.seal_key(&m1), b.seal_key(&m1));
    }

    #[test]
    fn time_nonce_changes_only_on_reset() {
        let p = platform(b"p", 1);
        let t1 = p.trusted_time();
        assert_eq!(t1.nonce, p.trusted_time().nonce);
        p.reset_time_source();
        assert_ne!(t1.nonce, p.trusted_time().nonce);
    }

    #[test]
    fn state_survives_restart() {
        let p = platform(b"p", 1);
        p.increment_counter();
        let st = p.state();
        let q = SimPlatform::from_state(
            &st,
            9,
            Arc::new(SimClock::new(0)),
            Arc::new(QuotingAuthority::from_seed(b"a")),
            RevocationBoard::default(),
        );
        assert_eq!(q.state(), st);
        let m = Measurement::of_code("x");
        assert_eq!(p.seal_key(&m), q.seal_key(&m));
    }
}
