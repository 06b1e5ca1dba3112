#![allow(dead_code)]

use std::sync::Arc;

use safekeeper_core::attestation::{QuotingAuthority, VerificationService};
use safekeeper_core::clock::SimClock;
use safekeeper_core::enclave::{Enclave, EnclaveCode, EnclaveConfig};
use safekeeper_core::platform::{RevocationBoard, SimPlatform};
use safekeeper_core::replication::RevocationAuthority;

pub const DAY: u64 = 24 * 3600;

pub struct World {
    pub clock: SimClock,
    pub authority: Arc<QuotingAuthority>,
    pub ias: VerificationService,
    pub revocation: RevocationAuthority,
    pub board: RevocationBoard,
}

impl World {
    pub fn new() -> Self {
        let clock = SimClock::new(1_000_000);
        let authority = Arc::new(QuotingAuthority::from_seed(b"world"));
        let ias = VerificationService::new(b"world", authority.clone(), Arc::new(clock.clone()));
        Self {
            clock,
            authority,
            ias,
            revocation: RevocationAuthority::from_seed(b"world"),
            board: RevocationBoard::default(),
        }
    }

    pub fn platform(&self, id: &str, seed: u64) -> Arc<SimPlatform> {
        Arc::new(SimPlatform::new(
            id.as_bytes(),
            seed,
            Arc::new(self.clock.clone()),
            self.authority.clone(),
            self.board.clone(),
        ))
    }

    pub fn code(&self) -> EnclaveCode {
        EnclaveCode::default().with_trust(&self.revocation.public_key(), &self.ias.root_public_key())
    }

    pub fn config(&self, attempts_max: u32) -> EnclaveConfig {
        EnclaveConfig {
            attempts_max,
            window: DAY,
            code: self.code(),
        }
    }

    /// Mutual attestation plus signing-key exchange between two enclaves.
    pub fn connect(&self, a: &Enclave, b: &Enclave) {
        let ra = self.ias.verify_quote(&a.quote().to_bytes());
        let rb = self.ias.verify_quote(&b.quote().to_bytes());
        let hello_from_a = a.attest_peer(b.quote(), &rb, &b.dh_public()).unwrap();
        let hello_from_b = b.attest_peer(a.quote(), &ra, &a.dh_public()).unwrap();
        b.receive_peer_hello(&a.dh_public(), &hello_from_a).unwrap();
        a.receive_peer_hello(&b.dh_public(), &hello_from_b).unwrap();
    }
}
