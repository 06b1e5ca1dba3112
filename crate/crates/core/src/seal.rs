//! Sealed enclave state.
//!
//! Blob layout: version byte `0x01`, 12-byte nonce, AES-128-GCM ciphertext
//! under the platform seal key for the enclave measurement, with the
//! version byte as associated data. The plaintext is a sequence of
//! length-prefixed fields in this order:
//!
//! | field         | contents                                   |
//! |---------------|--------------------------------------------|
//! | safekey       | 16 bytes, or empty for a keyless backup    |
//! | attempts_max  | u32                                        |
//! | window        | u64 seconds                                |
//! | t_reset       | u64 seconds                                |
//! | time_nonce    | 16 bytes                                   |
//! | boot_counter  | u64                                        |
//! | repl_counter  | u64                                        |
//! | flags         | u8, bit 0 = penalized                      |
//! | replication   | serialized replica state                   |
//! | attempts      | n × (8-byte salt ‖ u32 remaining)          |
//!
//! The attempts field is a flat run of 12-byte entries, so each salt adds
//! exactly 12 bytes.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{aead_open, aead_seal, NONCE_LEN};
use crate::platform::TimeNonce;
use crate::wire::{Decoder, Encoder, WireError};
use crate::Salt;

pub const SEAL_VERSION: u8 = 0x01;
const ENTRY_LEN: usize = 12;
const FLAG_PENALIZED: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnsealError {
    #[error("unknown sealed format version {0:#04x}")]
    Version(u8),
    #[error("sealed blob too short")]
    Truncated,
    #[error("sealed blob failed authentication")]
    Authentication,
    #[error("sealed plaintext malformed: {0}")]
    Format(#[from] WireError),
}

#[derive(Clone, PartialEq, Eq)]
pub(crate) struct SealedState {
    pub safekey: Option<[u8; 16]>,
    pub attempts_max: u32,
    pub window: u64,
    pub t_reset: u64,
    pub time_nonce: TimeNonce,
    pub boot_counter: u64,
    pub replication_counter: u64,
    pub penalized: bool,
    pub replication: Vec<u8>,
    pub attempts: BTreeMap<Salt, u32>,
}

impl SealedState {
    fn plaintext(&self) -> Vec<u8> {
        let mut map = Vec::with_capacity(self.attempts.len() * ENTRY_LEN);
        for (salt, left) in &self.attempts {
            map.extend_from_slice(&salt.0);
            map.extend_from_slice(&left.to_be_bytes());
        }
        let mut enc = Encoder::new();
        enc.bytes(self.safekey.as_ref().map_or(&[][..], |k| &k[..]))
            .u32(self.attempts_max)
            .u64(self.window)
            .u64(self.t_reset)
            .bytes(&self.time_nonce)
            .u64(self.boot_counter)
            .u64(self.replication_counter)
            .u8(if self.penalized { FLAG_PENALIZED } else { 0 })
            .bytes(&self.replication)
            .bytes(&map);
        enc.finish()
    }

    fn from_plaintext(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let key = dec.bytes()?;
        let safekey = match key.len() {
            0 => None,
            16 => Some(key.try_into().unwrap()),
            n => return Err(WireError::BadLength { expected: 16, found: n }),
        };
        let attempts_max = dec.u32()?;
        let window = dec.u64()?;
        let t_reset = dec.u64()?;
        let time_nonce = dec.array()?;
        let boot_counter = dec.u64()?;
        let replication_counter = dec.u64()?;
        let flags = dec.u8()?;
        let replication = dec.bytes()?.to_vec();
        let map = dec.bytes()?;
        dec.finish()?;
        if map.len() % ENTRY_LEN != 0 {
            return Err(WireError::Invalid("attempts map length"));
        }
        if window == 0 {
            return Err(WireError::Invalid("zero window"));
        }
        let attempts = map
            .chunks_exact(ENTRY_LEN)
            .map(|e| {
                (
                    Salt(e[..8].try_into().unwrap()),
                    u32::from_be_bytes(e[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(Self {
            safekey,
            attempts_max,
            window,
            t_reset,
            time_nonce,
            boot_counter,
            replication_counter,
            penalized: flags & FLAG_PENALIZED != 0,
            replication,
            attempts,
        })
    }

    pub fn seal(&self, seal_key: &[u8; 16], nonce: &[u8; NONCE_LEN]) -> Vec<u8> {
        let ct = aead_seal(seal_key, nonce, &[SEAL_VERSION], &self.plaintext());
        let mut blob = Vec::with_capacity(1 + NONCE_LEN + ct.len());
        blob.push(SEAL_VERSION);
        blob.extend_from_slice(nonce);
        blob.extend_from_slice(&ct);
        blob
    }

    pub fn unseal(seal_key: &[u8; 16], blob: &[u8]) -> Result<Self, UnsealError> {
        let (&version, rest) = blob.split_first().ok_or(UnsealError::Truncated)?;
        if version != SEAL_VERSION {
            return Err(UnsealError::Version(version));
        }
        if rest.len() < NONCE_LEN {
            return Err(UnsealError::Truncated);
        }
        let (nonce, ct) = rest.split_at(NONCE_LEN);
        let pt =
            aead_open(seal_key, nonce.try_into().unwrap(), &[version], ct).map_err(|_| UnsealError::Authentication)?;
        Ok(Self::from_plaintext(&pt)?)
    }
}
