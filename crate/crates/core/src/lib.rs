//! Password protection with a rate-limited keyed one-way function inside a
//! simulated enclave, its attestation fabric, the client channel and the
//! key-holder replication protocol.

pub mod attestation;
pub mod client;
pub mod clock;
pub mod cmac;
pub mod crypto;
pub mod enclave;
pub mod legacy;
pub mod platform;
pub mod proxy;
pub mod rate_limit;
pub mod replication;
pub mod seal;
pub mod wire;

use thiserror::Error;

pub const SALT_LEN: usize = 8;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("salt must be exactly {SALT_LEN} bytes, got {0}")]
pub struct SaltLengthError(pub usize);

/// Per-account 64-bit salt; also the rate-limiting key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Salt(pub [u8; SALT_LEN]);

impl Salt {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, SaltLengthError> {
        bytes.try_into().map(Salt).map_err(|_| SaltLengthError(bytes.len()))
    }
}

/// CMAC output for one (password, salt) pair.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Tag(pub [u8; 16]);

pub use enclave::{Credential, Enclave, EnclaveCode, EnclaveConfig, Prehash, ProcessError};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn salt_length_is_fixed() {
        assert!(Salt::from_slice(&[0; 8]).is_ok());
        assert_eq!(Salt::from_slice(&[0; 7]), Err(SaltLengthError(7)));
        assert_eq!(Salt::from_slice(&[0; 9]), Err(SaltLengthError(9)));
    }
}
