//! The salted, iterated MD5 used by PHPass-style legacy databases.

use md5::{Digest, Md5};

use crate::Salt;

pub const LEGACY_ROUNDS: u32 = 256;

/// md5(salt ‖ password), then `LEGACY_ROUNDS` rounds of md5(hash ‖ password).
pub fn legacy_md5(password: &[u8], salt: &Salt) -> [u8; 16] {
    let mut hash: [u8; 16] = Md5::new().chain_update(salt.0).chain_update(password).finalize().into();
    for _ in 0..LEGACY_ROUNDS {
        hash = Md5::new().chain_update(hash).chain_update(password).finalize().into();
    }
    hash
}
