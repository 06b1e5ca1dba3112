//! Small wrappers over the primitives every party shares: SHA-256,
//! HKDF-based session keys and AES-128-GCM.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};
use hkdf::Hkdf;
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};

/// Domain label for client-to-enclave session keys.
pub const SESSION_LABEL: &[u8] = b"safekeeper-v1-session";
/// Domain label for enclave-to-enclave channel keys.
pub const PEER_LABEL: &[u8] = b"safekeeper-v1-peer";

pub const NONCE_LEN: usize = 12;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("authenticated decryption failed")]
pub struct AeadError;

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// 128-bit symmetric key for one client (or one enclave pair).
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey([u8; 16]);

impl SessionKey {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// HKDF-SHA256 (no salt) over a shared secret with a fixed context label.
    pub fn derive(shared_secret: &[u8; 32], label: &[u8]) -> Self {
        let hk = Hkdf::<Sha256>::new(None, shared_secret);
        let mut okm = [0u8; 16];
        hk.expand(label, &mut okm)
            .expect("16 bytes is a valid HKDF output length");
        Self(okm)
    }

    /// X25519 followed by [`SessionKey::derive`].
    pub fn agree(secret: &StaticSecret, peer_public: &[u8; 32], label: &[u8]) -> Self {
        let shared = secret.diffie_hellman(&PublicKey::from(*peer_public));
        Self::derive(shared.as_bytes(), label)
    }

    pub fn seal(&self, nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
        aead_seal(&self.0, nonce, aad, plaintext)
    }

    pub fn open(&self, nonce: &[u8; NONCE_LEN], aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, AeadError> {
        aead_open(&self.0, nonce, aad, ciphertext)
    }
}

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

pub fn aead_seal(key: &[u8; 16], nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    Aes128Gcm::new(key.into())
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
        .expect("AES-GCM encryption does not fail for in-memory buffers")
}

pub fn aead_open(key: &[u8; 16], nonce: &[u8; NONCE_LEN], aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, AeadError> {
    Aes128Gcm::new(key.into())
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| AeadError)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aead_rejects_wrong_aad() {
        let key = SessionKey::from_bytes([7; 16]);
        let ct = key.seal(&[1; 12], b"ad", b"secret");
        assert_eq!(key.open(&[1; 12], b"ad", &ct).unwrap(), b"secret");
        assert_eq!(key.open(&[1; 12], b"AD", &ct), Err(AeadError));
    }

    #[test]
    fn labels_separate_domains() {
        let shared = [9u8; 32];
        assert_ne!(
            SessionKey::derive(&shared, SESSION_LABEL),
            SessionKey::derive(&shared, PEER_LABEL)
        );
    }
}
