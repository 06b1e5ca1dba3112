//! Client half of the protocol: check an attestation report against a
//! measurement whitelist, agree a session key with the attested enclave
//! and encrypt protected field values to it.

use std::collections::BTreeSet;
use std::path::Path;

use ed25519_dalek::VerifyingKey;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};

use crate::attestation::{key_digest, AttestationReport, Measurement, Quote, Verdict};
use crate::crypto::{SessionKey, NONCE_LEN, SESSION_LABEL};
use crate::wire::{Decoder, Encoder, WireError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("report signature does not chain to the pinned root")]
    SignatureError,
    #[error("report does not describe the presented quote")]
    ReportMismatch,
    #[error("verification service rejected the quote")]
    QuoteRejected,
    #[error("platform has been revoked")]
    Revoked,
    #[error("enclave measurement is not in the whitelist")]
    UntrustedMeasurement,
    #[error("enclave key does not match the key bound in the quote")]
    KeyBindingMismatch,
}

#[derive(Debug, Error)]
pub enum WhitelistError {
    #[error("reading whitelist: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing whitelist: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("whitelist version {new} does not supersede {current}")]
    NotNewer { current: u64, new: u64 },
}

/// Versioned set of trusted enclave measurements, shipped with the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Whitelist {
    pub version: u64,
    pub measurements: BTreeSet<Measurement>,
}

impl Whitelist {
    pub fn new(version: u64, measurements: impl IntoIterator<Item = Measurement>) -> Self {
        Self {
            version,
            measurements: measurements.into_iter().collect(),
        }
    }

    pub fn contains(&self, m: &Measurement) -> bool {
        self.measurements.contains(m)
    }

    pub fn load(path: &Path) -> Result<Self, WhitelistError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), WhitelistError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Atomic replacement by a strictly newer version.
    pub fn replace(&mut self, newer: Whitelist) -> Result<(), WhitelistError> {
        if newer.version <= self.version {
            return Err(WhitelistError::NotNewer {
                current: self.version,
                new: newer.version,
            });
        }
        *self = newer;
        Ok(())
    }
}

/// An enclave whose DH key has been tied to a whitelisted measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedEnclave {
    pub measurement: Measurement,
    pub enclave_public: [u8; 32],
}

pub fn verify_and_bind(
    quote: &Quote,
    report: &AttestationReport,
    whitelist: &Whitelist,
    root: &VerifyingKey,
    enclave_public: &[u8; 32],
) -> Result<VerifiedEnclave, VerifyError> {
    if !report.verify_signature(root) {
        return Err(VerifyError::SignatureError);
    }
    if report.quote_digest != quote.digest()
        || report.measurement != quote.measurement
        || report.bound_key_digest != quote.bound_key_digest
    {
        return Err(VerifyError::ReportMismatch);
    }
    match report.verdict {
        Verdict::Ok => {}
        Verdict::PlatformRevoked => return Err(VerifyError::Revoked),
        Verdict::QuoteInvalid => return Err(VerifyError::QuoteRejected),
    }
    if !whitelist.contains(&report.measurement) {
        return Err(VerifyError::UntrustedMeasurement);
    }
    if key_digest(enclave_public) != report.bound_key_digest {
        return Err(VerifyError::KeyBindingMismatch);
    }
    Ok(VerifiedEnclave {
        measurement: report.measurement,
        enclave_public: *enclave_public,
    })
}

/// Client side of one session with a verified enclave.
pub struct ClientChannel {
    secret: StaticSecret,
    public: [u8; 32],
    session: SessionKey,
}

impl std::fmt::Debug for ClientChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientChannel")
            .field("public", &hex::encode(self.public))
            .finish_non_exhaustive()
    }
}

impl ClientChannel {
    pub fn public(&self) -> &[u8; 32] {
        &self.public
    }

    pub fn session_key(&self) -> &SessionKey {
        &self.session
    }

    pub fn encrypt(&self, plaintext: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> EncryptedCredential {
        encrypt_field(plaintext, &self.session, &self.public, rng)
    }

    /// Channel from a caller-chosen secret scalar (known-answer tests).
    pub fn from_secret(verified: &VerifiedEnclave, secret: [u8; 32]) -> Self {
        let secret = StaticSecret::from(secret);
        let public = PublicKey::from(&secret).to_bytes();
        let session = SessionKey::agree(&secret, &verified.enclave_public, SESSION_LABEL);
        Self {
            secret,
            public,
            session,
        }
    }

    #[doc(hidden)]
    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }
}

/// Fresh ephemeral keypair and the session key it shares with the enclave.
pub fn establish_channel(verified: &VerifiedEnclave, rng: &mut (impl RngCore + CryptoRng)) -> ClientChannel {
    let mut secret = [0u8; 32];
    rng.fill_bytes(&mut secret);
    ClientChannel::from_secret(verified, secret)
}

/// A password (or other protected field) encrypted to the enclave.
#[derive(Clone, PartialEq, Eq)]
pub struct EncryptedCredential {
    pub client_public: [u8; 32],
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

impl std::fmt::Debug for EncryptedCredential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncryptedCredential")
            .field("client_public", &hex::encode(self.client_public))
            .field("ciphertext_len", &self.ciphertext.len())
            .finish()
    }
}

impl EncryptedCredential {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(&self.client_public)
            .bytes(&self.nonce)
            .bytes(&self.ciphertext);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let c = Self {
            client_public: dec.array()?,
            nonce: dec.array()?,
            ciphertext: dec.bytes()?.to_vec(),
        };
        dec.finish()?;
        Ok(c)
    }
}

/// AEAD over `plaintext` with the client public key as associated data and
/// a fresh random nonce.
pub fn encrypt_field(
    plaintext: &[u8],
    session: &SessionKey,
    client_public: &[u8; 32],
    rng: &mut (impl RngCore + CryptoRng),
) -> EncryptedCredential {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    EncryptedCredential {
        client_public: *client_public,
        nonce,
        ciphertext: session.seal(&nonce, client_public, plaintext),
    }
}
