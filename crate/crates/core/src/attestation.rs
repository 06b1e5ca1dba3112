//! Simulated attestation fabric: quotes issued by a quoting authority, a
//! mock verification service that signs verdicts, and the signed platform
//! revocation list.
//!
//! Data-to-be-signed layouts:
//! - quote: `measurement || sha256(dh_public) || platform_id`
//! - report: canonical encoding of verdict, quote digest, measurement,
//!   bound key digest and timestamp
//! - SigRL: canonical encoding of issued_at and the revoked ids
//! - certificate: canonical encoding of subject name and subject key

use std::sync::{Arc, RwLock};

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::crypto::sha256;
use crate::wire::{Decoder, Encoder, WireError};

/// Code identity of an enclave build.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Measurement(pub [u8; 32]);

impl Measurement {
    /// Digest of the enclave's versioned code-identity string.
    pub fn of_code(identity: &str) -> Self {
        Self(sha256(identity.as_bytes()))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for Measurement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Measurement({}..)", &self.to_hex()[..12])
    }
}

impl From<Measurement> for String {
    fn from(m: Measurement) -> Self {
        m.to_hex()
    }
}

impl TryFrom<String> for Measurement {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let bytes = hex::decode(&s).map_err(|e| e.to_string())?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "measurement must be 32 bytes".to_string())?;
        Ok(Self(arr))
    }
}

pub fn key_digest(dh_public: &[u8; 32]) -> [u8; 32] {
    sha256(dh_public)
}

fn signing_key_from_seed(seed: &[u8], role: &str) -> SigningKey {
    let mut material = seed.to_vec();
    material.extend_from_slice(role.as_bytes());
    SigningKey::from_bytes(&sha256(&material))
}

fn verify(key: &VerifyingKey, msg: &[u8], sig: &[u8; 64]) -> bool {
    key.verify_strict(msg, &Signature::from_bytes(sig)).is_ok()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quote {
    pub measurement: Measurement,
    pub bound_key_digest: [u8; 32],
    pub platform_id: Vec<u8>,
    pub signature: [u8; 64],
}

impl Quote {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.platform_id.len());
        out.extend_from_slice(&self.measurement.0);
        out.extend_from_slice(&self.bound_key_digest);
        out.extend_from_slice(&self.platform_id);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(&self.measurement.0)
            .bytes(&self.bound_key_digest)
            .bytes(&self.platform_id)
            .bytes(&self.signature);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let quote = Self {
            measurement: Measurement(dec.array()?),
            bound_key_digest: dec.array()?,
            platform_id: dec.bytes()?.to_vec(),
            signature: dec.array()?,
        };
        dec.finish()?;
        Ok(quote)
    }

    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.to_bytes())
    }

    pub fn verify(&self, authority: &VerifyingKey) -> bool {
        verify(authority, &self.signed_bytes(), &self.signature)
    }
}

/// Signs quotes for enclaves and publishes the platform revocation list.
pub struct QuotingAuthority {
    key: SigningKey,
}

impl QuotingAuthority {
    pub fn from_seed(seed: &[u8]) -> Self {
        Self {
            key: signing_key_from_seed(seed, "quoting-authority"),
        }
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn issue_quote(&self, measurement: Measurement, dh_public: &[u8; 32], platform_id: &[u8]) -> Quote {
        let mut quote = Quote {
            measurement,
            bound_key_digest: key_digest(dh_public),
            platform_id: platform_id.to_vec(),
            signature: [0; 64],
        };
        quote.signature = self.key.sign(&quote.signed_bytes()).to_bytes();
        quote
    }

    pub fn sign_sigrl(&self, mut revoked: Vec<Vec<u8>>, issued_at: u64) -> SigRl {
        revoked.sort();
        revoked.dedup();
        let mut list = SigRl {
            revoked,
            issued_at,
            signature: [0; 64],
        };
        list.signature = self.key.sign(&list.signed_bytes()).to_bytes();
        list
    }
}

/// Signature revocation list: revoked platform ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SigRl {
    pub revoked: Vec<Vec<u8>>,
    pub issued_at: u64,
    pub signature: [u8; 64],
}

impl SigRl {
    fn encode_ids(&self) -> Vec<u8> {
        let mut ids = Encoder::new();
        for id in &self.revoked {
            ids.bytes(id);
        }
        ids.finish()
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u64(self.issued_at).bytes(&self.encode_ids());
        enc.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u64(self.issued_at).bytes(&self.encode_ids()).bytes(&self.signature);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let issued_at = dec.u64()?;
        let mut ids = Decoder::new(dec.bytes()?);
        let mut revoked = Vec::new();
        while !ids.is_empty() {
            revoked.push(ids.bytes()?.to_vec());
        }
        let signature = dec.array()?;
        dec.finish()?;
        Ok(Self {
            revoked,
            issued_at,
            signature,
        })
    }

    pub fn verify(&self, authority: &VerifyingKey) -> bool {
        verify(authority, &self.signed_bytes(), &self.signature)
    }

    pub fn contains(&self, platform_id: &[u8]) -> bool {
        self.revoked.iter().any(|id| id == platform_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Verdict {
    Ok = 0,
    QuoteInvalid = 1,
    PlatformRevoked = 2,
}

impl TryFrom<u8> for Verdict {
    type Error = WireError;

    fn try_from(v: u8) -> Result<Self, WireError> {
        match v {
            0 => Ok(Self::Ok),
            1 => Ok(Self::QuoteInvalid),
            2 => Ok(Self::PlatformRevoked),
            _ => Err(WireError::Invalid("verdict")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub subject: String,
    pub subject_key: [u8; 32],
    pub signature: [u8; 64],
}

impl Certificate {
    fn signed_bytes(subject: &str, key: &[u8; 32]) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(subject.as_bytes()).bytes(key);
        enc.finish()
    }

    pub fn issue(issuer: &SigningKey, subject: &str, subject_key: &VerifyingKey) -> Self {
        let subject_key = subject_key.to_bytes();
        let signature = issuer.sign(&Self::signed_bytes(subject, &subject_key)).to_bytes();
        Self {
            subject: subject.to_string(),
            subject_key,
            signature,
        }
    }

    pub fn verify(&self, issuer: &VerifyingKey) -> bool {
        verify(
            issuer,
            &Self::signed_bytes(&self.subject, &self.subject_key),
            &self.signature,
        )
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(self.subject.as_bytes())
            .bytes(&self.subject_key)
            .bytes(&self.signature);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        let subject =
            String::from_utf8(dec.bytes()?.to_vec()).map_err(|_| WireError::Invalid("certificate subject"))?;
        Ok(Self {
            subject,
            subject_key: dec.array()?,
            signature: dec.array()?,
        })
    }
}

/// Verification-service judgment of one quote.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttestationReport {
    pub verdict: Verdict,
    pub quote_digest: [u8; 32],
    pub measurement: Measurement,
    pub bound_key_digest: [u8; 32],
    pub timestamp: u64,
    pub signature: [u8; 64],
    /// Certificates from the pinned root down to the signing key.
    pub chain: Vec<Certificate>,
}

impl AttestationReport {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u8(self.verdict as u8)
            .bytes(&self.quote_digest)
            .bytes(&self.measurement.0)
            .bytes(&self.bound_key_digest)
            .u64(self.timestamp);
        enc.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut chain = Encoder::new();
        for cert in &self.chain {
            cert.encode(&mut chain);
        }
        let mut enc = Encoder::new();
        enc.u8(self.verdict as u8)
            .bytes(&self.quote_digest)
            .bytes(&self.measurement.0)
            .bytes(&self.bound_key_digest)
            .u64(self.timestamp)
            .bytes(&self.signature)
            .bytes(&chain.finish());
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let verdict = Verdict::try_from(dec.u8()?)?;
        let quote_digest = dec.array()?;
        let measurement = Measurement(dec.array()?);
        let bound_key_digest = dec.array()?;
        let timestamp = dec.u64()?;
        let signature = dec.array()?;
        let mut chain_dec = Decoder::new(dec.bytes()?);
        let mut chain = Vec::new();
        while !chain_dec.is_empty() {
            chain.push(Certificate::decode(&mut chain_dec)?);
        }
        dec.finish()?;
        Ok(Self {
            verdict,
            quote_digest,
            measurement,
            bound_key_digest,
            timestamp,
            signature,
            chain,
        })
    }

    /// Walks the certificate chain from `root` and checks the report
    /// signature under the last certified key.
    pub fn verify_signature(&self, root: &VerifyingKey) -> bool {
        if self.chain.is_empty() {
            return false;
        }
        let mut issuer = *root;
        for cert in &self.chain {
            if !cert.verify(&issuer) {
                return false;
            }
            issuer = match VerifyingKey::from_bytes(&cert.subject_key) {
                Ok(k) => k,
                Err(_) => return false,
            };
        }
        verify(&issuer, &self.signed_bytes(), &self.signature)
    }
}

/// Mock attestation verification service.
pub struct VerificationService {
    authority: Arc<QuotingAuthority>,
    root_public: VerifyingKey,
    chain: Vec<Certificate>,
    leaf: SigningKey,
    sigrl: RwLock<SigRl>,
    clock: Arc<dyn Clock>,
}

impl VerificationService {
    pub fn new(seed: &[u8], authority: Arc<QuotingAuthority>, clock: Arc<dyn Clock>) -> Self {
        let root = signing_key_from_seed(seed, "verification-root");
        let leaf = signing_key_from_seed(seed, "verification-leaf");
        let chain = vec![Certificate::issue(
            &root,
            "attestation-report-signing",
            &leaf.verifying_key(),
        )];
        let sigrl = RwLock::new(authority.sign_sigrl(Vec::new(), clock.now()));
        Self {
            authority,
            root_public: root.verifying_key(),
            chain,
            leaf,
            sigrl,
            clock,
        }
    }

    /// The key verifiers pin.
    pub fn root_public_key(&self) -> VerifyingKey {
        self.root_public
    }

    pub fn authority_public_key(&self) -> VerifyingKey {
        self.authority.public_key()
    }

    pub fn sigrl(&self) -> SigRl {
        self.sigrl.read().unwrap().clone()
    }

    /// Adds a platform to the revocation list and re-signs it.
    pub fn revoke_platform(&self, platform_id: &[u8]) -> SigRl {
        let mut guard = self.sigrl.write().unwrap();
        let mut revoked = guard.revoked.clone();
        revoked.push(platform_id.to_vec());
        let issued_at = self.clock.now().max(guard.issued_at);
        *guard = self.authority.sign_sigrl(revoked, issued_at);
        guard.clone()
    }

    /// Judges a serialized quote. Malformed input still yields a signed
    /// `QuoteInvalid` report.
    pub fn verify_quote(&self, quote_bytes: &[u8]) -> AttestationReport {
        let sigrl = self.sigrl.read().unwrap();
        let (verdict, measurement, bound_key_digest) = match Quote::from_bytes(quote_bytes) {
            Err(_) => (Verdict::QuoteInvalid, Measurement([0; 32]), [0; 32]),
            Ok(q) if !q.verify(&self.authority.public_key()) => {
                (Verdict::QuoteInvalid, q.measurement, q.bound_key_digest)
            }
            Ok(q) if sigrl.contains(&q.platform_id) => (Verdict::PlatformRevoked, q.measurement, q.bound_key_digest),
            Ok(q) => (Verdict::Ok, q.measurement, q.bound_key_digest),
        };
        let mut report = AttestationReport {
            verdict,
            quote_digest: sha256(quote_bytes),
            measurement,
            bound_key_digest,
            timestamp: self.clock.now(),
            signature: [0; 64],
            chain: self.chain.clone(),
        };
        report.signature = self.leaf.sign(&report.signed_bytes()).to_bytes();
        report
    }
}
