//! The trusted application: four calls (`init`, `process`,
//! `reset_attempts`, `shutdown`) plus the replication hooks a key-holding
//! enclave exposes to its peers.
//!
//! All calls on one [`Enclave`] are serialized by an internal lock, so the
//! rate check and decrement happen as one step.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use ed25519_dalek::{SigningKey, VerifyingKey};
use subtle::ConstantTimeEq;
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};

use crate::attestation::{AttestationReport, Measurement, Quote};
use crate::client::{verify_and_bind, EncryptedCredential, VerifyError, Whitelist};
use crate::cmac::Cmac;
use crate::crypto::{SessionKey, NONCE_LEN, PEER_LABEL, SESSION_LABEL};
use crate::legacy::legacy_md5;
use crate::platform::{TeePlatform, TimeNonce};
use crate::rate_limit::{RateLimited, RateLimiter};
use crate::replication::{
    KeyHolderList, ListContent, Replica, ReplicationError, RevocationOutcome, RevocationStatement, Role, SigningPublic,
};
use crate::seal::{SealedState, UnsealError};
use crate::wire::{Decoder, Encoder, WireError};
use crate::{Salt, SaltLengthError, Tag};

pub const DEFAULT_ATTEMPTS_MAX: u32 = 144;
pub const DEFAULT_WINDOW_SECS: u64 = 24 * 3600;
pub const DEFAULT_CODE_IDENTITY: &str = "safekeeper-enclave/1.0";

/// Session keys cached per client public key; cleared when full.
const SESSION_CACHE_CAP: usize = 4096;

/// The code an enclave runs. Everything that decides whom the enclave
/// trusts is part of its identity, so changing any of it changes the
/// measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnclaveCode {
    pub identity: String,
    /// Other builds allowed to hold the SafeKey; the enclave's own build is
    /// always allowed.
    pub peer_measurements: Vec<Measurement>,
    pub revocation_authority: Option<[u8; 32]>,
    pub attestation_root: Option<[u8; 32]>,
}

impl EnclaveCode {
    pub fn new(identity: &str) -> Self {
        Self {
            identity: identity.to_string(),
            peer_measurements: Vec::new(),
            revocation_authority: None,
            attestation_root: None,
        }
    }

    pub fn with_trust(mut self, revocation: &VerifyingKey, root: &VerifyingKey) -> Self {
        self.revocation_authority = Some(revocation.to_bytes());
        self.attestation_root = Some(root.to_bytes());
        self
    }

    pub fn with_peers(mut self, peers: impl IntoIterator<Item = Measurement>) -> Self {
        self.peer_measurements = peers.into_iter().collect();
        self
    }

    fn identity_string(&self) -> String {
        let mut s = self.identity.clone();
        let mut peers: Vec<_> = self.peer_measurements.iter().map(|m| m.to_hex()).collect();
        peers.sort();
        if !peers.is_empty() {
            s.push_str(";peers=");
            s.push_str(&peers.join(","));
        }
        if let Some(k) = &self.revocation_authority {
            s.push_str(";revocation=");
            s.push_str(&hex::encode(k));
        }
        if let Some(k) = &self.attestation_root {
            s.push_str(";root=");
            s.push_str(&hex::encode(k));
        }
        s
    }

    pub fn measurement(&self) -> Measurement {
        Measurement::of_code(&self.identity_string())
    }

    fn trusted_peers(&self) -> Vec<Measurement> {
        let mut v = self.peer_measurements.clone();
        v.push(self.measurement());
        v
    }
}

impl Default for EnclaveCode {
    fn default() -> Self {
        Self::new(DEFAULT_CODE_IDENTITY)
    }
}

#[derive(Debug, Clone)]
pub struct EnclaveConfig {
    pub attempts_max: u32,
    pub window: u64,
    pub code: EnclaveCode,
}

impl Default for EnclaveConfig {
    fn default() -> Self {
        Self {
            attempts_max: DEFAULT_ATTEMPTS_MAX,
            window: DEFAULT_WINDOW_SECS,
            code: EnclaveCode::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InitError {
    #[error(transparent)]
    Unseal(#[from] UnsealError),
    #[error("sealed state is corrupt: {0}")]
    Corrupt(#[from] WireError),
    #[error("rate-limit window must be positive")]
    ZeroWindow,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ProcessError {
    #[error("rate limited")]
    RateLimited,
    #[error("credential failed authenticated decryption")]
    DecryptError,
    #[error(transparent)]
    SaltLength(#[from] SaltLengthError),
    #[error("enclave does not hold the SafeKey")]
    NoKey,
    #[error("enclave has been revoked")]
    Halted,
    #[error("enclave has been shut down")]
    ShutDown,
}

impl From<RateLimited> for ProcessError {
    fn from(_: RateLimited) -> Self {
        ProcessError::RateLimited
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PeerError {
    #[error("peer attestation failed: {0}")]
    Attestation(#[from] VerifyError),
    #[error("enclave has no attestation trust anchors")]
    NoTrustAnchor,
    #[error("unknown or unattested peer")]
    UnknownPeer,
    #[error("peer message failed authentication")]
    Decrypt,
    #[error("malformed peer message: {0}")]
    Wire(#[from] WireError),
    #[error(transparent)]
    Replication(#[from] ReplicationError),
    #[error("lists do not describe a transfer to this peer")]
    NotForPeer,
    #[error("enclave has been shut down")]
    ShutDown,
}

/// The password input to `process`.
#[derive(Clone, Copy)]
pub enum Credential<'a> {
    /// Already on the trusted side (drop-in hash API, migration).
    Plain(&'a [u8]),
    Encrypted(&'a EncryptedCredential),
}

/// Transformation applied to the recovered password before the CMAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Prehash {
    #[default]
    None,
    /// Legacy salted, iterated MD5 (onion records).
    LegacyMd5,
}

struct Peer {
    channel: SessionKey,
    measurement: Measurement,
    signing_key: Option<SigningPublic>,
}

struct State {
    live: bool,
    safekey: Option<[u8; 16]>,
    cmac: Option<Cmac>,
    limiter: RateLimiter,
    config_max: u32,
    time_nonce: TimeNonce,
    boot_counter: u64,
    /// Replication counter value matching `replica`.
    replication_counter: u64,
    replica: Replica,
    sessions: HashMap<[u8; 32], SessionKey>,
    peers: HashMap<[u8; 32], Peer>,
}

impl State {
    fn install_key(&mut self, key: [u8; 16]) {
        self.cmac = Some(Cmac::new(&key));
        self.safekey = Some(key);
    }

    fn sync_rate(&mut self) {
        let rate = self.config_max.min(self.replica.enforced_rate());
        if rate != self.limiter.attempts_max() {
            self.limiter.set_attempts_max(rate);
        }
    }
}

/// Outcome of [`Enclave::init`] with respect to rollback detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restore {
    Fresh,
    Restored,
    /// Sealed state was stale or the time source was reset.
    Penalized,
}

pub struct Enclave {
    platform: Arc<dyn TeePlatform>,
    code: EnclaveCode,
    measurement: Measurement,
    dh_secret: StaticSecret,
    dh_public: [u8; 32],
    quote: Quote,
    restore: Restore,
    state: Mutex<State>,
}

impl std::fmt::Debug for Enclave {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Enclave")
            .field("measurement", &self.measurement)
            .field("dh_public", &hex::encode(self.dh_public))
            .field("restore", &self.restore)
            .finish_non_exhaustive()
    }
}

impl Enclave {
    /// Starts an enclave. Without `sealed`, a fresh SafeKey is generated.
    ///
    /// A blob that fails authentication is an error; the caller decides
    /// whether to start fresh (abandoning the old SafeKey).
    pub fn init(
        platform: Arc<dyn TeePlatform>,
        config: EnclaveConfig,
        sealed: Option<&[u8]>,
    ) -> Result<Self, InitError> {
        Self::boot(platform, config, sealed, Start::Genesis)
    }

    /// A fresh enclave that waits to receive the SafeKey from current key
    /// holders.
    pub fn init_joining(platform: Arc<dyn TeePlatform>, config: EnclaveConfig) -> Result<Self, InitError> {
        Self::boot(platform, config, None, Start::Joining)
    }

    /// Fresh enclave with a caller-chosen SafeKey. Test fixtures only.
    #[doc(hidden)]
    pub fn provision_with_key(
        platform: Arc<dyn TeePlatform>,
        config: EnclaveConfig,
        key: [u8; 16],
    ) -> Result<Self, InitError> {
        Self::boot(platform, config, None, Start::WithKey(key))
    }

    fn boot(
        platform: Arc<dyn TeePlatform>,
        config: EnclaveConfig,
        sealed: Option<&[u8]>,
        start: Start,
    ) -> Result<Self, InitError> {
        if config.window == 0 {
            return Err(InitError::ZeroWindow);
        }
        let measurement = config.code.measurement();
        let counter = platform.increment_counter();
        let time = platform.trusted_time();

        let mut secret = [0u8; 32];
        platform.fill_random(&mut secret);
        let dh_secret = StaticSecret::from(secret);
        let dh_public = PublicKey::from(&dh_secret).to_bytes();
        let quote = platform.quote(&measurement, &dh_public);

        let trusted = config.code.trusted_peers();
        let (state, restore) = match sealed {
            Some(blob) => {
                let s = SealedState::unseal(&platform.seal_key(&measurement), blob)?;
                let replica = Replica::from_bytes(&s.replication)?;
                let consistent = s.boot_counter.checked_add(1) == Some(counter) && s.time_nonce == time.nonce;
                let max = config.attempts_max.min(s.attempts_max);
                let mut limiter = RateLimiter::from_parts(s.attempts, max, s.window, s.t_reset, s.penalized);
                let mut replica = replica;
                if !consistent {
                    limiter.penalize(time.secs);
                }
                // Replication state changed after this blob was sealed.
                let replication_counter = platform.read_replication_counter();
                if s.replication_counter != replication_counter {
                    replica.quarantine();
                }
                let mut state = State {
                    live: true,
                    safekey: None,
                    cmac: None,
                    limiter,
                    config_max: config.attempts_max,
                    time_nonce: time.nonce,
                    boot_counter: counter,
                    replication_counter,
                    replica,
                    sessions: HashMap::new(),
                    peers: HashMap::new(),
                };
                if let Some(k) = s.safekey {
                    state.install_key(k);
                }
                state.sync_rate();
                let r = if consistent {
                    Restore::Restored
                } else {
                    Restore::Penalized
                };
                (state, r)
            }
            None => {
                let mut signing = [0u8; 32];
                platform.fill_random(&mut signing);
                let signing = SigningKey::from_bytes(&signing);
                let (key, replica) = match start {
                    Start::Joining => (
                        None,
                        Replica::joining(signing, measurement, trusted, config.attempts_max),
                    ),
                    Start::Genesis | Start::WithKey(_) => {
                        let key = match start {
                            Start::WithKey(k) => k,
                            _ => {
                                let mut k = [0u8; 16];
                                platform.fill_random(&mut k);
                                k
                            }
                        };
                        (
                            Some(key),
                            Replica::genesis(signing, measurement, trusted, config.attempts_max),
                        )
                    }
                };
                let mut state = State {
                    live: true,
                    safekey: None,
                    cmac: None,
                    limiter: RateLimiter::new(config.attempts_max, config.window, time.secs),
                    config_max: config.attempts_max,
                    time_nonce: time.nonce,
                    boot_counter: counter,
                    replication_counter: platform.read_replication_counter(),
                    replica,
                    sessions: HashMap::new(),
                    peers: HashMap::new(),
                };
                if let Some(k) = key {
                    state.install_key(k);
                }
                state.sync_rate();
                (state, Restore::Fresh)
            }
        };

        Ok(Self {
            platform,
            code: config.code,
            measurement,
            dh_secret,
            dh_public,
            quote,
            restore,
            state: Mutex::new(state),
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn measurement(&self) -> Measurement {
        self.measurement
    }

    pub fn dh_public(&self) -> [u8; 32] {
        self.dh_public
    }

    /// Generated once at init and reused for every client.
    pub fn quote(&self) -> &Quote {
        &self.quote
    }

    pub fn restore_outcome(&self) -> Restore {
        self.restore
    }

    pub fn boot_counter(&self) -> u64 {
        self.lock().boot_counter
    }

    pub fn is_live(&self) -> bool {
        self.lock().live
    }

    /// A copy of the rate-limit bookkeeping (no key material).
    pub fn rate_limit_state(&self) -> RateLimiter {
        self.lock().limiter.clone()
    }

    pub fn process(&self, credential: Credential<'_>, salt: Salt) -> Result<Tag, ProcessError> {
        self.process_with(credential, salt, Prehash::None)
    }

    /// As [`Enclave::process`] but with the salt as raw bytes.
    pub fn process_raw(&self, credential: Credential<'_>, salt: &[u8]) -> Result<Tag, ProcessError> {
        self.process_with(credential, Salt::from_slice(salt)?, Prehash::None)
    }

    /// One attempt is consumed before the credential is decrypted, so a
    /// failed decryption still costs an attempt.
    pub fn process_with(&self, credential: Credential<'_>, salt: Salt, prehash: Prehash) -> Result<Tag, ProcessError> {
        let mut st = self.lock();
        if !st.live {
            return Err(ProcessError::ShutDown);
        }
        if st.replica.is_halted() {
            return Err(ProcessError::Halted);
        }
        if st.cmac.is_none() {
            return Err(ProcessError::NoKey);
        }
        st.limiter.try_consume(salt)?;
        let decrypted;
        let password: &[u8] = match credential {
            Credential::Plain(p) => p,
            Credential::Encrypted(c) => {
                let session = match st.sessions.get(&c.client_public) {
                    Some(k) => k.clone(),
                    None => {
                        let k = SessionKey::agree(&self.dh_secret, &c.client_public, SESSION_LABEL);
                        if st.sessions.len() >= SESSION_CACHE_CAP {
                            st.sessions.clear();
                        }
                        st.sessions.insert(c.client_public, k.clone());
                        k
                    }
                };
                decrypted = session
                    .open(&c.nonce, &c.client_public, &c.ciphertext)
                    .map_err(|_| ProcessError::DecryptError)?;
                &decrypted
            }
        };
        let cmac = st.cmac.as_ref().expect("checked above");
        let tag = match prehash {
            Prehash::None => cmac.tag_parts(&[password, &salt.0]),
            Prehash::LegacyMd5 => cmac.tag_parts(&[&legacy_md5(password, &salt), &salt.0]),
        };
        Ok(Tag(tag))
    }

    /// Host-triggered housekeeping: window reset, time-source check and the
    /// revocation self-check.
    pub fn reset_attempts(&self) {
        let mut st = self.lock();
        if !st.live {
            return;
        }
        let time = self.platform.trusted_time();
        if time.nonce != st.time_nonce {
            st.limiter.penalize(time.secs);
            st.time_nonce = time.nonce;
        } else {
            st.limiter.reset_if_due(time.secs);
        }
        if let Some(auth) = self.revocation_key() {
            let before = st.replica.to_bytes();
            for statement in self.platform.published_revocations() {
                if statement.verify(&auth) {
                    st.replica.apply_revocation(&statement.revoked);
                }
            }
            self.note_replica_change(&mut st, &before);
        }
        st.sync_rate();
    }

    /// Advances the replication counter when the replica differs from
    /// `before`. Runs before any output of the change leaves the enclave,
    /// so every blob sealed earlier restores quarantined.
    fn note_replica_change(&self, st: &mut State, before: &[u8]) {
        if st.replica.to_bytes() != before {
            st.replication_counter = self.platform.increment_replication_counter();
        }
    }

    /// Seals the full state; the handle is unusable afterwards.
    pub fn shutdown(&self) -> Vec<u8> {
        let mut st = self.lock();
        st.live = false;
        let sealed = SealedState {
            safekey: st.safekey,
            attempts_max: st.limiter.attempts_max(),
            window: st.limiter.window(),
            t_reset: st.limiter.t_reset(),
            time_nonce: st.time_nonce,
            boot_counter: st.boot_counter,
            replication_counter: st.replication_counter,
            penalized: st.limiter.is_penalized(),
            replication: st.replica.to_bytes(),
            attempts: st.limiter.entries().map(|(s, v)| (*s, *v)).collect(),
        };
        let mut nonce = [0u8; NONCE_LEN];
        self.platform.fill_random(&mut nonce);
        sealed.seal(&self.platform.seal_key(&self.measurement), &nonce)
    }

    /// Stops the handle without sealing, as a crash would.
    pub fn crash(&self) {
        self.lock().live = false;
    }

    fn revocation_key(&self) -> Option<VerifyingKey> {
        self.code
            .revocation_authority
            .and_then(|k| VerifyingKey::from_bytes(&k).ok())
    }

    // ---- replication ----

    pub fn signing_public(&self) -> SigningPublic {
        self.lock().replica.public_key()
    }

    pub fn holds_key(&self) -> bool {
        self.lock().replica.holds_key()
    }

    pub fn is_halted(&self) -> bool {
        self.lock().replica.is_halted()
    }

    pub fn enforced_rate(&self) -> u32 {
        self.lock().replica.enforced_rate()
    }

    pub fn view(&self) -> Option<ListContent> {
        self.lock().replica.view().cloned()
    }

    /// The current member set, signed by this enclave. A client that has
    /// attested this enclave can learn every key holder from it.
    pub fn signed_view(&self) -> Option<KeyHolderList> {
        let st = self.lock();
        let view = st.replica.view()?.clone();
        Some(KeyHolderList::sign(view, st.replica.signing_key()))
    }

    #[doc(hidden)]
    pub fn replica_snapshot(&self) -> Replica {
        self.lock().replica.clone()
    }

    /// Verifies a peer enclave's attestation and opens a pairwise channel.
    /// Returns a hello carrying this enclave's signing key for the peer.
    pub fn attest_peer(
        &self,
        quote: &Quote,
        report: &AttestationReport,
        peer_dh: &[u8; 32],
    ) -> Result<Vec<u8>, PeerError> {
        let root = self
            .code
            .attestation_root
            .and_then(|k| VerifyingKey::from_bytes(&k).ok())
            .ok_or(PeerError::NoTrustAnchor)?;
        let whitelist = Whitelist::new(0, self.code.trusted_peers());
        let verified = verify_and_bind(quote, report, &whitelist, &root, peer_dh)?;
        let channel = SessionKey::agree(&self.dh_secret, peer_dh, PEER_LABEL);
        let mut st = self.lock();
        if !st.live {
            return Err(PeerError::ShutDown);
        }
        let hello = self.seal_to(&channel, peer_dh, &st.replica.public_key());
        let signing_key = st.peers.get(peer_dh).and_then(|p| p.signing_key);
        st.peers.insert(
            *peer_dh,
            Peer {
                channel,
                measurement: verified.measurement,
                signing_key,
            },
        );
        Ok(hello)
    }

    /// Records the signing key an attested peer sent over its channel.
    pub fn receive_peer_hello(&self, peer_dh: &[u8; 32], hello: &[u8]) -> Result<(), PeerError> {
        let mut st = self.lock();
        let peer = st.peers.get(peer_dh).ok_or(PeerError::UnknownPeer)?;
        let key = self.open_from(&peer.channel, peer_dh, hello)?;
        let key: SigningPublic = key
            .as_slice()
            .try_into()
            .map_err(|_| PeerError::Wire(WireError::Invalid("signing key")))?;
        st.peers.get_mut(peer_dh).expect("present").signing_key = Some(key);
        Ok(())
    }

    fn seal_to(&self, channel: &SessionKey, peer_dh: &[u8; 32], plaintext: &[u8]) -> Vec<u8> {
        let mut nonce = [0u8; NONCE_LEN];
        self.platform.fill_random(&mut nonce);
        let aad = [self.dh_public.as_slice(), peer_dh].concat();
        let mut enc = Encoder::new();
        enc.bytes(&nonce).bytes(&channel.seal(&nonce, &aad, plaintext));
        enc.finish()
    }

    fn open_from(&self, channel: &SessionKey, peer_dh: &[u8; 32], msg: &[u8]) -> Result<Vec<u8>, PeerError> {
        let mut dec = Decoder::new(msg);
        let nonce: [u8; NONCE_LEN] = dec.array()?;
        let ct = dec.bytes()?;
        dec.finish()?;
        let aad = [peer_dh.as_slice(), self.dh_public.as_slice()].concat();
        channel.open(&nonce, &aad, ct).map_err(|_| PeerError::Decrypt)
    }

    /// Members new to this enclave's view must be peers it attested
    /// itself, with matching signing key and measurement.
    fn check_new_members(st: &State, content: &ListContent) -> Result<(), PeerError> {
        for m in &content.members {
            let known = st.replica.view().is_some_and(|v| v.contains(&m.signing_key));
            if known || m.signing_key == st.replica.public_key() {
                continue;
            }
            let attested = st
                .peers
                .values()
                .any(|p| p.signing_key == Some(m.signing_key) && p.measurement == m.measurement);
            if !attested {
                return Err(PeerError::UnknownPeer);
            }
        }
        Ok(())
    }

    pub fn approve(&self, content: &ListContent) -> Result<KeyHolderList, PeerError> {
        let mut st = self.lock();
        if !st.live {
            return Err(PeerError::ShutDown);
        }
        Self::check_new_members(&st, content)?;
        let before = st.replica.to_bytes();
        let signed = st.replica.approve(content)?;
        self.note_replica_change(&mut st, &before);
        st.sync_rate();
        Ok(signed)
    }

    pub fn accept_lists(&self, lists: &[KeyHolderList]) -> Result<u32, PeerError> {
        let mut st = self.lock();
        if !st.live {
            return Err(PeerError::ShutDown);
        }
        if let Some(first) = lists.first() {
            Self::check_new_members(&st, &first.content)?;
        }
        let before = st.replica.to_bytes();
        let rate = st.replica.accept_lists(lists)?;
        self.note_replica_change(&mut st, &before);
        st.sync_rate();
        Ok(rate)
    }

    pub fn decrease_rate(&self, new_rate: u32) -> Result<KeyHolderList, PeerError> {
        let mut st = self.lock();
        if !st.live {
            return Err(PeerError::ShutDown);
        }
        let before = st.replica.to_bytes();
        let signed = st.replica.decrease_own(new_rate)?;
        self.note_replica_change(&mut st, &before);
        st.sync_rate();
        Ok(signed)
    }

    pub fn observe_decrease(&self, list: &KeyHolderList) -> Result<(), PeerError> {
        let mut st = self.lock();
        let before = st.replica.to_bytes();
        st.replica.observe_decrease(list)?;
        self.note_replica_change(&mut st, &before);
        Ok(())
    }

    /// Applies an authority-signed revocation delivered by the host.
    pub fn apply_revocation(&self, statement: &RevocationStatement) -> Result<RevocationOutcome, PeerError> {
        let auth = self.revocation_key().ok_or(PeerError::NoTrustAnchor)?;
        if !statement.verify(&auth) {
            return Err(PeerError::Replication(ReplicationError::BadSignature));
        }
        let mut st = self.lock();
        let before = st.replica.to_bytes();
        let outcome = st.replica.apply_revocation(&statement.revoked);
        self.note_replica_change(&mut st, &before);
        st.sync_rate();
        Ok(outcome)
    }

    /// Encrypts the SafeKey to an attested peer named in a list this
    /// enclave has approved.
    pub fn send_key(&self, peer_dh: &[u8; 32], lists: &[KeyHolderList]) -> Result<KeyTransfer, PeerError> {
        let st = self.lock();
        if !st.live {
            return Err(PeerError::ShutDown);
        }
        st.replica.check_current()?;
        let key = st.safekey.ok_or(ReplicationError::NotHolder)?;
        let peer = st.peers.get(peer_dh).ok_or(PeerError::UnknownPeer)?;
        let peer_signing = peer.signing_key.ok_or(PeerError::UnknownPeer)?;
        let content = &lists.first().ok_or(ReplicationError::MissingApproval)?.content;
        if st.replica.view() != Some(content)
            || lists.iter().any(|l| &l.content != content)
            || !content.contains(&peer_signing)
        {
            return Err(PeerError::NotForPeer);
        }
        let mut nonce = [0u8; NONCE_LEN];
        self.platform.fill_random(&mut nonce);
        let aad = transfer_aad(&self.dh_public, peer_dh, &content.digest());
        Ok(KeyTransfer {
            from_dh: self.dh_public,
            nonce,
            ciphertext: peer.channel.seal(&nonce, &aad, &key),
            lists: lists.to_vec(),
        })
    }

    /// Installs a SafeKey received from an attested holder, only if the
    /// accompanying lists are unanimous and name this enclave in `role`.
    /// On any failure nothing changes.
    pub fn accept_key(&self, transfer: &KeyTransfer, role: Role) -> Result<(), PeerError> {
        let mut st = self.lock();
        if !st.live {
            return Err(PeerError::ShutDown);
        }
        let peer = st.peers.get(&transfer.from_dh).ok_or(PeerError::UnknownPeer)?;
        let sender = peer.signing_key.ok_or(PeerError::UnknownPeer)?;
        let channel = peer.channel.clone();
        let mut replica = st.replica.clone();
        replica.accept_transfer(&sender, &transfer.lists, role)?;
        let digest = transfer.lists[0].content.digest();
        let aad = transfer_aad(&transfer.from_dh, &self.dh_public, &digest);
        let key: [u8; 16] = channel
            .open(&transfer.nonce, &aad, &transfer.ciphertext)
            .map_err(|_| PeerError::Decrypt)?
            .try_into()
            .map_err(|_| PeerError::Decrypt)?;
        let before = std::mem::replace(&mut st.replica, replica).to_bytes();
        self.note_replica_change(&mut st, &before);
        st.install_key(key);
        st.sync_rate();
        Ok(())
    }

    /// Whether two enclaves compute the same function (same SafeKey),
    /// without revealing it: compares tags on a fixed probe.
    #[doc(hidden)]
    pub fn key_fingerprint(&self) -> Option<[u8; 16]> {
        let st = self.lock();
        st.cmac.as_ref().map(|c| c.tag_parts(&[b"safekeeper-fingerprint"]))
    }
}

enum Start {
    Genesis,
    Joining,
    WithKey([u8; 16]),
}

fn transfer_aad(from: &[u8; 32], to: &[u8; 32], digest: &[u8; 32]) -> Vec<u8> {
    [from.as_slice(), to, digest].concat()
}

/// SafeKey handoff message between enclaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyTransfer {
    pub from_dh: [u8; 32],
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub lists: Vec<KeyHolderList>,
}

impl KeyTransfer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut lists = Encoder::new();
        for l in &self.lists {
            lists.bytes(&l.to_bytes());
        }
        let mut enc = Encoder::new();
        enc.bytes(&self.from_dh)
            .bytes(&self.nonce)
            .bytes(&self.ciphertext)
            .bytes(&lists.finish());
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let from_dh = dec.array()?;
        let nonce = dec.array()?;
        let ciphertext = dec.bytes()?.to_vec();
        let mut ldec = Decoder::new(dec.bytes()?);
        let mut lists = Vec::new();
        while !ldec.is_empty() {
            lists.push(KeyHolderList::from_bytes(ldec.bytes()?)?);
        }
        dec.finish()?;
        Ok(Self {
            from_dh,
            nonce,
            ciphertext,
            lists,
        })
    }
}

impl Tag {
    pub fn ct_eq(&self, other: &Tag) -> bool {
        self.0.ct_eq(&other.0).into()
    }
}
