//! Key-holder replication: who may hold the SafeKey and at what guessing
//! rate.
//!
//! Every key-holding enclave keeps a view of the current key-holder list.
//! The key moves to a new enclave, and any enclave's rate goes up, only when
//! every other member has signed the identical list. Lowering one's own
//! rate needs nobody's approval, and members leave only through a
//! revocation statement signed by the revocation authority. A backup is a
//! member with rate zero.
//!
//! [`Replica`] is the pure state machine; the enclave wraps it with the
//! attested channels that carry lists and key material.

use std::collections::BTreeSet;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestation::Measurement;
use crate::crypto::sha256;
use crate::wire::{Decoder, Encoder, WireError};

pub type SigningPublic = [u8; 32];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplicationError {
    #[error("enclave does not hold the SafeKey")]
    NotHolder,
    #[error("enclave already holds the SafeKey")]
    AlreadyHolder,
    #[error("restored from a stale state; needs re-admission")]
    Quarantined,
    #[error("enclave has been revoked and halted")]
    Halted,
    #[error("missing approval from a current key holder")]
    MissingApproval,
    #[error("signed lists do not match")]
    ListMismatch,
    #[error("member rates violate the total rate")]
    RateSumViolation,
    #[error("bad or foreign signature on a key-holder list")]
    BadSignature,
    #[error("recipient is not a member of the list")]
    NotIncluded,
    #[error("list assigns the wrong role")]
    RoleMismatch,
    #[error("list epoch is not newer than the current view")]
    StaleEpoch,
    #[error("list drops current members")]
    MembershipShrink,
    #[error("list includes a revoked enclave")]
    RevokedMember,
    #[error("invalid list: {0}")]
    InvalidList(&'static str),
    #[error("rate increases need unanimous approval")]
    IncreaseNeedsApproval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Primary,
    Backup,
}

impl Role {
    pub fn for_rate(rate: u32) -> Self {
        if rate > 0 {
            Role::Primary
        } else {
            Role::Backup
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnclaveIdentity {
    pub signing_key: SigningPublic,
    pub measurement: Measurement,
    pub role: Role,
    /// Attempts per window this enclave may grant.
    pub rate: u32,
}

impl EnclaveIdentity {
    pub fn new(signing_key: SigningPublic, measurement: Measurement, rate: u32) -> Self {
        Self {
            signing_key,
            measurement,
            role: Role::for_rate(rate),
            rate,
        }
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.signing_key)
            .bytes(&self.measurement.0)
            .u8(match self.role {
                Role::Primary => 0,
                Role::Backup => 1,
            })
            .u32(self.rate);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Self {
            signing_key: dec.array()?,
            measurement: Measurement(dec.array()?),
            role: match dec.u8()? {
                0 => Role::Primary,
                1 => Role::Backup,
                _ => return Err(WireError::Invalid("role")),
            },
            rate: dec.u32()?,
        })
    }
}

/// The part of a key-holder list every signer must agree on.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ListContent {
    pub epoch: u64,
    pub members: Vec<EnclaveIdentity>,
}

impl ListContent {
    pub fn new(epoch: u64, members: Vec<EnclaveIdentity>) -> Self {
        Self { epoch, members }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut members = Encoder::new();
        for m in &self.members {
            m.encode(&mut members);
        }
        let mut enc = Encoder::new();
        enc.u64(self.epoch).bytes(&members.finish());
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let epoch = dec.u64()?;
        let mut mdec = Decoder::new(dec.bytes()?);
        let mut members = Vec::new();
        while !mdec.is_empty() {
            members.push(EnclaveIdentity::decode(&mut mdec)?);
        }
        dec.finish()?;
        Ok(Self { epoch, members })
    }

    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.to_bytes())
    }

    pub fn member(&self, key: &SigningPublic) -> Option<&EnclaveIdentity> {
        self.members.iter().find(|m| &m.signing_key == key)
    }

    pub fn contains(&self, key: &SigningPublic) -> bool {
        self.member(key).is_some()
    }

    pub fn rate_sum(&self) -> u64 {
        self.members.iter().map(|m| u64::from(m.rate)).sum()
    }

    fn with_rate(&self, key: &SigningPublic, rate: u32, epoch: u64) -> Self {
        let members = self
            .members
            .iter()
            .map(|m| {
                if &m.signing_key == key {
                    EnclaveIdentity::new(m.signing_key, m.measurement, rate)
                } else {
                    m.clone()
                }
            })
            .collect();
        Self { epoch, members }
    }

    fn without(&self, key: &SigningPublic, epoch: u64) -> Self {
        Self {
            epoch,
            members: self.members.iter().filter(|m| &m.signing_key != key).cloned().collect(),
        }
    }
}

/// A list content signed by one member.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyHolderList {
    pub content: ListContent,
    pub signer: SigningPublic,
    pub signature: [u8; 64],
}

impl KeyHolderList {
    pub fn sign(content: ListContent, key: &SigningKey) -> Self {
        let signature = key.sign(&content.to_bytes()).to_bytes();
        Self {
            content,
            signer: key.verifying_key().to_bytes(),
            signature,
        }
    }

    pub fn verify(&self) -> bool {
        VerifyingKey::from_bytes(&self.signer)
            .map(|k| {
                k.verify_strict(&self.content.to_bytes(), &Signature::from_bytes(&self.signature))
                    .is_ok()
            })
            .unwrap_or(false)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(&self.content.to_bytes())
            .bytes(&self.signer)
            .bytes(&self.signature);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let l = Self {
            content: ListContent::from_bytes(dec.bytes()?)?,
            signer: dec.array()?,
            signature: dec.array()?,
        };
        dec.finish()?;
        Ok(l)
    }
}

/// Authority-signed assertion that an enclave is revoked.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RevocationStatement {
    pub revoked: SigningPublic,
    pub signature: [u8; 64],
}

impl RevocationStatement {
    fn signed_bytes(revoked: &SigningPublic) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(b"revoke").bytes(revoked);
        enc.finish()
    }

    pub fn verify(&self, authority: &VerifyingKey) -> bool {
        authority
            .verify_strict(
                &Self::signed_bytes(&self.revoked),
                &Signature::from_bytes(&self.signature),
            )
            .is_ok()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(&self.revoked).bytes(&self.signature);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let s = Self {
            revoked: dec.array()?,
            signature: dec.array()?,
        };
        dec.finish()?;
        Ok(s)
    }
}

pub struct RevocationAuthority {
    key: SigningKey,
}

impl RevocationAuthority {
    pub fn from_seed(seed: &[u8]) -> Self {
        let mut material = seed.to_vec();
        material.extend_from_slice(b"revocation-authority");
        Self {
            key: SigningKey::from_bytes(&sha256(&material)),
        }
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn revoke(&self, enclave: &SigningPublic) -> RevocationStatement {
        RevocationStatement {
            revoked: *enclave,
            signature: self.key.sign(&RevocationStatement::signed_bytes(enclave)).to_bytes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevocationOutcome {
    /// The statement names this enclave; it has halted.
    SelfRevoked,
    /// Removed from the view (epoch bumped).
    Removed,
    /// Not a member; remembered so it is never re-admitted.
    Noted,
    AlreadyKnown,
}

/// Replication state held inside one enclave.
#[derive(Clone)]
pub struct Replica {
    signing: SigningKey,
    measurement: Measurement,
    trusted: BTreeSet<Measurement>,
    total: u32,
    holds_key: bool,
    view: Option<ListContent>,
    enforced_rate: u32,
    revoked: BTreeSet<SigningPublic>,
    halted: bool,
    quarantined: bool,
}

impl std::fmt::Debug for Replica {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Replica")
            .field("id", &hex::encode(&self.public_key()[..6]))
            .field("holds_key", &self.holds_key)
            .field("view", &self.view)
            .field("enforced_rate", &self.enforced_rate)
            .field("halted", &self.halted)
            .field("quarantined", &self.quarantined)
            .finish()
    }
}

impl Replica {
    /// The first key holder: sole member at epoch 0 with the whole rate.
    pub fn genesis(
        signing: SigningKey,
        measurement: Measurement,
        trusted: impl IntoIterator<Item = Measurement>,
        total: u32,
    ) -> Self {
        let me = EnclaveIdentity::new(signing.verifying_key().to_bytes(), measurement, total);
        Self {
            signing,
            measurement,
            trusted: trusted.into_iter().collect(),
            total,
            holds_key: true,
            view: Some(ListContent::new(0, vec![me])),
            enforced_rate: total,
            revoked: BTreeSet::new(),
            halted: false,
            quarantined: false,
        }
    }

    /// An enclave waiting to be admitted; it enforces rate zero.
    pub fn joining(
        signing: SigningKey,
        measurement: Measurement,
        trusted: impl IntoIterator<Item = Measurement>,
        total: u32,
    ) -> Self {
        Self {
            signing,
            measurement,
            trusted: trusted.into_iter().collect(),
            total,
            holds_key: false,
            view: None,
            enforced_rate: 0,
            revoked: BTreeSet::new(),
            halted: false,
            quarantined: false,
        }
    }

    pub fn public_key(&self) -> SigningPublic {
        self.signing.verifying_key().to_bytes()
    }

    pub fn measurement(&self) -> Measurement {
        self.measurement
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn holds_key(&self) -> bool {
        self.holds_key
    }

    pub fn view(&self) -> Option<&ListContent> {
        self.view.as_ref()
    }

    pub fn enforced_rate(&self) -> u32 {
        if self.halted || !self.holds_key {
            0
        } else {
            self.enforced_rate
        }
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn is_quarantined(&self) -> bool {
        self.quarantined
    }

    pub fn revoked(&self) -> &BTreeSet<SigningPublic> {
        &self.revoked
    }

    fn check_live(&self) -> Result<(), ReplicationError> {
        if self.halted {
            Err(ReplicationError::Halted)
        } else {
            Ok(())
        }
    }

    /// A stale state must not vouch for anything: its view may predate
    /// handoffs the live holders already made.
    pub fn check_current(&self) -> Result<(), ReplicationError> {
        self.check_live()?;
        if self.quarantined {
            Err(ReplicationError::Quarantined)
        } else {
            Ok(())
        }
    }

    fn validate(&self, content: &ListContent) -> Result<(), ReplicationError> {
        if content.members.is_empty() {
            return Err(ReplicationError::InvalidList("no members"));
        }
        let mut seen = BTreeSet::new();
        for m in &content.members {
            if !seen.insert(m.signing_key) {
                return Err(ReplicationError::InvalidList("duplicate member"));
            }
            if m.role != Role::for_rate(m.rate) {
                return Err(ReplicationError::RoleMismatch);
            }
            if !self.trusted.contains(&m.measurement) {
                return Err(ReplicationError::InvalidList("untrusted measurement"));
            }
            if self.revoked.contains(&m.signing_key) {
                return Err(ReplicationError::RevokedMember);
            }
        }
        if content.rate_sum() > u64::from(self.total) {
            return Err(ReplicationError::RateSumViolation);
        }
        Ok(())
    }

    /// The single content all `lists` agree on, signed by every member
    /// except this enclave.
    fn unanimous(&self, lists: &[KeyHolderList]) -> Result<ListContent, ReplicationError> {
        let first = lists.first().ok_or(ReplicationError::MissingApproval)?;
        if lists.iter().any(|l| l.content != first.content) {
            return Err(ReplicationError::ListMismatch);
        }
        let content = &first.content;
        self.validate(content)?;
        let me = self.public_key();
        if !content.contains(&me) {
            return Err(ReplicationError::NotIncluded);
        }
        for l in lists {
            if !content.contains(&l.signer) || !l.verify() {
                return Err(ReplicationError::BadSignature);
            }
        }
        let approved: BTreeSet<_> = lists.iter().map(|l| l.signer).collect();
        if content
            .members
            .iter()
            .any(|m| m.signing_key != me && !approved.contains(&m.signing_key))
        {
            return Err(ReplicationError::MissingApproval);
        }
        Ok(content.clone())
    }

    fn covers_view(&self, content: &ListContent) -> bool {
        self.view
            .as_ref()
            .is_none_or(|v| v.members.iter().all(|m| content.contains(&m.signing_key)))
    }

    /// Signs `content` as a current key holder and adopts it. Any decrease
    /// of this enclave's own rate takes effect before the signature exists.
    pub fn approve(&mut self, content: &ListContent) -> Result<KeyHolderList, ReplicationError> {
        self.check_current()?;
        if !self.holds_key {
            return Err(ReplicationError::NotHolder);
        }
        self.validate(content)?;
        let me = self.public_key();
        let mine = content.member(&me).ok_or(ReplicationError::NotIncluded)?;
        let view = self.view.as_ref().expect("key holders have a view");
        if content.epoch <= view.epoch {
            return Err(ReplicationError::StaleEpoch);
        }
        if !self.covers_view(content) {
            return Err(ReplicationError::MembershipShrink);
        }
        self.enforced_rate = self.enforced_rate.min(mine.rate);
        self.view = Some(content.clone());
        Ok(KeyHolderList::sign(content.clone(), &self.signing))
    }

    /// Admission of a new key holder. `sender` is the attested holder that
    /// delivered the key. On success the caller installs the key.
    pub fn accept_transfer(
        &mut self,
        sender: &SigningPublic,
        lists: &[KeyHolderList],
        expected_role: Role,
    ) -> Result<(), ReplicationError> {
        self.check_current()?;
        if self.holds_key {
            return Err(ReplicationError::AlreadyHolder);
        }
        let content = self.unanimous(lists)?;
        if sender == &self.public_key() || !content.contains(sender) {
            return Err(ReplicationError::BadSignature);
        }
        let mine = content
            .member(&self.public_key())
            .ok_or(ReplicationError::NotIncluded)?;
        if mine.role != expected_role {
            return Err(ReplicationError::RoleMismatch);
        }
        if content.rate_sum() != u64::from(self.total) {
            return Err(ReplicationError::RateSumViolation);
        }
        if let Some(v) = &self.view {
            if content.epoch <= v.epoch {
                return Err(ReplicationError::StaleEpoch);
            }
        }
        self.enforced_rate = mine.rate;
        self.view = Some(content);
        self.holds_key = true;
        Ok(())
    }

    /// A current holder adopting a list every other member signed; this is
    /// the only way a holder's rate goes up.
    pub fn accept_lists(&mut self, lists: &[KeyHolderList]) -> Result<u32, ReplicationError> {
        self.check_current()?;
        if !self.holds_key {
            return Err(ReplicationError::NotHolder);
        }
        let content = self.unanimous(lists)?;
        if content.rate_sum() != u64::from(self.total) {
            return Err(ReplicationError::RateSumViolation);
        }
        let view = self.view.as_ref().expect("key holders have a view");
        if content.epoch < view.epoch {
            return Err(ReplicationError::StaleEpoch);
        }
        if content.epoch == view.epoch && &content != view {
            return Err(ReplicationError::ListMismatch);
        }
        if !self.covers_view(&content) {
            return Err(ReplicationError::MembershipShrink);
        }
        let rate = content.member(&self.public_key()).expect("checked").rate;
        self.enforced_rate = rate;
        self.view = Some(content);
        Ok(rate)
    }

    /// Lowers this enclave's own rate immediately and returns the signed
    /// list announcing it.
    pub fn decrease_own(&mut self, new_rate: u32) -> Result<KeyHolderList, ReplicationError> {
        self.check_current()?;
        if !self.holds_key {
            return Err(ReplicationError::NotHolder);
        }
        let me = self.public_key();
        let view = self.view.as_ref().expect("key holders have a view");
        let current = view.member(&me).expect("holders are in their own view").rate;
        if new_rate > current.min(self.enforced_rate) {
            return Err(ReplicationError::IncreaseNeedsApproval);
        }
        self.enforced_rate = new_rate;
        let next = view.with_rate(&me, new_rate, view.epoch + 1);
        self.view = Some(next.clone());
        Ok(KeyHolderList::sign(next, &self.signing))
    }

    /// Adopts another holder's unilateral decrease: identical to the view
    /// except the signer's own rate went down.
    pub fn observe_decrease(&mut self, list: &KeyHolderList) -> Result<(), ReplicationError> {
        self.check_live()?;
        if !self.holds_key {
            return Err(ReplicationError::NotHolder);
        }
        if !list.verify() {
            return Err(ReplicationError::BadSignature);
        }
        let view = self.view.as_ref().expect("key holders have a view");
        let old = view.member(&list.signer).ok_or(ReplicationError::BadSignature)?;
        let new = list
            .content
            .member(&list.signer)
            .ok_or(ReplicationError::BadSignature)?;
        if list.content.epoch <= view.epoch {
            return Err(ReplicationError::StaleEpoch);
        }
        if new.rate > old.rate {
            return Err(ReplicationError::IncreaseNeedsApproval);
        }
        if view.with_rate(&list.signer, new.rate, list.content.epoch) != list.content {
            return Err(ReplicationError::ListMismatch);
        }
        self.view = Some(list.content.clone());
        Ok(())
    }

    /// Applies a revocation statement whose signature the caller verified.
    pub fn apply_revocation(&mut self, revoked: &SigningPublic) -> RevocationOutcome {
        if revoked == &self.public_key() {
            self.halted = true;
            self.enforced_rate = 0;
            return RevocationOutcome::SelfRevoked;
        }
        if !self.revoked.insert(*revoked) {
            return RevocationOutcome::AlreadyKnown;
        }
        match &self.view {
            Some(v) if v.contains(revoked) => {
                self.view = Some(v.without(revoked, v.epoch + 1));
                RevocationOutcome::Removed
            }
            _ => RevocationOutcome::Noted,
        }
    }

    /// For a restored state known to be older than the latest one. It may
    /// predate a rate handoff, and lists it signed after that point may
    /// still be in flight, so no later approval can tell its old
    /// signatures from new ones. The quarantine is permanent: the holder
    /// grants no attempts, signs nothing and accepts nothing. Recovery is
    /// revocation of this identity and admission of a fresh enclave.
    pub fn quarantine(&mut self) {
        self.enforced_rate = 0;
        self.quarantined = true;
    }

    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut revoked = Encoder::new();
        for r in &self.revoked {
            revoked.bytes(r);
        }
        let mut trusted = Encoder::new();
        for t in &self.trusted {
            trusted.bytes(&t.0);
        }
        let mut enc = Encoder::new();
        enc.bytes(&self.signing.to_bytes())
            .bytes(&self.measurement.0)
            .bytes(&trusted.finish())
            .u32(self.total)
            .u8(self.holds_key as u8)
            .bytes(&self.view.as_ref().map(|v| v.to_bytes()).unwrap_or_default())
            .u32(self.enforced_rate)
            .bytes(&revoked.finish())
            .u8(self.halted as u8)
            .u8(self.quarantined as u8);
        enc.finish()
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let signing = SigningKey::from_bytes(&dec.array()?);
        let measurement = Measurement(dec.array()?);
        let mut tdec = Decoder::new(dec.bytes()?);
        let mut trusted = BTreeSet::new();
        while !tdec.is_empty() {
            trusted.insert(Measurement(tdec.array()?));
        }
        let total = dec.u32()?;
        let holds_key = dec.u8()? != 0;
        let view_bytes = dec.bytes()?;
        let view = if view_bytes.is_empty() {
            None
        } else {
            Some(ListContent::from_bytes(view_bytes)?)
        };
        let enforced_rate = dec.u32()?;
        let mut rdec = Decoder::new(dec.bytes()?);
        let mut revoked = BTreeSet::new();
        while !rdec.is_empty() {
            revoked.insert(rdec.array()?);
        }
        let halted = dec.u8()? != 0;
        let quarantined = dec.u8()? != 0;
        dec.finish()?;
        Ok(Self {
            signing,
            measurement,
            trusted,
            total,
            holds_key,
            view,
            enforced_rate,
            revoked,
            halted,
            quarantined,
        })
    }

    /// Digest of the complete replica state (model checking).
    #[doc(hidden)]
    pub fn state_digest(&self) -> [u8; 32] {
        sha256(&self.to_bytes())
    }

    #[doc(hidden)]
    pub fn signing_key(&self) -> &SigningKey {
        &self.signing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOTAL: u32 = 144;

    fn m() -> Measurement {
        Measurement::of_code("safekeeper")
    }

    fn key(i: u8) -> SigningKey {
        SigningKey::from_bytes(&[i; 32])
    }

    fn genesis(i: u8) -> Replica {
        Replica::genesis(key(i), m(), [m()], TOTAL)
    }

    fn joining(i: u8) -> Replica {
        Replica::joining(key(i), m(), [m()], TOTAL)
    }

    fn id(r: &Replica, rate: u32) -> EnclaveIdentity {
        EnclaveIdentity::new(r.public_key(), m(), rate)
    }

    #[test]
    fn single_backup_admission() {
        let mut p0 = genesis(1);
        let mut b0 = joining(2);
        let list = ListContent::new(1, vec![id(&p0, 144), id(&b0, 0)]);
        let signed = p0.approve(&list).unwrap();
        b0.accept_transfer(&p0.public_key(), &[signed], Role::Backup).unwrap();
        assert!(b0.holds_key());
        assert_eq!(b0.enforced_rate(), 0);
        assert_eq!(b0.view(), p0.view());
    }

    /// {p1, b0} hold the key; b1 needs matching lists from both.
    #[test]
    fn second_backup_needs_both_lists() {
        let mut p1 = genesis(1);
        let mut b0 = joining(2);
        let l1 = p1
            .approve(&ListContent::new(1, vec![id(&p1, 144), id(&b0, 0)]))
            .unwrap();
        b0.accept_transfer(&p1.public_key(), &[l1], Role::Backup).unwrap();

        let mut b1 = joining(3);
        let content = ListContent::new(2, vec![id(&p1, 144), id(&b0, 0), id(&b1, 0)]);
        let from_p1 = p1.approve(&content).unwrap();
        let from_b0 = b0.approve(&content).unwrap();

        let mut only_one = b1.clone();
        assert_eq!(
            only_one.accept_transfer(&p1.public_key(), std::slice::from_ref(&from_p1), Role::Backup),
            Err(ReplicationError::MissingApproval)
        );
        assert!(!only_one.holds_key());

        b1.accept_transfer(&p1.public_key(), &[from_p1, from_b0], Role::Backup)
            .unwrap();
        assert!(b1.holds_key());
        // Awareness: every holder sees the same member set.
        assert_eq!(p1.view(), b0.view());
        assert_eq!(b0.view(), b1.view());
    }

    #[test]
    fn list_omitting_the_recipient_is_a_mismatch() {
        let mut p1 = genesis(1);
        let mut b0 = joining(2);
        let l1 = p1
            .approve(&ListContent::new(1, vec![id(&p1, 144), id(&b0, 0)]))
            .unwrap();
        b0.accept_transfer(&p1.public_key(), &[l1], Role::Backup).unwrap();

        let mut b1 = joining(3);
        let with_b1 = ListContent::new(2, vec![id(&p1, 144), id(&b0, 0), id(&b1, 0)]);
        let without_b1 = ListContent::new(2, vec![id(&p1, 144), id(&b0, 0)]);
        let a = p1.approve(&with_b1).unwrap();
        let b = b0.approve(&without_b1).unwrap();
        assert_eq!(
            b1.accept_transfer(&p1.public_key(), &[a, b], Role::Backup),
            Err(ReplicationError::ListMismatch)
        );
        assert!(!b1.holds_key());
    }

    #[test]
    fn promotion_checks_role_and_rate_sum() {
        let mut b0 = genesis(2);
        b0.decrease_own(0).unwrap();
        let mut p1 = joining(3);

        let as_backup = ListContent::new(5, vec![id(&p1, 0), id(&b0, 0)]);
        let l = b0.clone().approve(&as_backup).unwrap();
        assert_eq!(
            p1.clone().accept_transfer(&b0.public_key(), &[l], Role::Primary),
            Err(ReplicationError::RoleMismatch)
        );

        let short = ListContent::new(5, vec![id(&p1, 143), id(&b0, 0)]);
        let l = b0.clone().approve(&short).unwrap();
        assert_eq!(
            p1.clone().accept_transfer(&b0.public_key(), &[l], Role::Primary),
            Err(ReplicationError::RateSumViolation)
        );

        let good = ListContent::new(5, vec![id(&p1, 144), id(&b0, 0)]);
        let l = b0.approve(&good).unwrap();
        p1.accept_transfer(&b0.public_key(), &[l], Role::Primary).unwrap();
        assert_eq!(p1.enforced_rate(), 144);
    }

    #[test]
    fn inconsistent_role_label_rejected() {
        let mut p0 = genesis(1);
        let b0 = joining(2);
        let mut bogus = id(&b0, 10);
        bogus.role = Role::Backup;
        let content = ListContent::new(1, vec![id(&p0, 134), bogus]);
        assert_eq!(p0.approve(&content), Err(ReplicationError::RoleMismatch));
    }

    #[test]
    fn unilateral_decrease_is_immediate() {
        let mut p1 = genesis(1);
        let announce = p1.decrease_own(100).unwrap();
        assert_eq!(p1.enforced_rate(), 100);
        assert!(announce.verify());
        assert_eq!(p1.decrease_own(120), Err(ReplicationError::IncreaseNeedsApproval));
    }

    #[test]
    fn increase_waits_for_every_approval() {
        // {p1=72, b0=0}: p1 proposes 144 for itself.
        let mut p1 = genesis(1);
        let mut b0 = joining(2);
        let l = p1
            .approve(&ListContent::new(1, vec![id(&p1, 144), id(&b0, 0)]))
            .unwrap();
        b0.accept_transfer(&p1.public_key(), &[l], Role::Backup).unwrap();
        let dec = p1.decrease_own(72).unwrap();
        b0.observe_decrease(&dec).unwrap();
        assert_eq!(p1.enforced_rate(), 72);

        let raise = ListContent::new(3, vec![id(&p1, 144), id(&b0, 0)]);
        p1.approve(&raise).unwrap();
        assert_eq!(p1.enforced_rate(), 72, "own signature alone is not enough");
        // b0 withholds: nothing to present.
        assert_eq!(p1.accept_lists(&[]), Err(ReplicationError::MissingApproval));
        let from_b0 = b0.approve(&raise).unwrap();
        assert_eq!(p1.accept_lists(&[from_b0]), Ok(144));
    }

    #[test]
    fn revocation_removes_and_self_halts() {
        let auth = RevocationAuthority::from_seed(b"r");
        let mut p0 = genesis(1);
        let mut b0 = joining(2);
        let l = p0
            .approve(&ListContent::new(1, vec![id(&p0, 144), id(&b0, 0)]))
            .unwrap();
        b0.accept_transfer(&p0.public_key(), &[l], Role::Backup).unwrap();

        let st = auth.revoke(&p0.public_key());
        assert!(st.verify(&auth.public_key()));
        assert!(!st.verify(&RevocationAuthority::from_seed(b"x").public_key()));
        assert_eq!(b0.apply_revocation(&st.revoked), RevocationOutcome::Removed);
        assert_eq!(b0.view().unwrap().members.len(), 1);
        assert_eq!(b0.view().unwrap().epoch, 2);
        assert_eq!(b0.apply_revocation(&st.revoked), RevocationOutcome::AlreadyKnown);

        assert_eq!(p0.apply_revocation(&st.revoked), RevocationOutcome::SelfRevoked);
        assert!(p0.is_halted());
        assert_eq!(p0.enforced_rate(), 0);

        // Revoked identities are never re-admitted.
        let again = ListContent::new(3, vec![id(&b0, 144), id(&p0, 0)]);
        assert_eq!(b0.approve(&again), Err(ReplicationError::RevokedMember));
    }

    #[test]
    fn replayed_transfer_to_other_enclave_fails() {
        let mut p0 = genesis(1);
        let b0 = joining(2);
        let mut other = joining(3);
        let l = p0
            .approve(&ListContent::new(1, vec![id(&p0, 144), id(&b0, 0)]))
            .unwrap();
        assert_eq!(
            other.accept_transfer(&p0.public_key(), &[l], Role::Backup),
            Err(ReplicationError::NotIncluded)
        );
    }

    #[test]
    fn membership_only_grows_and_epochs_increase() {
        let mut p0 = genesis(1);
        let b0 = joining(2);
        let c0 = joining(3);
        p0.approve(&ListContent::new(1, vec![id(&p0, 144), id(&b0, 0)]))
            .unwrap();
        assert_eq!(
            p0.approve(&ListContent::new(2, vec![id(&p0, 144), id(&c0, 0)])),
            Err(ReplicationError::MembershipShrink)
        );
        assert_eq!(
            p0.approve(&ListContent::new(1, vec![id(&p0, 144), id(&b0, 0), id(&c0, 0)])),
            Err(ReplicationError::StaleEpoch)
        );
    }

    #[test]
    fn signed_list_round_trips_and_detects_tampering() {
        let mut p0 = genesis(1);
        let b0 = joining(2);
        let l = p0
            .approve(&ListContent::new(1, vec![id(&p0, 144), id(&b0, 0)]))
            .unwrap();
        let back = KeyHolderList::from_bytes(&l.to_bytes()).unwrap();
        assert_eq!(back, l);
        assert!(back.verify());
        let mut t = back.clone();
        t.content.members[1].rate = 1;
        assert!(!t.verify());
    }

    #[test]
    fn replica_state_round_trips() {
        let mut p0 = genesis(1);
        p0.apply_revocation(&[9; 32]);
        p0.decrease_own(50).unwrap();
        let back = Replica::from_bytes(&p0.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), p0.to_bytes());
        assert_eq!(back.enforced_rate(), 50);
    }
}
