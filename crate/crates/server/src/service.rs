//! The untrusted web service logic. It stores (salt, tag) records and
//! compares tags; it never sees a plaintext password on the protected
//! path and never tells the enclave who is logging in.

use std::sync::{Arc, Mutex, RwLock};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use safekeeper_core::client::EncryptedCredential;
use safekeeper_core::crypto::sha256;
use safekeeper_core::enclave::{Credential, Enclave, Prehash, ProcessError};
use safekeeper_core::{Salt, Tag};
use serde::Serialize;
use thiserror::Error;

use crate::store::{PasswordRecord, PasswordStore, Scheme, StoreError};
use crate::tap::Tap;

pub const QUOTE_HEADER: &str = "X-SafeKeeper-Quote";
pub const PUBLIC_KEY_HEADER: &str = "X-SafeKeeper-Public-Key";
pub const PROTECTED_FIELDS: &[&str] = &["password"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LoginOutcome {
    Accepted,
    Rejected,
    Throttled,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("user already exists")]
    DuplicateUser,
    #[error("rate limited")]
    RateLimited,
    #[error("credential failed to decrypt")]
    DecryptError,
    #[error("enclave unavailable")]
    EnclaveDown,
    #[error("enclave error: {0}")]
    Enclave(ProcessError),
    #[error(transparent)]
    Store(StoreError),
}

impl From<ProcessError> for ServiceError {
    fn from(e: ProcessError) -> Self {
        match e {
            ProcessError::RateLimited => ServiceError::RateLimited,
            ProcessError::DecryptError => ServiceError::DecryptError,
            other => ServiceError::Enclave(other),
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::DuplicateUser => ServiceError::DuplicateUser,
            other => ServiceError::Store(other),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MigrationReport {
    pub migrated: Vec<String>,
    pub skipped: Vec<String>,
    /// Rate limited this window; retry after the next reset.
    pub deferred: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub headers: Vec<(&'static str, String)>,
    pub body: String,
}

pub struct AuthService {
    enclave: RwLock<Option<Arc<Enclave>>>,
    store: Mutex<PasswordStore>,
    rng: Mutex<ChaCha20Rng>,
    tap: Tap,
}

impl AuthService {
    pub fn new(enclave: Option<Arc<Enclave>>, store: PasswordStore, seed: u64, tap: Tap) -> Self {
        Self {
            enclave: RwLock::new(enclave),
            store: Mutex::new(store),
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            tap,
        }
    }

    pub fn enclave(&self) -> Option<Arc<Enclave>> {
        self.enclave.read().unwrap().clone()
    }

    /// Swaps the enclave; `None` simulates it being down.
    pub fn set_enclave(&self, enclave: Option<Arc<Enclave>>) {
        *self.enclave.write().unwrap() = enclave;
    }

    pub fn tap(&self) -> &Tap {
        &self.tap
    }

    fn running(&self) -> Result<Arc<Enclave>, ServiceError> {
        self.enclave().ok_or(ServiceError::EnclaveDown)
    }

    pub fn record(&self, user_id: &str) -> Option<PasswordRecord> {
        self.store.lock().unwrap().get(user_id).cloned()
    }

    pub fn records(&self) -> Vec<PasswordRecord> {
        self.store.lock().unwrap().records().cloned().collect()
    }

    /// The database as an attacker who copies it would see it.
    pub fn database_bytes(&self) -> Vec<u8> {
        self.store.lock().unwrap().dump()
    }

    fn fresh_salt(&self) -> Salt {
        Salt(self.rng.lock().unwrap().gen())
    }

    fn persist(&self, rec: PasswordRecord, replace: bool) -> Result<(), ServiceError> {
        let line = serde_json::to_vec(&rec).expect("records serialize");
        let mut store = self.store.lock().unwrap();
        if replace {
            store.put(rec)?;
        } else {
            store.insert(rec)?;
        }
        self.tap.record("database", &line);
        Ok(())
    }

    pub fn register(&self, user_id: &str, cred: &EncryptedCredential) -> Result<(), ServiceError> {
        if self.store.lock().unwrap().get(user_id).is_some() {
            return Err(ServiceError::DuplicateUser);
        }
        let enclave = self.running()?;
        let salt = self.fresh_salt();
        let tag = enclave.process(Credential::Encrypted(cred), salt)?;
        self.persist(
            PasswordRecord {
                user_id: user_id.to_string(),
                salt,
                tag: tag.0,
                scheme: Scheme::Safekeeper,
            },
            false,
        )
    }

    /// Unknown users cost one enclave call on a salt derived from the
    /// user id, so they look like any wrong password.
    pub fn login(&self, user_id: &str, cred: &EncryptedCredential) -> LoginOutcome {
        let Ok(enclave) = self.running() else {
            return LoginOutcome::Rejected;
        };
        let record = self.record(user_id);
        let (salt, prehash) = match &record {
            Some(r) => (
                r.salt,
                match r.scheme {
                    Scheme::Onion => Prehash::LegacyMd5,
                    _ => Prehash::None,
                },
            ),
            None => (pseudo_salt(user_id), Prehash::None),
        };
        let result = enclave.process_with(Credential::Encrypted(cred), salt, prehash);
        match (result, record) {
            (Err(ProcessError::RateLimited), _) => LoginOutcome::Throttled,
            (Err(_), _) | (Ok(_), None) => LoginOutcome::Rejected,
            // Legacy records need the migration before protected logins.
            (Ok(_), Some(r)) if r.scheme == Scheme::LegacyMd5 => LoginOutcome::Rejected,
            (Ok(tag), Some(r)) => {
                if tag.ct_eq(&Tag(r.tag)) {
                    LoginOutcome::Accepted
                } else {
                    LoginOutcome::Rejected
                }
            }
        }
    }

    /// Drop-in replacement for a password hashing function.
    pub fn hash_password(&self, password_or_prehash: &[u8], salt: Salt) -> Result<Tag, ServiceError> {
        let enclave = self.running()?;
        Ok(enclave.process(Credential::Plain(password_or_prehash), salt)?)
    }

    /// Loads a record from a pre-existing legacy database.
    pub fn import_legacy(&self, user_id: &str, salt: Salt, legacy_hash: [u8; 16]) -> Result<(), ServiceError> {
        self.persist(
            PasswordRecord {
                user_id: user_id.to_string(),
                salt,
                tag: legacy_hash,
                scheme: Scheme::LegacyMd5,
            },
            false,
        )
    }

    /// Wraps every legacy hash in the enclave function, without user
    /// involvement. Rate-limited records stay legacy and are reported as
    /// deferred.
    pub fn migrate_database(&self) -> Result<MigrationReport, ServiceError> {
        let enclave = self.running()?;
        let mut report = MigrationReport::default();
        for rec in self.records() {
            if rec.scheme != Scheme::LegacyMd5 {
                report.skipped.push(rec.user_id);
                continue;
            }
            match enclave.process(Credential::Plain(&rec.tag), rec.salt) {
                Ok(tag) => {
                    self.persist(
                        PasswordRecord {
                            tag: tag.0,
                            scheme: Scheme::Onion,
                            ..rec.clone()
                        },
                        true,
                    )?;
                    report.migrated.push(rec.user_id);
                }
                Err(ProcessError::RateLimited) => report.deferred.push(rec.user_id),
                Err(e) => return Err(e.into()),
            }
        }
        Ok(report)
    }

    /// Login and registration pages. Without a running enclave the
    /// attestation headers are omitted and clients show the page as
    /// unprotected.
    pub fn serve_page(&self, path: &str) -> Option<Page> {
        let (title, action) = match path {
            "/login" => ("Log in", "/api/login"),
            "/register" => ("Register", "/api/register"),
            _ => return None,
        };
        let mut headers = Vec::new();
        if let Some(e) = self.enclave() {
            headers.push((QUOTE_HEADER, B64.encode(e.quote().to_bytes())));
            headers.push((PUBLIC_KEY_HEADER, B64.encode(e.dh_public())));
        }
        let body = format!(
            "<!doctype html>\n<html><head><meta charset=\"utf-8\">\n\
             <meta name=\"safekeeper\" content=\"{fields}\">\n<title>{title}</title></head>\n\
             <body><h1>{title}</h1>\n<form method=\"post\" action=\"{action}\">\n\
             <label>User <input name=\"user_id\" type=\"text\"></label>\n\
             <label>Password <input name=\"password\" type=\"password\"></label>\n\
             <button type=\"submit\">{title}</button>\n</form></body></html>\n",
            fields = PROTECTED_FIELDS.join(","),
        );
        Some(Page { headers, body })
    }
}

/// First 64 bits of the digest of the user id.
pub fn pseudo_salt(user_id: &str) -> Salt {
    Salt(sha256(user_id.as_bytes())[..8].try_into().unwrap())
}
