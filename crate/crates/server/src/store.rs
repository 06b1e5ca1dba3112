//! Password records: an append-only JSON-lines file with an in-memory
//! index. A later line for the same user supersedes earlier ones.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use safekeeper_core::Salt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// Salted, iterated MD5 from before the migration.
    LegacyMd5,
    Safekeeper,
    /// Legacy hash fed through the enclave.
    Onion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordRecord {
    pub user_id: String,
    #[serde(with = "hex_salt")]
    pub salt: Salt,
    #[serde(with = "hex_tag")]
    pub tag: [u8; 16],
    pub scheme: Scheme,
}

mod hex_salt {
    use safekeeper_core::Salt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(salt: &Salt, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(salt.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Salt, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        Salt::from_slice(&bytes).map_err(serde::de::Error::custom)
    }
}

mod hex_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tag: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(tag))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("tag must be 16 bytes"))
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("user already exists")]
    DuplicateUser,
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("store line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

pub struct PasswordStore {
    path: Option<PathBuf>,
    file: Option<File>,
    records: BTreeMap<String, PasswordRecord>,
}

impl PasswordStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            records: BTreeMap::new(),
        }
    }

    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut records = BTreeMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: PasswordRecord =
                    serde_json::from_str(&line).map_err(|source| StoreError::Parse { line: i + 1, source })?;
                records.insert(rec.user_id.clone(), rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Some(file),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, user_id: &str) -> Option<&PasswordRecord> {
        self.records.get(user_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &PasswordRecord> {
        self.records.values()
    }

    pub fn insert(&mut self, rec: PasswordRecord) -> Result<(), StoreError> {
        if self.records.contains_key(&rec.user_id) {
            return Err(StoreError::DuplicateUser);
        }
        self.append(rec)
    }

    /// Replaces an existing record (or inserts).
    pub fn put(&mut self, rec: PasswordRecord) -> Result<(), StoreError> {
        self.append(rec)
    }

    fn append(&mut self, rec: PasswordRecord) -> Result<(), StoreError> {
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_vec(&rec).expect("records serialize");
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
        }
        self.records.insert(rec.user_id.clone(), rec);
        Ok(())
    }

    /// Every record as it would appear on disk, for inspection.
    pub fn dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for rec in self.records.values() {
            out.extend(serde_json::to_vec(rec).expect("records serialize"));
            out.push(b'\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: &str, scheme: Scheme) -> PasswordRecord {
        PasswordRecord {
            user_id: user.into(),
            salt: Salt([1, 2, 3, 4, 5, 6, 7, 8]),
            tag: [9; 16],
            scheme,
        }
    }

    #[test]
    fn reload_applies_last_line_per_user() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.jsonl");
        {
            let mut s = PasswordStore::open(&path).unwrap();
            s.insert(rec("alice", Scheme::LegacyMd5)).unwrap();
            s.insert(rec("bob", Scheme::Safekeeper)).unwrap();
            assert!(matches!(
                s.insert(rec("bob", Scheme::Safekeeper)),
                Err(StoreError::DuplicateUser)
            ));
            s.put(rec("alice", Scheme::Onion)).unwrap();
        }
        let s = PasswordStore::open(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get("alice").unwrap().scheme, Scheme::Onion);
        let line = serde_json::to_string(s.get("alice").unwrap()).unwrap();
        assert!(line.contains("\"salt\":\"0102030405060708\""));
        assert!(line.contains("\"scheme\":\"ONION\""));
    }
}
