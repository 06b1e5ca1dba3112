//! Known-answer vectors shared with the browser demo, so a second
//! implementation of the client can check itself byte for byte against
//! this one. Every value is produced by the code under test and, where an
//! independent answer exists, checked against it before export.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use safekeeper_core::attestation::{AttestationReport, Measurement};
use safekeeper_core::client::{verify_and_bind, ClientChannel, VerifiedEnclave};
use safekeeper_core::cmac::Cmac;
use safekeeper_core::enclave::{Credential, Enclave};
use safekeeper_core::Salt;
use safekeeper_server::http::CredentialBody;
use serde::Serialize;

use crate::sim::World;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CmacVector {
    pub key: String,
    pub message: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcessVector {
    pub safekey: String,
    pub password: String,
    pub salt: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionVector {
    pub enclave_secret: String,
    pub enclave_public: String,
    pub client_secret: String,
    pub client_public: String,
    pub hkdf_info: String,
    pub session_key: String,
    pub nonce: String,
    pub password: String,
    /// AES-128-GCM with the client public key as associated data.
    pub ciphertext: String,
    pub credential_bytes: String,
    /// The request body for `/api/login`.
    pub login_body: CredentialBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttestationVector {
    pub name: String,
    /// Base64, as in the `X-SafeKeeper-Quote` header.
    pub quote: String,
    /// Base64, as in the `X-SafeKeeper-Public-Key` header.
    pub enclave_key: String,
    /// Base64 body returned by `/proxy/verify`.
    pub report: String,
    /// `"ok"` or the rejection reason.
    pub expect: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Vectors {
    pub format_version: u32,
    pub cmac: Vec<CmacVector>,
    pub process: Vec<ProcessVector>,
    pub session: SessionVector,
    pub root_public_key: String,
    pub whitelist: Vec<String>,
    pub attestation: Vec<AttestationVector>,
}

/// Published AES-CMAC examples for the key 2b7e1516...
pub const RFC4493: [(&str, &str); 4] = [
    ("", "bb1d6929e95937287fa37d129b756746"),
    ("6bc1bee22e409f96e93d7e117393172a", "070a16b46b4d4144f79bdd9dd04a287c"),
    (
        "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e5130c81c46a35ce411",
        "dfa66747de9ae63030ca32611497c827",
    ),
    (
        "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e5130c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710",
        "51f0bebf7e3b9d92fc49741779363cfe",
    ),
];
pub const RFC4493_KEY: &str = "2b7e151628aed2a6abf7158809cf4f3c";

fn key16(hex_key: &str) -> [u8; 16] {
    hex::decode(hex_key).unwrap().try_into().unwrap()
}

/// X25519 public key of `secret`, via a throwaway channel.
fn x25519_public(secret: [u8; 32]) -> [u8; 32] {
    let dummy = VerifiedEnclave {
        measurement: Measurement([0; 32]),
        enclave_public: [9; 32],
    };
    *ClientChannel::from_secret(&dummy, secret).public()
}

pub fn generate() -> Vectors {
    let cmac = RFC4493
        .iter()
        .map(|(m, want)| {
            let got = hex::encode(Cmac::new(&key16(RFC4493_KEY)).tag(&hex::decode(m).unwrap()));
            assert_eq!(&got, want, "CMAC disagrees with the published example");
            CmacVector {
                key: RFC4493_KEY.into(),
                message: m.to_string(),
                tag: got,
            }
        })
        .collect();

    // process() through a real enclave, checked against the bare CMAC.
    let w = World::new();
    let safekey = key16("000102030405060708090a0b0c0d0e0f");
    let e = Enclave::provision_with_key(w.platform("vectors", 1), w.config(144), safekey).unwrap();
    let process = [
        ("", [0u8; 8]),
        ("password", *b"saltsalt"),
        ("correct horse battery staple", [0xa5; 8]),
    ]
    .iter()
    .map(|(pw, salt)| {
        let tag = e.process(Credential::Plain(pw.as_bytes()), Salt(*salt)).unwrap();
        assert_eq!(tag.0, Cmac::new(&safekey).tag_parts(&[pw.as_bytes(), salt]));
        ProcessVector {
            safekey: hex::encode(safekey),
            password: pw.to_string(),
            salt: hex::encode(salt),
            tag: hex::encode(tag.0),
        }
    })
    .collect();

    let session = session_vector();
    let (root_public_key, whitelist, attestation) = attestation_vectors(&w);
    Vectors {
        format_version: FORMAT_VERSION,
        cmac,
        process,
        session,
        root_public_key,
        whitelist,
        attestation,
    }
}

fn session_vector() -> SessionVector {
    let enclave_secret = [0x11; 32];
    let client_secret = [0x22; 32];
    let enclave_public = x25519_public(enclave_secret);
    let client = ClientChannel::from_secret(
        &VerifiedEnclave {
            measurement: Measurement([0; 32]),
            enclave_public,
        },
        client_secret,
    );
    // Both ends must derive the same key.
    let enclave_side = ClientChannel::from_secret(
        &VerifiedEnclave {
            measurement: Measurement([0; 32]),
            enclave_public: *client.public(),
        },
        enclave_secret,
    );
    assert_eq!(client.session_key().as_bytes(), enclave_side.session_key().as_bytes());
    let nonce = [0x33; 12];
    let password = "hunter2";
    let ciphertext = client.session_key().seal(&nonce, client.public(), password.as_bytes());
    let cred = safekeeper_core::client::EncryptedCredential {
        client_public: *client.public(),
        nonce,
        ciphertext: ciphertext.clone(),
    };
    SessionVector {
        enclave_secret: hex::encode(enclave_secret),
        enclave_public: hex::encode(enclave_public),
        client_secret: hex::encode(client_secret),
        client_public: hex::encode(client.public()),
        hkdf_info: String::from_utf8(safekeeper_core::crypto::SESSION_LABEL.to_vec()).unwrap(),
        session_key: hex::encode(client.session_key().as_bytes()),
        nonce: hex::encode(nonce),
        password: password.into(),
        ciphertext: hex::encode(&ciphertext),
        credential_bytes: hex::encode(cred.to_bytes()),
        login_body: CredentialBody::new("alice", &cred),
    }
}

fn attestation_vectors(w: &World) -> (String, Vec<String>, Vec<AttestationVector>) {
    let root = w.ias.root_public_key();
    let whitelist = w.whitelist();
    let e = Enclave::init(w.platform("vectors-site", 2), w.config(144), None).unwrap();
    let quote = e.quote().clone();
    let report = w.ias.verify_quote(&quote.to_bytes());
    let key = e.dh_public();

    let mut cases = vec![("genuine", quote.clone(), report.clone(), key)];
    let mut swapped = key;
    swapped[0] ^= 1;
    cases.push(("swapped enclave key", quote.clone(), report.clone(), swapped));
    let mut bad_sig = report.clone();
    bad_sig.signature[5] ^= 0x80;
    cases.push(("tampered report signature", quote.clone(), bad_sig, key));
    let mut moved = quote.clone();
    moved.measurement.0[0] ^= 1;
    cases.push(("quote measurement changed after report", moved, report.clone(), key));
    let mut rogue_cfg = w.config(144);
    rogue_cfg.code.identity = "rogue-exfiltrating-enclave".into();
    let rogue = Enclave::init(w.platform("vectors-rogue", 3), rogue_cfg, None).unwrap();
    let rogue_report = w.ias.verify_quote(&rogue.quote().to_bytes());
    cases.push((
        "off-whitelist measurement",
        rogue.quote().clone(),
        rogue_report,
        rogue.dh_public(),
    ));

    let vectors = cases
        .into_iter()
        .map(
            |(name, q, r, k): (&str, _, AttestationReport, [u8; 32])| AttestationVector {
                name: name.into(),
                quote: B64.encode(q.to_bytes()),
                enclave_key: B64.encode(k),
                report: B64.encode(r.to_bytes()),
                expect: match verify_and_bind(&q, &r, &whitelist, &root, &k) {
                    Ok(_) => "ok".into(),
                    Err(e) => format!("{e:?}"),
                },
            },
        )
        .collect();
    (
        hex::encode(root.as_bytes()),
        vec![w.code().measurement().to_hex()],
        vectors,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectations_cover_accept_and_reject() {
        let v = generate();
        let expects: Vec<&str> = v.attestation.iter().map(|a| a.expect.as_str()).collect();
        assert_eq!(
            expects,
            [
                "ok",
                "KeyBindingMismatch",
                "SignatureError",
                "ReportMismatch",
                "UntrustedMeasurement"
            ]
        );
        assert_eq!(generate(), v);
    }
}
