//! Single-field corruption of everything a client verifies: the quote (both
//! before the verification service sees it and after its report came
//! back), the report, the report's certificate chain and the enclave key,
//! plus whole-object substitutions a malicious host or proxy could make.
//! Every case must be rejected by `verify_and_bind`.

use std::collections::BTreeMap;
use std::sync::Arc;

use ed25519_dalek::SigningKey;
use safekeeper_core::attestation::{AttestationReport, Certificate, Quote, Verdict, VerificationService};
use safekeeper_core::client::{verify_and_bind, ClientChannel, VerifiedEnclave, VerifyError, Whitelist};
use safekeeper_core::enclave::Enclave;
use serde::Serialize;

use crate::sim::World;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub cases: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorruptionStudy {
    /// The uncorrupted control must verify, or every rejection is moot.
    pub control_accepted: bool,
    pub by_target: BTreeMap<String, Tally>,
    /// Rejection reasons across all cases.
    pub reasons: BTreeMap<String, usize>,
    /// Cases that were wrongly accepted.
    pub accepted: Vec<String>,
}

impl CorruptionStudy {
    pub fn cases(&self) -> usize {
        self.by_target.values().map(|t| t.cases).sum()
    }

    pub fn rejected(&self) -> usize {
        self.by_target.values().map(|t| t.rejected).sum()
    }

    pub fn sound(&self) -> bool {
        self.control_accepted && self.accepted.is_empty() && self.cases() == self.rejected()
    }

    fn record(&mut self, target: &str, case: String, outcome: Result<(), impl std::fmt::Debug>) {
        let t = self.by_target.entry(target.to_string()).or_default();
        t.cases += 1;
        match outcome {
            Ok(()) => self.accepted.push(format!("{target}: {case}")),
            Err(e) => {
                t.rejected += 1;
                *self.reasons.entry(format!("{e:?}")).or_default() += 1;
            }
        }
    }
}

/// Every single-bit flip of `bytes`, by bit index.
fn flips(bytes: &[u8]) -> impl Iterator<Item = (usize, Vec<u8>)> + '_ {
    (0..bytes.len() * 8).map(move |bit| {
        let mut v = bytes.to_vec();
        v[bit / 8] ^= 1 << (bit % 8);
        (bit, v)
    })
}

fn arr<const N: usize>(v: &[u8]) -> [u8; N] {
    v.try_into().expect("length preserved by a flip")
}

struct Subject {
    quote: Quote,
    key: [u8; 32],
    report: AttestationReport,
}

struct Verifier {
    whitelist: Whitelist,
    root: ed25519_dalek::VerifyingKey,
}

impl Verifier {
    fn check(&self, quote: &Quote, report: &AttestationReport, key: &[u8; 32]) -> Result<(), VerifyError> {
        verify_and_bind(quote, report, &self.whitelist, &self.root, key).map(|_| ())
    }
}

type QuoteField = (&'static str, fn(&Quote) -> Vec<u8>, fn(&mut Quote, &[u8]));
type ReportField = (
    &'static str,
    fn(&AttestationReport) -> Vec<u8>,
    fn(&mut AttestationReport, &[u8]),
);

const QUOTE_FIELDS: [QuoteField; 4] = [
    (
        "measurement",
        |q| q.measurement.0.to_vec(),
        |q, v| q.measurement.0 = arr(v),
    ),
    (
        "bound_key_digest",
        |q| q.bound_key_digest.to_vec(),
        |q, v| q.bound_key_digest = arr(v),
    ),
    (
        "platform_id",
        |q| q.platform_id.clone(),
        |q, v| q.platform_id = v.to_vec(),
    ),
    ("signature", |q| q.signature.to_vec(), |q, v| q.signature = arr(v)),
];

const REPORT_FIELDS: [ReportField; 5] = [
    (
        "quote_digest",
        |r| r.quote_digest.to_vec(),
        |r, v| r.quote_digest = arr(v),
    ),
    (
        "measurement",
        |r| r.measurement.0.to_vec(),
        |r, v| r.measurement.0 = arr(v),
    ),
    (
        "bound_key_digest",
        |r| r.bound_key_digest.to_vec(),
        |r, v| r.bound_key_digest = arr(v),
    ),
    (
        "timestamp",
        |r| r.timestamp.to_be_bytes().to_vec(),
        |r, v| r.timestamp = u64::from_be_bytes(arr(v)),
    ),
    ("signature", |r| r.signature.to_vec(), |r, v| r.signature = arr(v)),
];

fn genuine(world: &World, enclave: &Enclave) -> Subject {
    let quote = enclave.quote().clone();
    let report = world.ias.verify_quote(&quote.to_bytes());
    Subject {
        quote,
        key: enclave.dh_public(),
        report,
    }
}

/// Runs the whole study in `world`, which must have whitelisted the
/// default enclave code.
pub fn study(world: &World) -> CorruptionStudy {
    let mut out = CorruptionStudy::default();
    let v = Verifier {
        whitelist: world.whitelist(),
        root: world.ias.root_public_key(),
    };
    let honest = Enclave::init(world.platform("victim", 11), world.config(144), None).expect("enclave");
    let s = genuine(world, &honest);
    out.control_accepted = v.check(&s.quote, &s.report, &s.key).is_ok();

    for (name, get, set) in QUOTE_FIELDS {
        for (bit, flipped) in flips(&get(&s.quote)) {
            let mut q = s.quote.clone();
            set(&mut q, &flipped);
            // The host altered the quote before asking for a report.
            let fresh = world.ias.verify_quote(&q.to_bytes());
            out.record(
                &format!("quote.{name}/before-report"),
                format!("bit {bit}"),
                v.check(&q, &fresh, &s.key),
            );
            // Altered after the genuine report was obtained.
            out.record(
                &format!("quote.{name}/after-report"),
                format!("bit {bit}"),
                v.check(&q, &s.report, &s.key),
            );
        }
    }

    for (name, get, set) in REPORT_FIELDS {
        for (bit, flipped) in flips(&get(&s.report)) {
            let mut r = s.report.clone();
            set(&mut r, &flipped);
            out.record(
                &format!("report.{name}"),
                format!("bit {bit}"),
                v.check(&s.quote, &r, &s.key),
            );
        }
    }
    for verdict in [Verdict::QuoteInvalid, Verdict::PlatformRevoked] {
        let mut r = s.report.clone();
        r.verdict = verdict;
        out.record("report.verdict", format!("{verdict:?}"), v.check(&s.quote, &r, &s.key));
    }

    let cert = s.report.chain[0].clone();
    let chains: Vec<(&str, Vec<Certificate>)> =
        vec![("empty", Vec::new()), ("duplicated", vec![cert.clone(), cert.clone()])];
    for (case, chain) in chains {
        let mut r = s.report.clone();
        r.chain = chain;
        out.record("report.chain", case.to_string(), v.check(&s.quote, &r, &s.key));
    }
    // Flipped on the wire: some flips are not UTF-8 and fail to decode.
    let wire = s.report.to_bytes();
    let at = wire
        .windows(cert.subject.len())
        .position(|w| w == cert.subject.as_bytes())
        .expect("subject is serialized verbatim");
    for bit in 0..cert.subject.len() * 8 {
        let mut bytes = wire.clone();
        bytes[at + bit / 8] ^= 1 << (bit % 8);
        let outcome = match AttestationReport::from_bytes(&bytes) {
            Ok(r) => v.check(&s.quote, &r, &s.key).map_err(|e| format!("{e:?}")),
            Err(e) => Err(format!("Decode({e})")),
        };
        out.record("report.chain.subject", format!("bit {bit}"), outcome);
    }
    for (bit, flipped) in flips(&cert.subject_key) {
        let mut r = s.report.clone();
        r.chain[0].subject_key = arr(&flipped);
        out.record(
            "report.chain.subject_key",
            format!("bit {bit}"),
            v.check(&s.quote, &r, &s.key),
        );
    }
    for (bit, flipped) in flips(&cert.signature) {
        let mut r = s.report.clone();
        r.chain[0].signature = arr(&flipped);
        out.record(
            "report.chain.signature",
            format!("bit {bit}"),
            v.check(&s.quote, &r, &s.key),
        );
    }

    for (bit, flipped) in flips(&s.key) {
        out.record(
            "enclave_key",
            format!("bit {bit}"),
            v.check(&s.quote, &s.report, &arr(&flipped)),
        );
    }

    substitutions(world, &v, &s, &mut out);
    out
}

fn substitutions(world: &World, v: &Verifier, s: &Subject, out: &mut CorruptionStudy) {
    // Man in the middle: a genuine enclave of its own, or a bare key pair.
    let other = Enclave::init(world.platform("attacker", 12), world.config(144), None).expect("enclave");
    let o = genuine(world, &other);
    out.record(
        "substitution",
        "key of another genuine enclave".into(),
        v.check(&s.quote, &s.report, &o.key),
    );
    let target = VerifiedEnclave {
        measurement: s.quote.measurement,
        enclave_public: s.key,
    };
    let attacker_key = *ClientChannel::from_secret(&target, [7; 32]).public();
    out.record(
        "substitution",
        "attacker's own key".into(),
        v.check(&s.quote, &s.report, &attacker_key),
    );
    out.record(
        "substitution",
        "report for another quote".into(),
        v.check(&s.quote, &o.report, &s.key),
    );
    out.record(
        "substitution",
        "quote and key of another enclave, original report".into(),
        v.check(&o.quote, &s.report, &o.key),
    );

    // Phishing: a genuine enclave running code the client does not trust.
    let mut rogue_cfg = world.config(144);
    rogue_cfg.code.identity = "rogue-exfiltrating-enclave".into();
    let rogue = Enclave::init(world.platform("rogue", 13), rogue_cfg, None).expect("enclave");
    let r = genuine(world, &rogue);
    out.record(
        "substitution",
        "off-whitelist measurement".into(),
        v.check(&r.quote, &r.report, &r.key),
    );

    // The proxy signs its own report under a root of its own.
    let fake = VerificationService::new(b"proxy-forgery", world.authority.clone(), Arc::new(world.clock.clone()));
    let forged = fake.verify_quote(&s.quote.to_bytes());
    out.record(
        "substitution",
        "report from an unpinned root".into(),
        v.check(&s.quote, &forged, &s.key),
    );
    // Or keeps the genuine chain and signs with a key it made up.
    let mut resigned = forged.clone();
    resigned.chain = s.report.chain.clone();
    out.record(
        "substitution",
        "genuine chain, forged signature".into(),
        v.check(&s.quote, &resigned, &s.key),
    );
    let mut rooted = forged;
    let proxy_key = SigningKey::from_bytes(&[9; 32]);
    rooted.chain = vec![Certificate::issue(
        &proxy_key,
        &s.report.chain[0].subject,
        &proxy_key.verifying_key(),
    )];
    out.record(
        "substitution",
        "self-issued certificate".into(),
        v.check(&s.quote, &rooted, &s.key),
    );

    // A platform the authority revoked.
    let revoked = Enclave::init(world.platform("revoked-platform", 14), world.config(144), None).expect("enclave");
    let before = world.ias.sigrl();
    world.ias.revoke_platform(&revoked.quote().platform_id);
    let rv = genuine(world, &revoked);
    out.record(
        "substitution",
        "revoked platform".into(),
        v.check(&rv.quote, &rv.report, &rv.key),
    );
    debug_assert!(world.ias.sigrl().issued_at >= before.issued_at);
}
