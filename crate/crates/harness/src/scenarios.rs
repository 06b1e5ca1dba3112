//! The built-in scenarios. Each builds its own world on the virtual clock,
//! drives it, and reports per-assertion results plus an event trace. All
//! randomness comes from the seed, so a seed fixes the whole report.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use safekeeper_core::cmac::Cmac;
use safekeeper_core::enclave::{Credential, Enclave, Restore};
use safekeeper_core::legacy::legacy_md5;
use safekeeper_core::proxy::{Upstream, UpstreamError};
use safekeeper_core::replication::{EnclaveIdentity, ListContent, RevocationStatement, Role};
use safekeeper_core::{ProcessError, Salt};
use safekeeper_server::http::Status;
use safekeeper_server::store::Scheme;
use safekeeper_server::Tap;
use thiserror::Error;

use crate::guessing;
use crate::net::{Faults, SimNet};
use crate::report::ScenarioReport;
use crate::rollback;
use crate::sim::{Browser, Indicator, Recorder, World, DAY};

pub const SCENARIOS: [&str; 10] = [
    "honest-login",
    "rogue-online-guesser",
    "offline-db-theft",
    "rollback-replay",
    "crash-no-seal",
    "mitm-key-swap",
    "phishing-wrong-measurement",
    "failover",
    "multi-primary-rates",
    "migration",
];

/// Runs of the scaled guessing study inside the scenario.
pub const GUESSING_RUNS: usize = 201;
/// Keys tried by the offline attacker.
pub const OFFLINE_TRIALS: u64 = 100_000;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown scenario {0:?}; try `harness list`")]
pub struct UnknownScenario(pub String);

pub fn list() -> &'static [&'static str] {
    &SCENARIOS
}

pub fn run_scenario(name: &str, seed: u64) -> Result<ScenarioReport, UnknownScenario> {
    Ok(match name {
        "honest-login" => honest_login(seed),
        "rogue-online-guesser" => rogue_online_guesser(seed),
        "offline-db-theft" => offline_db_theft(seed),
        "rollback-replay" => rollback_replay(seed),
        "crash-no-seal" => crash_no_seal(seed),
        "mitm-key-swap" => mitm_key_swap(seed),
        "phishing-wrong-measurement" => phishing_wrong_measurement(seed),
        "failover" => failover(seed),
        "multi-primary-rates" => multi_primary_rates(seed),
        "migration" => migration(seed),
        other => return Err(UnknownScenario(other.to_string())),
    })
}

fn password(rng: &mut ChaCha20Rng) -> Vec<u8> {
    const ALPHABET: &[u8] = b"abcdefghijkmnpqrstuvwxyzACDEFGHJKLMNPQRTUVWXY34679";
    (0..14).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

fn enclave(w: &World, id: &str, seed: u64) -> Arc<Enclave> {
    Arc::new(Enclave::init(w.platform(id, seed), w.config(144), None).expect("fresh enclave"))
}

fn protected(ind: &Indicator) -> bool {
    matches!(ind, Indicator::Protected(_))
}

fn honest_login(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let site = w.site(Some(enclave(&w, "site", seed)), seed);
    let mut browser = Browser::new(&w, seed);

    let page = browser.load(&w, &site, "/login");
    let ind = browser.assess(&w, &site, &page);
    rec.event(
        "browser",
        format!(
            "login page: {}",
            if protected(&ind) { "protected" } else { "unprotected" }
        ),
    );
    rec.check("page-protected", protected(&ind), format!("{ind:?}"));
    rec.expect_eq(
        "protected-fields",
        page.protected_fields.clone(),
        vec!["password".to_string()],
    );

    let users: Vec<(String, Vec<u8>)> = (0..5).map(|i| (format!("user{i}"), password(&mut rng))).collect();
    for (user, pw) in &users {
        let st = browser.register(&w, &site, user, pw);
        rec.event("browser", format!("register {user}: {st:?}"));
        rec.expect_eq(&format!("register-{user}"), st, Ok(Status::Accepted));
    }
    for (user, pw) in &users {
        let st = browser.login(&w, &site, user, pw);
        rec.event("browser", format!("login {user}: {st:?}"));
        if rec.expect_eq(&format!("login-{user}"), st, Ok(Status::Accepted)) {
            rec.secret(pw);
        }
    }
    let wrong = browser.login(&w, &site, &users[0].0, b"not-the-password");
    rec.expect_eq("wrong-password", wrong, Ok(Status::Rejected));
    let unknown = browser.login(&w, &site, "nobody", &users[0].1);
    rec.expect_eq("unknown-user", unknown, Ok(Status::Rejected));

    let records = site.service().records();
    rec.check(
        "db-holds-tags-only",
        records.iter().all(|r| r.scheme == Scheme::Safekeeper),
        format!("{} records", records.len()),
    );
    rec.metric("records", records.len());
    rec.finish("honest-login", seed, &[&site.tap])
}

fn rogue_online_guesser(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // Full-scale arithmetic: 20-bit passwords, 144 guesses a day.
    let days = guessing::windows_to_half(20, 144);
    rec.expect_eq("windows-to-half-2^20-at-144", days, 3641);
    rec.metric("years_to_half", days as f64 / 365.0);

    // Scaled, simulated with direct enclave access.
    let study = guessing::scaled_study(seed.wrapping_mul(1_000_003), GUESSING_RUNS, 1 << 10, 16);
    rec.event(
        "adversary",
        format!("{} attacks: median {} windows", study.runs, study.median_windows),
    );
    rec.check(
        "scaled-median-within-15pct",
        study.relative_error <= 0.15,
        format!(
            "median {} vs {} ({:.3})",
            study.median_windows, study.expected_median, study.relative_error
        ),
    );
    rec.expect_eq("every-run-at-ceil-position-over-rate", study.inconsistent_runs, 0);
    rec.check(
        "never-above-rate",
        study.max_per_window <= 16,
        format!("max {}", study.max_per_window),
    );
    rec.metric("scaled_study", &study);

    // The same limit seen through the web service.
    let site = w.site(Some(enclave(&w, "site", seed)), seed);
    let mut browser = Browser::new(&w, seed);
    let pw = password(&mut rng);
    rec.expect_eq(
        "register",
        browser.register(&w, &site, "victim", &pw),
        Ok(Status::Accepted),
    );
    w.clock.advance(DAY);
    site.service().enclave().unwrap().reset_attempts();
    let mut rejected = 0;
    let mut first_throttle = None;
    for i in 1..=150u32 {
        match browser.login(&w, &site, "victim", format!("guess-{i}").as_bytes()) {
            Ok(Status::Rejected) => rejected += 1,
            Ok(Status::Throttled) if first_throttle.is_none() => first_throttle = Some(i),
            _ => {}
        }
    }
    rec.event(
        "adversary",
        format!("{rejected} wrong guesses answered, throttled from #{first_throttle:?}"),
    );
    rec.expect_eq("web-guesses-per-window", rejected, 144);
    rec.expect_eq("first-throttled-guess", first_throttle, Some(145));
    let owner = browser.login(&w, &site, "victim", &pw);
    rec.expect_eq("owner-also-throttled", owner, Ok(Status::Throttled));
    w.clock.advance(DAY);
    site.service().enclave().unwrap().reset_attempts();
    let owner = browser.login(&w, &site, "victim", &pw);
    if rec.expect_eq("owner-after-reset", owner, Ok(Status::Accepted)) {
        rec.secret(&pw);
    }
    rec.finish("rogue-online-guesser", seed, &[&site.tap])
}

fn offline_db_theft(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let safekey: [u8; 16] = rng.gen();
    let e = Arc::new(Enclave::provision_with_key(w.platform("site", seed), w.config(144), safekey).unwrap());
    let site = w.site(Some(e), seed);
    let mut browser = Browser::new(&w, seed);
    let users: Vec<(String, Vec<u8>)> = (0..8).map(|i| (format!("user{i}"), password(&mut rng))).collect();
    for (user, pw) in &users {
        browser.register(&w, &site, user, pw).ok();
        if browser.login(&w, &site, user, pw) == Ok(Status::Accepted) {
            rec.secret(pw);
        }
    }

    // The attacker copies the database and even knows every password; it
    // lacks only the SafeKey.
    let stolen = site.service().records();
    site.tap.record("stolen-database", &site.service().database_bytes());
    rec.event("adversary", format!("stole {} records", stolen.len()));
    let pw_of = |user: &str| users.iter().find(|(u, _)| u == user).map(|(_, p)| p.clone()).unwrap();

    // Control: with the real key the same computation confirms every
    // record, so a zero below means the key is what is missing.
    let real = Cmac::new(&safekey);
    let confirmed = stolen
        .iter()
        .filter(|r| real.tag_parts(&[&pw_of(&r.user_id), &r.salt.0]) == r.tag)
        .count();
    rec.expect_eq("control-with-true-key", confirmed, stolen.len());

    let mut verified = 0u64;
    for _ in 0..OFFLINE_TRIALS {
        let guess: [u8; 16] = rng.gen();
        let r = &stolen[rng.gen_range(0..stolen.len())];
        if Cmac::new(&guess).tag_parts(&[&pw_of(&r.user_id), &r.salt.0]) == r.tag {
            verified += 1;
        }
    }
    rec.event(
        "adversary",
        format!("{OFFLINE_TRIALS} offline trials, {verified} verified"),
    );
    rec.expect_eq("offline-verified-guesses", verified, 0);
    rec.metric("trials", OFFLINE_TRIALS);
    rec.metric("verified", verified);
    rec.finish("offline-db-theft", seed, &[&site.tap])
}

fn rollback_replay(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let tap = Tap::recording();
    let key = [0x5c; 16];
    let pa = w.platform("adversary", seed);
    let adv = Enclave::provision_with_key(pa.clone(), w.config(144), key).unwrap();
    let base = Enclave::provision_with_key(w.platform("baseline", seed + 1), w.config(144), key).unwrap();
    let salt = Salt(seed.to_be_bytes());

    // A blob sealed while the attempts are fresh.
    let fresh = adv.shutdown();
    tap.record("sealed-blob", &fresh);
    let adv = Enclave::init(pa.clone(), w.config(144), Some(&fresh)).unwrap();
    let (mut a, mut b) = (0u32, 0u32);
    for _ in 0..144 {
        a += adv.process(Credential::Plain(b"guess"), salt).is_ok() as u32;
        b += base.process(Credential::Plain(b"guess"), salt).is_ok() as u32;
    }
    rec.event("adversary", format!("spent {a} guesses, replays the older blob"));
    adv.crash();
    let adv = Enclave::init(pa, w.config(144), Some(&fresh)).unwrap();
    rec.expect_eq("replay-penalized", adv.restore_outcome(), Restore::Penalized);
    for _ in 0..144 {
        a += adv.process(Credential::Plain(b"guess"), salt).is_ok() as u32;
        b += base.process(Credential::Plain(b"guess"), salt).is_ok() as u32;
    }
    rec.expect_eq("no-extra-attempts-in-window", (a, b), (144, 144));
    w.clock.advance(DAY);
    adv.reset_attempts();
    base.reset_attempts();
    for _ in 0..200 {
        a += adv.process(Credential::Plain(b"guess"), salt).is_ok() as u32;
        b += base.process(Credential::Plain(b"guess"), salt).is_ok() as u32;
    }
    rec.check(
        "never-ahead-of-baseline",
        a <= b,
        format!("adversary {a}, baseline {b}"),
    );

    // Randomized schedule of restarts, crashes, replays and clock resets.
    let s = rollback::run_schedule(seed, 50, 144);
    rec.event(
        "adversary",
        format!("50-event schedule: {} penalized restores", s.penalized_restores),
    );
    rec.expect_eq("schedule-never-ahead", s.violation_at, None);
    rec.metric("schedule", &s);
    rec.finish("rollback-replay", seed, &[&tap])
}

fn crash_no_seal(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = w.platform("site", seed);
    let e = Arc::new(Enclave::init(p.clone(), w.config(144), None).unwrap());
    let sealed = e.shutdown();
    let e = Arc::new(Enclave::init(p.clone(), w.config(144), Some(&sealed)).unwrap());
    let site = w.site(Some(e.clone()), seed);
    site.tap.record("sealed-blob", &sealed);
    let mut browser = Browser::new(&w, seed);
    let pw = password(&mut rng);
    rec.expect_eq(
        "register",
        browser.register(&w, &site, "alice", &pw),
        Ok(Status::Accepted),
    );
    for i in 0..10 {
        browser.login(&w, &site, "alice", format!("wrong-{i}").as_bytes()).ok();
    }

    // Power cut: nothing sealed since boot.
    e.crash();
    rec.event("host", "crash without sealing");
    let restarted = Arc::new(Enclave::init(p, w.config(144), Some(&sealed)).unwrap());
    rec.expect_eq("crash-penalized", restarted.restore_outcome(), Restore::Penalized);
    site.service().set_enclave(Some(restarted.clone()));
    let st = browser.login(&w, &site, "alice", &pw);
    rec.expect_eq("penalty-blocks-login", st, Ok(Status::Throttled));

    // The penalty ends at a reset point of the original schedule.
    w.clock.advance(DAY);
    restarted.reset_attempts();
    let st = browser.login(&w, &site, "alice", &pw);
    if rec.expect_eq("login-after-penalty", st, Ok(Status::Accepted)) {
        rec.secret(&pw);
    }
    rec.finish("crash-no-seal", seed, &[&site.tap])
}

/// A host-controlled hop that rewrites reports on their way back.
struct Tampering<U> {
    inner: U,
    flip_bit: usize,
}

impl<U: Upstream> Upstream for Tampering<U> {
    fn verify(&self, quote: &[u8]) -> Result<Vec<u8>, UpstreamError> {
        let mut report = self.inner.verify(quote)?;
        let i = self.flip_bit % (report.len() * 8);
        report[i / 8] ^= 1 << (i % 8);
        Ok(report)
    }

    fn sigrl(&self) -> Result<Vec<u8>, UpstreamError> {
        self.inner.sigrl()
    }
}

fn mitm_key_swap(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let site = w.site(Some(enclave(&w, "site", seed)), seed);
    let mut browser = Browser::new(&w, seed);
    let pw = password(&mut rng);
    rec.expect_eq(
        "register",
        browser.register(&w, &site, "alice", &pw),
        Ok(Status::Accepted),
    );

    // The attacker's own genuine enclave, whose key it swaps in.
    let attacker = enclave(&w, "attacker", seed ^ 0xa77a);
    let mut page = browser.load(&w, &site, "/login");
    page.enclave_key = Some(attacker.dh_public().to_vec());
    let ind = browser.assess(&w, &site, &page);
    rec.event("mitm", format!("swapped enclave key: {ind:?}"));
    rec.check("swapped-key-rejected", !protected(&ind), format!("{ind:?}"));

    // Swapping quote and key together yields the attacker's enclave,
    // which is genuine but does not hold the site's SafeKey.
    page.quote = Some(attacker.quote().to_bytes());
    let ind = browser.assess(&w, &site, &page);
    // It verifies, since the attacker's enclave is genuine, but the
    // password then reaches an enclave without the site's key.
    rec.check("foreign-enclave-verifies", protected(&ind), format!("{ind:?}"));
    if let Indicator::Protected(v) = &ind {
        let st = browser.submit(&w, &site, "/api/login", v, "alice", &pw);
        rec.expect_eq("foreign-enclave-cannot-log-in", st, Status::Rejected);
    }

    // A proxy that flips report bits on the way back.
    let mut tampered = 0;
    for k in 0..16usize {
        let bit = rng.gen_range(0..4096) + k;
        let up: Arc<dyn Upstream> = Arc::new(Tampering {
            inner: w.upstream.clone(),
            flip_bit: bit,
        });
        let evil = w.site_with_upstream(site.service().enclave(), seed, up);
        let page = browser.load(&w, &evil, "/login");
        if !protected(&browser.assess(&w, &evil, &page)) {
            tampered += 1;
        }
    }
    rec.expect_eq("tampered-reports-detected", tampered, 16);

    let st = browser.login(&w, &site, "alice", &pw);
    if rec.expect_eq("honest-path-still-works", st, Ok(Status::Accepted)) {
        rec.secret(&pw);
    }
    rec.finish("mitm-key-swap", seed, &[&site.tap])
}

fn phishing_wrong_measurement(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let genuine = w.site(Some(enclave(&w, "site", seed)), seed);
    let mut browser = Browser::new(&w, seed);
    let pw = password(&mut rng);
    rec.expect_eq(
        "register",
        browser.register(&w, &genuine, "alice", &pw),
        Ok(Status::Accepted),
    );

    // A look-alike site running an enclave that leaks passwords.
    let mut cfg = w.config(144);
    cfg.code.identity = "password-exfiltrator".into();
    let rogue = Arc::new(Enclave::init(w.platform("phisher", seed ^ 0xf15), cfg, None).unwrap());
    let phish = w.site(Some(rogue), seed ^ 1);
    let st = browser.login(&w, &phish, "alice", &pw);
    rec.event("browser", format!("rogue enclave page: {st:?}"));
    rec.check(
        "off-whitelist-refused",
        matches!(&st, Err(why) if why.contains("whitelist")),
        format!("{st:?}"),
    );

    // A look-alike with no enclave at all.
    let bare = w.site(None, seed ^ 2);
    let st = browser.login(&w, &bare, "alice", &pw);
    rec.check("no-attestation-refused", st.is_err(), format!("{st:?}"));

    // A look-alike that replays the genuine site's headers: the browser
    // encrypts to the genuine enclave, so the phisher gets ciphertext only.
    let real_page = browser.load(&w, &genuine, "/login");
    let ind = browser.assess(&w, &phish, &real_page);
    rec.check("replayed-headers-verify", protected(&ind), format!("{ind:?}"));
    if let Indicator::Protected(v) = &ind {
        let st = browser.submit(&w, &phish, "/api/login", v, "alice", &pw);
        rec.event("phisher", format!("replayed headers, got {st:?}"));
        rec.check(
            "replayed-headers-yield-ciphertext-only",
            phish.tap.find(&pw).is_none(),
            "tap scan",
        );
    }

    let st = browser.login(&w, &genuine, "alice", &pw);
    if rec.expect_eq("genuine-login", st, Ok(Status::Accepted)) {
        rec.secret(&pw);
    }
    rec.finish(
        "phishing-wrong-measurement",
        seed,
        &[&genuine.tap, &phish.tap, &bare.tap],
    )
}

#[derive(Clone)]
enum Wire {
    Key(safekeeper_core::enclave::KeyTransfer, Role),
    Revocation(RevocationStatement),
}

impl Wire {
    fn bytes(&self) -> Vec<u8> {
        match self {
            Wire::Key(t, _) => t.to_bytes(),
            Wire::Revocation(s) => s.to_bytes(),
        }
    }
}

fn ident(e: &Enclave, rate: u32) -> EnclaveIdentity {
    EnclaveIdentity::new(e.signing_public(), e.measurement(), rate)
}

/// Retries `send` over a lossy network until `done` holds.
fn until_delivered(
    net: &mut SimNet<Wire>,
    tap: &Tap,
    rec: &mut Recorder,
    to: &str,
    deliver: &mut dyn FnMut(&Wire) -> bool,
    mut msg: impl FnMut() -> Wire,
) -> u32 {
    for round in 1..=64 {
        net.send(to, msg());
        for (_, m) in net.drain() {
            tap.record("replication", &m.bytes());
            if deliver(&m) {
                rec.event("net", format!("delivered to {to} in round {round}"));
                return round;
            }
        }
    }
    rec.event("net", format!("gave up delivering to {to}"));
    0
}

fn failover(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tap = Tap::recording();
    let mut net = SimNet::new(
        seed,
        Faults {
            drop: 0.3,
            duplicate: 0.2,
            reorder: true,
        },
    );
    let p0 = enclave(&w, "p0", seed);
    let b0 = Arc::new(Enclave::init_joining(w.platform("b0", seed + 1), w.config(144)).unwrap());
    rec.check("attest-p0-b0", w.connect(&p0, &b0).is_ok(), "mutual attestation");
    let sum = |es: &[&Arc<Enclave>]| es.iter().map(|e| e.enforced_rate()).sum::<u32>();

    // {p0} admits b0 as a backup.
    let c = ListContent::new(p0.view().unwrap().epoch + 1, vec![ident(&p0, 144), ident(&b0, 0)]);
    let l = p0.approve(&c).unwrap();
    let rounds = until_delivered(
        &mut net,
        &tap,
        &mut rec,
        "b0",
        &mut |m| match m {
            Wire::Key(t, role) => b0.accept_key(t, *role).is_ok() || b0.holds_key(),
            _ => false,
        },
        || {
            Wire::Key(
                p0.send_key(&b0.dh_public(), std::slice::from_ref(&l)).unwrap(),
                Role::Backup,
            )
        },
    );
    rec.check(
        "backup-admitted",
        rounds > 0 && b0.holds_key(),
        format!("{rounds} rounds"),
    );
    rec.expect_eq("same-function", b0.key_fingerprint(), p0.key_fingerprint());
    rec.expect_eq(
        "rates-after-admission",
        (p0.enforced_rate(), b0.enforced_rate()),
        (144, 0),
    );

    let site = w.site(Some(p0.clone()), seed);
    let mut browser = Browser::new(&w, seed);
    let users: Vec<(String, Vec<u8>)> = (0..3).map(|i| (format!("user{i}"), password(&mut rng))).collect();
    for (u, pw) in &users {
        browser.register(&w, &site, u, pw).ok();
    }

    // The primary's machine dies for good.
    p0.crash();
    site.service().set_enclave(None);
    rec.event("host", "p0 lost");
    let down = browser.login(&w, &site, &users[0].0, &users[0].1);
    rec.check("down-while-failing-over", down.is_err(), format!("{down:?}"));
    let st = w.revocation.revoke(&p0.signing_public());
    let st2 = st.clone();
    until_delivered(
        &mut net,
        &tap,
        &mut rec,
        "b0",
        &mut |m| match m {
            Wire::Revocation(s) => b0.apply_revocation(s).is_ok(),
            _ => false,
        },
        || Wire::Revocation(st2.clone()),
    );
    w.board.publish(st);
    rec.expect_eq("b0-view-after-revocation", b0.view().map(|v| v.members.len()), Some(1));

    // b0 hands the full rate to a new primary p1.
    let p1 = Arc::new(Enclave::init_joining(w.platform("p1", seed + 2), w.config(144)).unwrap());
    rec.check("attest-b0-p1", w.connect(&b0, &p1).is_ok(), "mutual attestation");
    let c = ListContent::new(b0.view().unwrap().epoch + 1, vec![ident(&p1, 144), ident(&b0, 0)]);
    let l = b0.approve(&c).unwrap();
    let rounds = until_delivered(
        &mut net,
        &tap,
        &mut rec,
        "p1",
        &mut |m| match m {
            Wire::Key(t, role) => p1.accept_key(t, *role).is_ok() || p1.holds_key(),
            _ => false,
        },
        || {
            Wire::Key(
                b0.send_key(&p1.dh_public(), std::slice::from_ref(&l)).unwrap(),
                Role::Primary,
            )
        },
    );
    rec.check("new-primary-admitted", rounds > 0, format!("{rounds} rounds"));
    rec.expect_eq(
        "rates-after-failover",
        (p1.enforced_rate(), b0.enforced_rate()),
        (144, 0),
    );
    rec.check(
        "live-sum-bounded",
        sum(&[&p1, &b0]) <= 144,
        format!("{}", sum(&[&p1, &b0])),
    );

    site.service().set_enclave(Some(p1.clone()));
    for (u, pw) in &users {
        let st = browser.login(&w, &site, u, pw);
        if rec.expect_eq(&format!("login-{u}-after-failover"), st, Ok(Status::Accepted)) {
            rec.secret(pw);
        }
    }
    rec.expect_eq(
        "backup-grants-nothing",
        b0.process(Credential::Plain(b"x"), Salt([1; 8])),
        Err(ProcessError::RateLimited),
    );
    rec.metric("net", net.stats());
    rec.finish("failover", seed, &[&site.tap, &tap])
}

fn multi_primary_rates(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let tap = Tap::recording();
    let p0 = enclave(&w, "p0", seed);
    let b0 = Arc::new(Enclave::init_joining(w.platform("b0", seed + 1), w.config(144)).unwrap());
    let p1 = Arc::new(Enclave::init_joining(w.platform("p1", seed + 2), w.config(144)).unwrap());
    for (a, b) in [(&p0, &b0), (&p0, &p1), (&b0, &p1)] {
        rec.check("attest", w.connect(a, b).is_ok(), "mutual attestation");
    }
    let all = [&p0, &p1, &b0];
    let rates = |es: &[&Arc<Enclave>]| es.iter().map(|e| e.enforced_rate()).collect::<Vec<_>>();

    let c = ListContent::new(p0.view().unwrap().epoch + 1, vec![ident(&p0, 144), ident(&b0, 0)]);
    let l = p0.approve(&c).unwrap();
    tap.record("replication", &l.to_bytes());
    b0.accept_key(&p0.send_key(&b0.dh_public(), &[l]).unwrap(), Role::Backup)
        .unwrap();

    // {p0=72, p1=72, b0=0}
    let c = ListContent::new(
        p0.view().unwrap().epoch + 1,
        vec![ident(&p0, 72), ident(&p1, 72), ident(&b0, 0)],
    );
    let from_p0 = p0.approve(&c).unwrap();
    rec.expect_eq("p0-lowers-on-signing", p0.enforced_rate(), 72);
    let from_b0 = b0.approve(&c).unwrap();
    let t = p0.send_key(&p1.dh_public(), &[from_p0, from_b0]).unwrap();
    tap.record("replication", &t.to_bytes());
    rec.check("p1-admitted", p1.accept_key(&t, Role::Primary).is_ok(), "two approvals");
    rec.expect_eq("rates-split", rates(&all), vec![72, 72, 0]);
    rec.event("replication", "{p0=72, p1=72, b0=0}");

    // Each primary grants exactly its share per salt.
    let salt = Salt([3; 8]);
    let count = |e: &Enclave| {
        (0..200)
            .filter(|_| e.process(Credential::Plain(b"g"), salt).is_ok())
            .count()
    };
    let (n0, n1) = (count(&p0), count(&p1));
    rec.expect_eq("per-primary-grants", (n0, n1), (72, 72));
    rec.expect_eq("global-grants", n0 + n1, 144);

    // Revoke p0; survivors {p1=72, b0=0}, then b0 approves {p1=144, b0=0}.
    let st = w.revocation.revoke(&p0.signing_public());
    tap.record("replication", &st.to_bytes());
    p1.apply_revocation(&st).unwrap();
    b0.apply_revocation(&st).unwrap();
    w.board.publish(st);
    p0.reset_attempts();
    rec.check("revoked-primary-halts", p0.is_halted(), "board check at reset");
    let raise = ListContent::new(p1.view().unwrap().epoch + 1, vec![ident(&p1, 144), ident(&b0, 0)]);
    let withheld = p1.accept_lists(&[]);
    rec.check(
        "no-increase-without-approval",
        withheld.is_err(),
        format!("{withheld:?}"),
    );
    let from_b0 = b0.approve(&raise).unwrap();
    tap.record("replication", &from_b0.to_bytes());
    rec.expect_eq("p1-raised", p1.accept_lists(&[from_b0]).ok(), Some(144));
    rec.expect_eq("rates-after-revocation", rates(&all), vec![0, 144, 0]);
    rec.event("replication", "{p1=144, b0=0}");

    w.clock.advance(DAY);
    p1.reset_attempts();
    rec.expect_eq("p1-grants-full-rate", count(&p1), 144);
    rec.finish("multi-primary-rates", seed, &[&tap])
}

fn migration(seed: u64) -> ScenarioReport {
    let w = World::new();
    let mut rec = Recorder::new(w.clock.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let site = w.site(Some(enclave(&w, "site", seed)), seed);
    let users: Vec<(String, Vec<u8>, Salt)> = (0..6)
        .map(|i| (format!("legacy{i}"), password(&mut rng), Salt(rng.gen())))
        .collect();
    let mut legacy_hashes = Vec::new();
    for (u, pw, salt) in &users {
        let h = legacy_md5(pw, salt);
        legacy_hashes.push(h);
        site.service().import_legacy(u, *salt, h).unwrap();
    }
    let mut browser = Browser::new(&w, seed);
    let before = browser.login(&w, &site, &users[0].0, &users[0].1);
    rec.expect_eq("legacy-record-needs-migration", before, Ok(Status::Rejected));

    let present = |db: &[u8]| {
        legacy_hashes
            .iter()
            .filter(|h| db.windows(32).any(|win| win == hex::encode(h).as_bytes()))
            .count()
    };
    rec.expect_eq(
        "legacy-hashes-stored",
        present(&site.service().database_bytes()),
        users.len(),
    );

    let report = site.service().migrate_database().unwrap();
    rec.event("operator", format!("migrated {} records", report.migrated.len()));
    rec.expect_eq("migrated", report.migrated.len(), users.len());
    let records = site.service().records();
    rec.check(
        "all-onion",
        records.iter().all(|r| r.scheme == Scheme::Onion),
        format!("{} records", records.len()),
    );
    rec.expect_eq("no-legacy-hash-left", present(&site.service().database_bytes()), 0);

    for (u, pw, _) in &users {
        let st = browser.login(&w, &site, u, pw);
        if rec.expect_eq(&format!("login-{u}"), st, Ok(Status::Accepted)) {
            rec.secret(pw);
        }
    }
    let again = site.service().migrate_database().unwrap();
    rec.expect_eq(
        "idempotent",
        (again.migrated.len(), again.skipped.len()),
        (0, users.len()),
    );
    rec.finish("migration", seed, &[&site.tap])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_is_an_error() {
        assert_eq!(run_scenario("nope", 1).unwrap_err(), UnknownScenario("nope".into()));
    }
}
