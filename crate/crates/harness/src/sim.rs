//! Simulated deployment: trust anchors, platforms, enclaves, a web site
//! driven in-process through its router, and a browser-side client.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ed25519_dalek::VerifyingKey;
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use safekeeper_core::attestation::{AttestationReport, Quote, QuotingAuthority, VerificationService};
use safekeeper_core::client::{establish_channel, verify_and_bind, VerifiedEnclave, Whitelist};
use safekeeper_core::clock::{Clock, SimClock};
use safekeeper_core::enclave::{Enclave, EnclaveCode, EnclaveConfig};
use safekeeper_core::platform::{RevocationBoard, SimPlatform};
use safekeeper_core::proxy::{Proxy, Switchable, Upstream, DEFAULT_CACHE_TTL_SECS};
use safekeeper_core::replication::RevocationAuthority;
use safekeeper_server::http::{router, AppState, CredentialBody, Status, StatusBody};
use safekeeper_server::service::{PROTECTED_FIELDS, PUBLIC_KEY_HEADER, QUOTE_HEADER};
use safekeeper_server::{AuthService, PasswordStore, Tap};
use serde::Serialize;
use serde_json::{Map, Value};
use tower::ServiceExt;

use crate::report::{Check, ScenarioReport, TapSummary, TraceEvent};

pub const START: u64 = 1_000_000;
pub const DAY: u64 = 86_400;

/// Collects the trace, checks, metrics and the secrets the tap must not
/// contain.
pub struct Recorder {
    clock: SimClock,
    trace: Vec<TraceEvent>,
    checks: Vec<Check>,
    metrics: Map<String, Value>,
    secrets: Vec<Vec<u8>>,
}

impl Recorder {
    pub fn new(clock: SimClock) -> Self {
        Self {
            clock,
            trace: Vec::new(),
            checks: Vec::new(),
            metrics: Map::new(),
            secrets: Vec::new(),
        }
    }

    pub fn event(&mut self, actor: &str, event: impl Into<String>) {
        self.trace.push(TraceEvent {
            step: self.trace.len() as u32,
            t: self.clock.now(),
            actor: actor.to_string(),
            event: event.into(),
        });
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) -> bool {
        let detail = detail.into();
        self.event(
            "harness",
            format!("check {name}: {}", if passed { "ok" } else { "FAILED" }),
        );
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
        passed
    }

    pub fn expect_eq<T: std::fmt::Debug + PartialEq>(&mut self, name: &str, got: T, want: T) -> bool {
        let passed = got == want;
        self.check(name, passed, format!("got {got:?}, want {want:?}"))
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics
            .insert(key.to_string(), serde_json::to_value(value).expect("metric serializes"));
    }

    /// A password that was accepted at login and must never appear on a
    /// host-visible channel.
    pub fn secret(&mut self, password: &[u8]) {
        if !self.secrets.iter().any(|s| s == password) {
            self.secrets.push(password.to_vec());
        }
    }

    pub fn finish(mut self, scenario: &str, seed: u64, taps: &[&Tap]) -> ScenarioReport {
        let mut leaks = Vec::new();
        let (mut events, mut bytes) = (0, 0);
        for tap in taps {
            let all = tap.events();
            events += all.len();
            bytes += all.iter().map(|e| e.bytes.len()).sum::<usize>();
            for s in &self.secrets {
                for needle in [s.clone(), B64.encode(s).into_bytes(), hex::encode(s).into_bytes()] {
                    if let Some(ch) = tap.find(&needle) {
                        if !leaks.contains(&ch) {
                            leaks.push(ch);
                        }
                    }
                }
            }
        }
        let tap = TapSummary {
            events,
            bytes,
            secrets_checked: self.secrets.len(),
            leaks,
        };
        self.check(
            "confidentiality-tap",
            tap.leaks.is_empty(),
            format!("{} secrets vs {} host-visible events", tap.secrets_checked, tap.events),
        );
        ScenarioReport {
            scenario: scenario.to_string(),
            seed,
            passed: self.checks.iter().all(|c| c.passed),
            checks: self.checks,
            metrics: Value::Object(self.metrics),
            tap,
            trace: self.trace,
        }
    }
}

/// Everything a deployment trusts, plus the virtual clock.
pub struct World {
    pub clock: SimClock,
    pub authority: Arc<QuotingAuthority>,
    pub ias: Arc<VerificationService>,
    /// The verification service as reached over the network.
    pub upstream: Arc<Switchable<Arc<VerificationService>>>,
    pub revocation: RevocationAuthority,
    pub board: RevocationBoard,
    rt: tokio::runtime::Runtime,
}

impl World {
    pub fn new() -> Self {
        let clock = SimClock::new(START);
        let authority = Arc::new(QuotingAuthority::from_seed(b"harness"));
        let ias = Arc::new(VerificationService::new(
            b"harness",
            authority.clone(),
            Arc::new(clock.clone()),
        ));
        Self {
            upstream: Arc::new(Switchable::new(ias.clone())),
            clock,
            authority,
            ias,
            revocation: RevocationAuthority::from_seed(b"harness"),
            board: RevocationBoard::default(),
            rt: tokio::runtime::Builder::new_current_thread().build().expect("runtime"),
        }
    }

    pub fn code(&self) -> EnclaveCode {
        EnclaveCode::default().with_trust(&self.revocation.public_key(), &self.ias.root_public_key())
    }

    pub fn config(&self, attempts_max: u32) -> EnclaveConfig {
        EnclaveConfig {
            attempts_max,
            window: DAY,
            code: self.code(),
        }
    }

    pub fn platform(&self, id: &str, seed: u64) -> Arc<SimPlatform> {
        Arc::new(SimPlatform::new(
            id.as_bytes(),
            seed,
            Arc::new(self.clock.clone()),
            self.authority.clone(),
            self.board.clone(),
        ))
    }

    /// The measurement whitelist clients ship with.
    pub fn whitelist(&self) -> Whitelist {
        Whitelist::new(1, [self.code().measurement()])
    }

    /// Mutual attestation and signing-key exchange between two enclaves.
    pub fn connect(&self, a: &Enclave, b: &Enclave) -> Result<(), String> {
        let ra = self.ias.verify_quote(&a.quote().to_bytes());
        let rb = self.ias.verify_quote(&b.quote().to_bytes());
        let from_a = a
            .attest_peer(b.quote(), &rb, &b.dh_public())
            .map_err(|e| e.to_string())?;
        let from_b = b
            .attest_peer(a.quote(), &ra, &a.dh_public())
            .map_err(|e| e.to_string())?;
        b.receive_peer_hello(&a.dh_public(), &from_a)
            .map_err(|e| e.to_string())?;
        a.receive_peer_hello(&b.dh_public(), &from_b).map_err(|e| e.to_string())
    }

    /// A web site in front of `enclave`, with an in-memory record store.
    pub fn site(&self, enclave: Option<Arc<Enclave>>, seed: u64) -> Site {
        self.site_with_upstream(enclave, seed, self.upstream.clone())
    }

    /// A site whose proxy reaches the verification service through
    /// `upstream`, e.g. one the host tampers with.
    pub fn site_with_upstream(&self, enclave: Option<Arc<Enclave>>, seed: u64, upstream: Arc<dyn Upstream>) -> Site {
        let tap = Tap::recording();
        let service = Arc::new(AuthService::new(enclave, PasswordStore::in_memory(), seed, tap.clone()));
        let proxy = Arc::new(Proxy::new(
            upstream,
            Arc::new(self.clock.clone()),
            DEFAULT_CACHE_TTL_SECS,
            self.authority.public_key(),
        ));
        let state = AppState {
            service: service.clone(),
            proxy,
            ias: Some(self.ias.clone()),
            whitelist: None,
        };
        Site {
            router: router(state.clone(), None),
            state,
            tap,
        }
    }

    pub fn send(&self, router: &Router, req: Request<Body>) -> Reply {
        self.rt.block_on(async {
            let resp = router.clone().oneshot(req).await.expect("router is infallible");
            let status = resp.status();
            let headers = resp.headers().clone();
            let body = resp
                .into_body()
                .collect()
                .await
                .map(|b| b.to_bytes().to_vec())
                .unwrap_or_default();
            Reply { status, headers, body }
        })
    }
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Site {
    pub router: Router,
    pub state: AppState,
    pub tap: Tap,
}

impl Site {
    pub fn service(&self) -> &Arc<AuthService> {
        &self.state.service
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

/// What the browser extracted from a page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub quote: Option<Vec<u8>>,
    pub enclave_key: Option<Vec<u8>>,
    pub protected_fields: Vec<String>,
}

impl Page {
    pub fn parse(reply: &Reply) -> Self {
        let header = |name: &str| reply.headers.get(name).and_then(|v| B64.decode(v.as_bytes()).ok());
        let html = String::from_utf8_lossy(&reply.body);
        let marker = r#"<meta name="safekeeper" content=""#;
        let protected_fields = html
            .find(marker)
            .and_then(|i| {
                let rest = &html[i + marker.len()..];
                rest.find('"').map(|j| rest[..j].to_string())
            })
            .map(|s| s.split(',').map(|f| f.trim().to_string()).collect())
            .unwrap_or_default();
        Self {
            quote: header(QUOTE_HEADER),
            enclave_key: header(PUBLIC_KEY_HEADER),
            protected_fields,
        }
    }
}

/// The client's verdict on a page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Indicator {
    Protected(VerifiedEnclave),
    Unprotected(String),
}

/// Browser plus extension: pins the verification root and ships a
/// whitelist.
pub struct Browser {
    pub root: VerifyingKey,
    pub whitelist: Whitelist,
    pub rng: ChaCha20Rng,
}

impl Browser {
    pub fn new(world: &World, seed: u64) -> Self {
        Self {
            root: world.ias.root_public_key(),
            whitelist: world.whitelist(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn load(&self, world: &World, site: &Site, path: &str) -> Page {
        Page::parse(&world.send(&site.router, Request::get(path).body(Body::empty()).unwrap()))
    }

    /// Verifies the page's quote through the site's proxy.
    pub fn assess(&self, world: &World, site: &Site, page: &Page) -> Indicator {
        let (Some(quote_bytes), Some(key)) = (&page.quote, &page.enclave_key) else {
            return Indicator::Unprotected("no attestation headers".into());
        };
        if page.protected_fields.is_empty() {
            return Indicator::Unprotected("no protected fields".into());
        }
        let Ok(quote) = Quote::from_bytes(quote_bytes) else {
            return Indicator::Unprotected("malformed quote".into());
        };
        let Ok(key): Result<[u8; 32], _> = key.as_slice().try_into() else {
            return Indicator::Unprotected("malformed key".into());
        };
        let reply = world.send(
            &site.router,
            Request::post("/proxy/verify")
                .header("content-type", "text/plain")
                .body(Body::from(B64.encode(quote_bytes)))
                .unwrap(),
        );
        if reply.status != StatusCode::OK {
            return Indicator::Unprotected(format!("proxy returned {}", reply.status));
        }
        let report = B64
            .decode(&reply.body)
            .ok()
            .and_then(|b| AttestationReport::from_bytes(&b).ok());
        let Some(report) = report else {
            return Indicator::Unprotected("malformed report".into());
        };
        match verify_and_bind(&quote, &report, &self.whitelist, &self.root, &key) {
            Ok(v) => Indicator::Protected(v),
            Err(e) => Indicator::Unprotected(e.to_string()),
        }
    }

    /// Encrypts `password` to `enclave` and posts it with `user`.
    pub fn submit(
        &mut self,
        world: &World,
        site: &Site,
        path: &str,
        enclave: &VerifiedEnclave,
        user: &str,
        password: &[u8],
    ) -> Status {
        let cred = establish_channel(enclave, &mut self.rng).encrypt(password, &mut self.rng);
        let body = serde_json::to_vec(&CredentialBody::new(user, &cred)).unwrap();
        let reply = world.send(
            &site.router,
            Request::post(path)
                .header("content-type", "application/json")
                .body(Body::from(body))
                .unwrap(),
        );
        serde_json::from_slice::<StatusBody>(&reply.body)
            .map(|b| b.status)
            .unwrap_or(Status::Error)
    }

    /// Full flow: load the page, attest, and submit only if protected.
    pub fn act(
        &mut self,
        world: &World,
        site: &Site,
        page_path: &str,
        user: &str,
        password: &[u8],
    ) -> Result<Status, String> {
        let page = self.load(world, site, page_path);
        if !PROTECTED_FIELDS
            .iter()
            .all(|f| page.protected_fields.iter().any(|p| p == f))
        {
            return Err("page does not protect the password field".into());
        }
        let api = match page_path {
            "/register" => "/api/register",
            _ => "/api/login",
        };
        match self.assess(world, site, &page) {
            Indicator::Protected(v) => Ok(self.submit(world, site, api, &v, user, password)),
            Indicator::Unprotected(why) => Err(why),
        }
    }

    pub fn register(&mut self, world: &World, site: &Site, user: &str, pw: &[u8]) -> Result<Status, String> {
        self.act(world, site, "/register", user, pw)
    }

    pub fn login(&mut self, world: &World, site: &Site, user: &str, pw: &[u8]) -> Result<Status, String> {
        self.act(world, site, "/login", user, pw)
    }
}
