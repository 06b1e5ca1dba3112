#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ed25519_dalek::VerifyingKey;
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use safekeeper_core::attestation::{AttestationReport, Quote};
use safekeeper_core::client::{establish_channel, verify_and_bind, EncryptedCredential, Whitelist};
use safekeeper_core::clock::SimClock;
use safekeeper_server::http::{CredentialBody, IasKeys, StatusBody};
use safekeeper_server::{App, Config, Tap};
use tower::ServiceExt;

pub const DAY: u64 = 86_400;

pub fn config(dir: &Path, attempts_max: u32) -> Config {
    Config::parse(&format!(
        "attempts_max = {attempts_max}\n\
         db_path = {:?}\n\
         sealed_state_path = {:?}\n\
         sim_seed = 7\n",
        dir.join("db.jsonl"),
        dir.join("sealed.bin"),
    ))
    .unwrap()
}

pub fn app(dir: &Path, attempts_max: u32, clock: &SimClock) -> App {
    App::build(config(dir, attempts_max), Arc::new(clock.clone()), Tap::recording()).unwrap()
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub body: Vec<u8>,
}

pub async fn send(router: &Router, req: Request<Body>) -> Reply {
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(router: &Router, path: &str) -> Reply {
    send(router, Request::get(path).body(Body::empty()).unwrap()).await
}

pub async fn post(router: &Router, path: &str, content_type: &str, body: Vec<u8>) -> Reply {
    send(
        router,
        Request::post(path)
            .header("content-type", content_type)
            .body(Body::from(body))
            .unwrap(),
    )
    .await
}

/// A browser-side client: attests the page's enclave through the proxy
/// and encrypts passwords to it.
pub struct Client {
    pub router: Router,
    pub rng: ChaCha20Rng,
    pub root: VerifyingKey,
    pub whitelist: Whitelist,
}

impl Client {
    pub async fn new(router: Router, seed: u64) -> Self {
        let keys: IasKeys = serde_json::from_slice(&get(&router, "/ias/keys").await.body).unwrap();
        let root: [u8; 32] = hex::decode(keys.root_public_key).unwrap().try_into().unwrap();
        let whitelist = serde_json::from_slice(&get(&router, "/whitelist.json").await.body).unwrap();
        Self {
            router,
            rng: ChaCha20Rng::seed_from_u64(seed),
            root: VerifyingKey::from_bytes(&root).unwrap(),
            whitelist,
        }
    }

    pub async fn encrypt(&mut self, password: &[u8]) -> EncryptedCredential {
        let page = get(&self.router, "/login").await;
        let quote_b64 = page.headers.get("x-safekeeper-quote").expect("quote header");
        let quote = Quote::from_bytes(&B64.decode(quote_b64.as_bytes()).unwrap()).unwrap();
        let key: [u8; 32] = B64
            .decode(page.headers.get("x-safekeeper-public-key").unwrap().as_bytes())
            .unwrap()
            .try_into()
            .unwrap();
        let r = post(
            &self.router,
            "/proxy/verify",
            "text/plain",
            B64.encode(quote.to_bytes()).into_bytes(),
        )
        .await;
        assert_eq!(r.status, StatusCode::OK);
        let report = AttestationReport::from_bytes(&B64.decode(&r.body).unwrap()).unwrap();
        let verified = verify_and_bind(&quote, &report, &self.whitelist, &self.root, &key).unwrap();
        establish_channel(&verified, &mut self.rng).encrypt(password, &mut self.rng)
    }

    pub async fn submit(&mut self, path: &str, user: &str, password: &[u8]) -> (StatusCode, StatusBody) {
        let cred = self.encrypt(password).await;
        let body = serde_json::to_vec(&CredentialBody::new(user, &cred)).unwrap();
        let r = post(&self.router, path, "application/json", body).await;
        (r.status, serde_json::from_slice(&r.body).unwrap())
    }

    pub async fn register(&mut self, user: &str, password: &[u8]) -> (StatusCode, StatusBody) {
        self.submit("/api/register", user, password).await
    }

    pub async fn login(&mut self, user: &str, password: &[u8]) -> (StatusCode, StatusBody) {
        self.submit("/api/login", user, password).await
    }
}
