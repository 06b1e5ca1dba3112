mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use common::{app, get, post, Client, DAY};
use safekeeper_core::clock::SimClock;
use safekeeper_server::http::{CredentialBody, Status};
use safekeeper_server::{App, Tap};

#[tokio::test]
async fn login_page_carries_quote_key_and_metatag() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 144, &SimClock::new(1_000_000));
    let r = get(&app.router(), "/login").await;
    assert_eq!(r.status, StatusCode::OK);
    let quote = B64.decode(r.headers["x-safekeeper-quote"].as_bytes()).unwrap();
    assert_eq!(quote, app.enclave().quote().to_bytes());
    let key = B64.decode(r.headers["x-safekeeper-public-key"].as_bytes()).unwrap();
    assert_eq!(key, app.enclave().dh_public());
    let body = String::from_utf8(r.body).unwrap();
    assert!(body.contains(r#"<meta name="safekeeper" content="password">"#));
    assert!(body.contains(r#"name="password""#));
    assert_eq!(get(&app.router(), "/register").await.status, StatusCode::OK);
    assert_eq!(get(&app.router(), "/nope").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn thousand_gets_share_one_quote() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 144, &SimClock::new(1_000_000));
    let router = app.router();
    let first = get(&router, "/login").await.headers["x-safekeeper-quote"].clone();
    for _ in 0..1000 {
        assert_eq!(get(&router, "/login").await.headers["x-safekeeper-quote"], first);
    }
}

#[tokio::test]
async fn enclave_down_serves_unprotected_page() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 144, &SimClock::new(1_000_000));
    let mut client = Client::new(app.router(), 1).await;
    let cred = client.encrypt(b"pw").await;
    app.service().set_enclave(None);
    let r = get(&app.router(), "/login").await;
    assert!(r.headers.get("x-safekeeper-quote").is_none());
    assert!(r.headers.get("x-safekeeper-public-key").is_none());
    let body = serde_json::to_vec(&CredentialBody::new("a", &cred)).unwrap();
    let r = post(&app.router(), "/api/login", "application/json", body).await;
    assert_eq!(r.status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn register_then_login_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 144, &SimClock::new(1_000_000));
    let mut c = Client::new(app.router(), 2).await;
    assert_eq!(c.register("alice", b"correct horse").await.1.status, Status::Accepted);
    assert_eq!(c.login("alice", b"correct horse").await.1.status, Status::Accepted);
    assert_eq!(c.login("alice", b"wrong").await.1.status, Status::Rejected);
    assert_eq!(c.login("mallory", b"correct horse").await.1.status, Status::Rejected);
    let (code, body) = c.register("alice", b"other").await;
    assert_eq!((code, body.status), (StatusCode::CONFLICT, Status::Error));
}

#[tokio::test]
async fn malformed_bodies_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 144, &SimClock::new(1_000_000));
    let bad = br#"{"user_id":"a","client_dh_public_key":"AAAA","nonce":"AAAA","ciphertext":""}"#;
    let r = post(&app.router(), "/api/login", "application/json", bad.to_vec()).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = post(&app.router(), "/proxy/verify", "text/plain", b"%%%".to_vec()).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn throttled_after_144_attempts_until_reset() {
    let dir = tempfile::tempdir().unwrap();
    let clock = SimClock::new(1_000_000);
    let app = app(dir.path(), 144, &clock);
    let mut c = Client::new(app.router(), 3).await;
    c.register("bob", b"pw").await;
    // Registration used the fresh salt once.
    for _ in 0..143 {
        assert_eq!(c.login("bob", b"guess").await.1.status, Status::Rejected);
    }
    assert_eq!(c.login("bob", b"pw").await.1.status, Status::Throttled);
    clock.advance(DAY);
    app.tick();
    assert_eq!(c.login("bob", b"pw").await.1.status, Status::Accepted);
}

#[tokio::test]
async fn tap_never_sees_password() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 144, &SimClock::new(1_000_000));
    let mut c = Client::new(app.router(), 4).await;
    let pw = b"tr0ub4dor&3-unique";
    c.register("carol", pw).await;
    assert_eq!(c.login("carol", pw).await.1.status, Status::Accepted);
    let tap = app.service().tap();
    assert!(tap.len() > 10);
    assert!(tap.find(b"carol").is_some(), "tap must actually record");
    assert_eq!(tap.find(pw), None);
    assert_eq!(tap.find(B64.encode(pw).as_bytes()), None);
    let tag = hex::encode(app.service().record("carol").unwrap().tag);
    assert_eq!(tap.find(tag.as_bytes()).as_deref(), Some("database"));
}

#[tokio::test]
async fn restart_restores_key_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let clock = SimClock::new(1_000_000);
    let first = app(dir.path(), 144, &clock);
    let mut c = Client::new(first.router(), 5).await;
    c.register("dave", b"pw").await;
    first.shutdown().unwrap();
    drop(first);

    let second = app(dir.path(), 144, &clock);
    assert!(!second.fresh_key());
    let mut c = Client::new(second.router(), 6).await;
    assert_eq!(c.login("dave", b"pw").await.1.status, Status::Accepted);
}

#[tokio::test]
async fn corrupt_sealed_state_needs_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let clock = SimClock::new(1_000_000);
    let first = app(dir.path(), 144, &clock);
    first.shutdown().unwrap();
    drop(first);
    let path = dir.path().join("sealed.bin");
    let mut blob = std::fs::read(&path).unwrap();
    let n = blob.len();
    blob[n - 1] ^= 1;
    std::fs::write(&path, blob).unwrap();

    let cfg = common::config(dir.path(), 144);
    assert!(matches!(
        App::build(cfg.clone(), Arc::new(clock.clone()), Tap::off()),
        Err(safekeeper_server::AppError::Unseal(_))
    ));
    let mut cfg = cfg;
    cfg.allow_fresh_key = true;
    assert!(App::build(cfg, Arc::new(clock), Tap::off()).unwrap().fresh_key());
}

#[tokio::test]
async fn crash_without_seal_restarts_penalized() {
    let dir = tempfile::tempdir().unwrap();
    let clock = SimClock::new(1_000_000);
    let first = app(dir.path(), 144, &clock);
    first.shutdown().unwrap();
    drop(first);
    // Boot from the blob, then "crash": the counter moved, the blob did not.
    let second = app(dir.path(), 144, &clock);
    second.enclave().crash();
    drop(second);
    let third = app(dir.path(), 144, &clock);
    assert!(third.enclave().rate_limit_state().is_penalized());
}

#[tokio::test]
async fn ias_and_proxy_endpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 144, &SimClock::new(1_000_000));
    let q = B64.encode(app.enclave().quote().to_bytes()).into_bytes();
    let direct = post(&app.router(), "/ias/verify", "text/plain", q.clone()).await;
    let proxied = post(&app.router(), "/proxy/verify", "text/plain", q).await;
    assert_eq!(direct.status, StatusCode::OK);
    assert_eq!(direct.body, proxied.body);
    assert_eq!(
        get(&app.router(), "/ias/sigrl").await.body,
        get(&app.router(), "/proxy/sigrl").await.body
    );
}

/// A second server whose proxy reaches the first one's verification
/// service over real HTTP.
#[tokio::test(flavor = "multi_thread")]
async fn proxy_over_http_upstream() {
    let dir = tempfile::tempdir().unwrap();
    let clock = SimClock::new(1_000_000);
    let ias_host = app(&dir.path().join("a").tap_mkdir(), 144, &clock);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let router = ias_host.router();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });

    let mut cfg = common::config(&dir.path().join("b").tap_mkdir(), 144);
    cfg.proxy_url = Some(format!("http://{addr}"));
    let site = App::build(cfg, Arc::new(clock), Tap::off()).unwrap();
    // Without a local service the site does not answer /ias/*.
    assert_eq!(
        get(&site.router(), "/ias/verify").await.status,
        StatusCode::METHOD_NOT_ALLOWED
    );
    let q = B64.encode(site.enclave().quote().to_bytes()).into_bytes();
    let r = post(&site.router(), "/proxy/verify", "text/plain", q.clone()).await;
    assert_eq!(r.status, StatusCode::OK);
    let local = B64.encode(
        ias_host
            .ias()
            .verify_quote(&site.enclave().quote().to_bytes())
            .to_bytes(),
    );
    assert_eq!(r.body, local.into_bytes());
    site.tick();
}

trait TapMkdir {
    fn tap_mkdir(self) -> Self;
}

impl TapMkdir for std::path::PathBuf {
    fn tap_mkdir(self) -> Self {
        std::fs::create_dir_all(&self).unwrap();
        self
    }
}
