//! HTTP front end. JSON bodies carry binary fields as standard base64.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use safekeeper_core::attestation::VerificationService;
use safekeeper_core::client::{EncryptedCredential, Whitelist};
use safekeeper_core::crypto::NONCE_LEN;
use safekeeper_core::proxy::{Proxy, ProxyError, Upstream};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::service::{AuthService, LoginOutcome, ServiceError};

pub const MAX_BODY_BYTES: usize = 1 << 20;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<AuthService>,
    pub proxy: Arc<Proxy<Arc<dyn Upstream>>>,
    /// Set when this process also plays the verification service.
    pub ias: Option<Arc<VerificationService>>,
    pub whitelist: Option<Arc<Whitelist>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialBody {
    pub user_id: String,
    pub client_dh_public_key: String,
    pub nonce: String,
    pub ciphertext: String,
}

impl CredentialBody {
    pub fn new(user_id: &str, cred: &EncryptedCredential) -> Self {
        Self {
            user_id: user_id.to_string(),
            client_dh_public_key: B64.encode(cred.client_public),
            nonce: B64.encode(cred.nonce),
            ciphertext: B64.encode(&cred.ciphertext),
        }
    }

    pub fn credential(&self) -> Option<EncryptedCredential> {
        let client_public: [u8; 32] = B64.decode(&self.client_dh_public_key).ok()?.try_into().ok()?;
        let nonce: [u8; NONCE_LEN] = B64.decode(&self.nonce).ok()?.try_into().ok()?;
        let ciphertext = B64.decode(&self.ciphertext).ok()?;
        Some(EncryptedCredential {
            client_public,
            nonce,
            ciphertext,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Accepted,
    Rejected,
    Throttled,
    Error,
}

impl From<LoginOutcome> for Status {
    fn from(o: LoginOutcome) -> Self {
        match o {
            LoginOutcome::Accepted => Status::Accepted,
            LoginOutcome::Rejected => Status::Rejected,
            LoginOutcome::Throttled => Status::Throttled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusBody {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn status(code: StatusCode, status: Status, error: Option<String>) -> Response {
    (code, Json(StatusBody { status, error })).into_response()
}

pub fn router(state: AppState, demo_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/login", get(page))
        .route("/register", get(page))
        .route("/api/register", post(register))
        .route("/api/login", post(login))
        .route("/ias/verify", post(ias_verify))
        .route("/ias/sigrl", get(ias_sigrl))
        .route("/ias/keys", get(ias_keys))
        .route("/proxy/verify", post(proxy_verify))
        .route("/proxy/sigrl", get(proxy_sigrl))
        .route("/whitelist.json", get(whitelist));
    if let Some(dir) = demo_dir {
        app = app.nest_service("/demo", ServeDir::new(dir));
    }
    app.layer(middleware::from_fn_with_state(state.clone(), tap_bodies))
        .with_state(state)
}

/// Copies request and response bodies into the service's tap.
async fn tap_bodies(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let tap = state.service.tap().clone();
    if !tap.is_recording() {
        return next.run(req).await;
    }
    let path = req.uri().path().to_string();
    let (parts, body) = req.into_parts();
    let Ok(bytes) = to_bytes(body, MAX_BODY_BYTES).await else {
        return StatusCode::PAYLOAD_TOO_LARGE.into_response();
    };
    tap.record(&format!("http-request {path}"), &bytes);
    let resp = next.run(Request::from_parts(parts, Body::from(bytes))).await;
    let (parts, body) = resp.into_parts();
    let bytes = to_bytes(body, usize::MAX).await.unwrap_or_default();
    let mut head = Vec::new();
    for (k, v) in &parts.headers {
        head.extend_from_slice(k.as_str().as_bytes());
        head.extend_from_slice(b": ");
        head.extend_from_slice(v.as_bytes());
        head.push(b'\n');
    }
    tap.record(&format!("http-response-headers {path}"), &head);
    tap.record(&format!("http-response {path}"), &bytes);
    Response::from_parts(parts, Body::from(bytes))
}

async fn page(State(state): State<AppState>, req: Request) -> Response {
    let Some(p) = state.service.serve_page(req.uri().path()) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let mut resp = Html(p.body).into_response();
    for (name, value) in p.headers {
        if let Ok(v) = HeaderValue::from_str(&value) {
            resp.headers_mut().insert(name, v);
        }
    }
    resp
}

async fn register(State(state): State<AppState>, Json(body): Json<CredentialBody>) -> Response {
    let Some(cred) = body.credential() else {
        return status(
            StatusCode::BAD_REQUEST,
            Status::Error,
            Some("malformed credential".into()),
        );
    };
    match state.service.register(&body.user_id, &cred) {
        Ok(()) => status(StatusCode::OK, Status::Accepted, None),
        Err(ServiceError::RateLimited) => status(StatusCode::OK, Status::Throttled, None),
        Err(ServiceError::DecryptError) => status(StatusCode::OK, Status::Rejected, None),
        Err(ServiceError::DuplicateUser) => status(StatusCode::CONFLICT, Status::Error, Some("duplicate user".into())),
        Err(ServiceError::EnclaveDown) => status(
            StatusCode::SERVICE_UNAVAILABLE,
            Status::Error,
            Some("enclave down".into()),
        ),
        Err(e) => status(StatusCode::INTERNAL_SERVER_ERROR, Status::Error, Some(e.to_string())),
    }
}

async fn login(State(state): State<AppState>, Json(body): Json<CredentialBody>) -> Response {
    let Some(cred) = body.credential() else {
        return status(
            StatusCode::BAD_REQUEST,
            Status::Error,
            Some("malformed credential".into()),
        );
    };
    if state.service.enclave().is_none() {
        return status(
            StatusCode::SERVICE_UNAVAILABLE,
            Status::Error,
            Some("enclave down".into()),
        );
    }
    status(StatusCode::OK, state.service.login(&body.user_id, &cred).into(), None)
}

fn base64_ok(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "text/plain")], B64.encode(bytes)).into_response()
}

fn decode_body(body: &str) -> Option<Vec<u8>> {
    B64.decode(body.trim()).ok()
}

async fn ias_verify(State(state): State<AppState>, body: String) -> Response {
    let Some(ias) = state.ias else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match decode_body(&body) {
        Some(quote) => base64_ok(ias.verify_quote(&quote).to_bytes()),
        None => StatusCode::BAD_REQUEST.into_response(),
    }
}

async fn ias_sigrl(State(state): State<AppState>) -> Response {
    match state.ias {
        Some(ias) => base64_ok(VerificationService::sigrl(&ias).to_bytes()),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IasKeys {
    /// Report-signing root that clients pin.
    pub root_public_key: String,
    /// Quote and SigRL signing key.
    pub authority_public_key: String,
}

async fn ias_keys(State(state): State<AppState>) -> Response {
    match state.ias {
        Some(ias) => Json(IasKeys {
            root_public_key: hex::encode(ias.root_public_key().as_bytes()),
            authority_public_key: hex::encode(ias.authority_public_key().as_bytes()),
        })
        .into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

fn unavailable(e: ProxyError) -> Response {
    (StatusCode::SERVICE_UNAVAILABLE, e.to_string()).into_response()
}

async fn proxy_verify(State(state): State<AppState>, body: String) -> Response {
    let Some(quote) = decode_body(&body) else {
        return StatusCode::BAD_REQUEST.into_response();
    };
    let proxy = state.proxy.clone();
    match tokio::task::spawn_blocking(move || proxy.forward(&quote)).await {
        Ok(Ok(report)) => base64_ok(report),
        Ok(Err(e)) => unavailable(e),
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

async fn proxy_sigrl(State(state): State<AppState>) -> Response {
    let proxy = state.proxy.clone();
    match tokio::task::spawn_blocking(move || proxy.refresh_sigrl()).await {
        Ok(Ok(sigrl)) => base64_ok(sigrl.to_bytes()),
        Ok(Err(e)) => unavailable(e),
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

/// The configured whitelist, or one naming only the running enclave.
async fn whitelist(State(state): State<AppState>) -> Response {
    if let Some(w) = &state.whitelist {
        return Json(w.as_ref().clone()).into_response();
    }
    match state.service.enclave() {
        Some(e) => Json(Whitelist::new(1, [e.measurement()])).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}
