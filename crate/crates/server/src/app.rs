//! Wires a running deployment together from a [`Config`]: simulated
//! platform, enclave, record store, verification proxy and router.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::Router;
use safekeeper_core::attestation::{QuotingAuthority, VerificationService};
use safekeeper_core::client::{Whitelist, WhitelistError};
use safekeeper_core::clock::Clock;
use safekeeper_core::enclave::{Enclave, EnclaveCode, EnclaveConfig, InitError};
use safekeeper_core::platform::{RevocationBoard, SimPlatform, SimPlatformState};
use safekeeper_core::proxy::{Proxy, SigRlMonitor, Upstream, DEFAULT_CACHE_TTL_SECS};
use safekeeper_core::replication::RevocationAuthority;
use thiserror::Error;

use crate::config::Config;
use crate::http::{router, AppState};
use crate::service::AuthService;
use crate::store::{PasswordStore, StoreError};
use crate::tap::Tap;
use crate::upstream::HttpUpstream;

pub const UPSTREAM_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("platform state {path}: {source}")]
    PlatformState { path: PathBuf, source: serde_json::Error },
    #[error("sealed state rejected ({0}); set allow_fresh_key to start with a new key")]
    Unseal(InitError),
    #[error("enclave init: {0}")]
    Init(InitError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("whitelist: {0}")]
    Whitelist(#[from] WhitelistError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes via a sibling temp file so a crash never leaves a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub struct App {
    config: Config,
    state: AppState,
    platform: Arc<SimPlatform>,
    enclave: Arc<Enclave>,
    ias: Arc<VerificationService>,
    monitor: Mutex<SigRlMonitor<Arc<dyn Upstream>>>,
    clock: Arc<dyn Clock>,
    fresh_key: bool,
}

impl App {
    pub fn build(config: Config, clock: Arc<dyn Clock>, tap: Tap) -> Result<Self, AppError> {
        let seed = config.trust_seed.as_bytes();
        let authority = Arc::new(QuotingAuthority::from_seed(seed));
        let ias = Arc::new(VerificationService::new(seed, authority.clone(), clock.clone()));
        let revocation = RevocationAuthority::from_seed(seed);
        let sim_seed = config.sim_seed.unwrap_or_else(rand::random);

        let platform_path = config.platform_state_path();
        let platform = if platform_path.exists() {
            let bytes = std::fs::read(&platform_path).map_err(io_err(&platform_path))?;
            let state: SimPlatformState = serde_json::from_slice(&bytes).map_err(|source| AppError::PlatformState {
                path: platform_path.clone(),
                source,
            })?;
            SimPlatform::from_state(
                &state,
                sim_seed,
                clock.clone(),
                authority.clone(),
                RevocationBoard::default(),
            )
        } else {
            SimPlatform::new(
                config.platform_id.as_bytes(),
                sim_seed,
                clock.clone(),
                authority.clone(),
                RevocationBoard::default(),
            )
        };
        let platform = Arc::new(platform);

        let enclave_config = EnclaveConfig {
            attempts_max: config.attempts_max,
            window: config.window_seconds,
            code: EnclaveCode::default().with_trust(&revocation.public_key(), &ias.root_public_key()),
        };
        let sealed = match std::fs::read(&config.sealed_state_path) {
            Ok(b) => Some(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&config.sealed_state_path)(e)),
        };
        let mut fresh_key = sealed.is_none();
        let enclave = match Enclave::init(platform.clone(), enclave_config.clone(), sealed.as_deref()) {
            Ok(e) => e,
            Err(e) if sealed.is_some() && config.allow_fresh_key => {
                eprintln!("warning: sealed state rejected ({e}); starting with a new key");
                fresh_key = true;
                Enclave::init(platform.clone(), enclave_config, None).map_err(AppError::Init)?
            }
            Err(e) if sealed.is_some() => return Err(AppError::Unseal(e)),
            Err(e) => return Err(AppError::Init(e)),
        };
        let enclave = Arc::new(enclave);

        let store = PasswordStore::open(&config.db_path)?;
        let service = Arc::new(AuthService::new(Some(enclave.clone()), store, sim_seed, tap));

        let upstream: Arc<dyn Upstream> = match &config.proxy_url {
            Some(url) => Arc::new(HttpUpstream::new(url, UPSTREAM_TIMEOUT)),
            None => ias.clone(),
        };
        let proxy = Arc::new(Proxy::new(
            upstream.clone(),
            clock.clone(),
            DEFAULT_CACHE_TTL_SECS,
            authority.public_key(),
        ));
        let monitor = SigRlMonitor::new(upstream, authority.public_key(), config.sigrl_refresh_seconds);

        let whitelist = match &config.whitelist_file {
            Some(path) if path.exists() => Some(Arc::new(Whitelist::load(path)?)),
            Some(path) => {
                let w = Whitelist::new(1, [enclave.measurement()]);
                w.save(path)?;
                Some(Arc::new(w))
            }
            None => None,
        };

        let state = AppState {
            service,
            proxy,
            ias: config.proxy_url.is_none().then(|| ias.clone()),
            whitelist,
        };
        let app = Self {
            config,
            state,
            platform,
            enclave,
            ias,
            monitor: Mutex::new(monitor),
            clock,
            fresh_key,
        };
        // Booting advanced the counter; losing that would make old blobs
        // look current after a crash.
        app.save_platform()?;
        Ok(app)
    }

    pub fn router(&self) -> Router {
        router(self.state.clone(), self.config.demo_dir.clone())
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub fn service(&self) -> &Arc<AuthService> {
        &self.state.service
    }

    pub fn enclave(&self) -> &Arc<Enclave> {
        &self.enclave
    }

    pub fn platform(&self) -> &Arc<SimPlatform> {
        &self.platform
    }

    /// The local verification service (also used when `proxy_url` points
    /// at another process built with the same trust seed).
    pub fn ias(&self) -> &Arc<VerificationService> {
        &self.ias
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// True when this boot generated a new SafeKey.
    pub fn fresh_key(&self) -> bool {
        self.fresh_key
    }

    /// Periodic host duties: window reset and SigRL refresh. Blocking.
    pub fn tick(&self) {
        self.enclave.reset_attempts();
        let mut monitor = self.monitor.lock().unwrap();
        if monitor.tick(self.clock.now()) {
            if let Some(rl) = monitor.current() {
                self.state.proxy.observe_sigrl(rl);
            }
        }
    }

    pub fn save_platform(&self) -> Result<(), AppError> {
        let path = self.config.platform_state_path();
        let bytes = serde_json::to_vec_pretty(&self.platform.state()).expect("state serializes");
        write_atomic(&path, &bytes)
    }

    /// Seals the enclave state to disk. The enclave stops serving.
    pub fn shutdown(&self) -> Result<(), AppError> {
        let blob = self.enclave.shutdown();
        self.state.service.set_enclave(None);
        write_atomic(&self.config.sealed_state_path, &blob)?;
        self.save_platform()
    }
}
