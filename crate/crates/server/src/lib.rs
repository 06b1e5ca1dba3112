//! Untrusted password service host: record store, login/registration
//! logic over the enclave, HTTP front end and deployment wiring.

pub mod app;
pub mod config;
pub mod http;
pub mod service;
pub mod store;
pub mod tap;
pub mod upstream;

pub use app::{App, AppError};
pub use config::Config;
pub use service::{AuthService, LoginOutcome, MigrationReport, ServiceError};
pub use store::{PasswordRecord, PasswordStore, Scheme};
pub use tap::Tap;
