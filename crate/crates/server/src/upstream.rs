//! The verification service reached over HTTP.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use safekeeper_core::proxy::{Upstream, UpstreamError};

pub struct HttpUpstream {
    base: String,
    agent: ureq::Agent,
}

impl HttpUpstream {
    /// `base` is the service root; `/ias/verify` and `/ias/sigrl` are
    /// appended.
    pub fn new(base: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn decode(text: Result<String, ureq::Error>) -> Result<Vec<u8>, UpstreamError> {
        let text = text.map_err(|e| UpstreamError::Unreachable(e.to_string()))?;
        B64.decode(text.trim())
            .map_err(|e| UpstreamError::Unreachable(format!("bad base64 body: {e}")))
    }
}

impl Upstream for HttpUpstream {
    fn verify(&self, quote: &[u8]) -> Result<Vec<u8>, UpstreamError> {
        Self::decode(
            self.agent
                .post(&format!("{}/ias/verify", self.base))
                .content_type("text/plain")
                .send(B64.encode(quote))
                .and_then(|mut r| r.body_mut().read_to_string()),
        )
    }

    fn sigrl(&self) -> Result<Vec<u8>, UpstreamError> {
        Self::decode(
            self.agent
                .get(&format!("{}/ias/sigrl", self.base))
                .call()
                .and_then(|mut r| r.body_mut().read_to_string()),
        )
    }
}
