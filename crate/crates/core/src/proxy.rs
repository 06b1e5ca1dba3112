//! Untrusted verification proxy with a report cache, and the SigRL
//! refresher used by the password service host.
//!
//! Nothing here is trusted by verifiers: reports are passed through as the
//! exact bytes the verification service signed.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use ed25519_dalek::VerifyingKey;
use thiserror::Error;

use crate::attestation::{AttestationReport, Quote, SigRl, VerificationService};
use crate::clock::Clock;
use crate::crypto::sha256;

pub const DEFAULT_CACHE_TTL_SECS: u64 = 10 * 60;
pub const DEFAULT_SIGRL_REFRESH_SECS: u64 = 60 * 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UpstreamError {
    #[error("verification service unreachable: {0}")]
    Unreachable(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProxyError {
    #[error("verification proxy unavailable: {0}")]
    Unavailable(String),
}

/// The verification service as seen over some transport.
pub trait Upstream: Send + Sync {
    /// Serialized signed report for a serialized quote.
    fn verify(&self, quote: &[u8]) -> Result<Vec<u8>, UpstreamError>;
    /// Serialized signed SigRL.
    fn sigrl(&self) -> Result<Vec<u8>, UpstreamError>;
}

impl Upstream for VerificationService {
    fn verify(&self, quote: &[u8]) -> Result<Vec<u8>, UpstreamError> {
        Ok(self.verify_quote(quote).to_bytes())
    }

    fn sigrl(&self) -> Result<Vec<u8>, UpstreamError> {
        Ok(VerificationService::sigrl(self).to_bytes())
    }
}

impl<U: Upstream + ?Sized> Upstream for Arc<U> {
    fn verify(&self, quote: &[u8]) -> Result<Vec<u8>, UpstreamError> {
        (**self).verify(quote)
    }

    fn sigrl(&self) -> Result<Vec<u8>, UpstreamError> {
        (**self).sigrl()
    }
}

/// Upstream wrapper whose reachability can be toggled (simulated outages).
pub struct Switchable<U> {
    inner: U,
    up: AtomicBool,
}

impl<U> Switchable<U> {
    pub fn new(inner: U) -> Self {
        Self {
            inner,
            up: AtomicBool::new(true),
        }
    }

    pub fn inner(&self) -> &U {
        &self.inner
    }

    pub fn set_reachable(&self, up: bool) {
        self.up.store(up, Ordering::SeqCst);
    }
}

impl<U: Upstream> Upstream for Switchable<U> {
    fn verify(&self, quote: &[u8]) -> Result<Vec<u8>, UpstreamError> {
        if !self.up.load(Ordering::SeqCst) {
            return Err(UpstreamError::Unreachable("switched off".into()));
        }
        self.inner.verify(quote)
    }

    fn sigrl(&self) -> Result<Vec<u8>, UpstreamError> {
        if !self.up.load(Ordering::SeqCst) {
            return Err(UpstreamError::Unreachable("switched off".into()));
        }
        self.inner.sigrl()
    }
}

struct CacheEntry {
    platform_id: Vec<u8>,
    report: Vec<u8>,
    stored_at: u64,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ProxyStats {
    pub upstream_hits: u64,
    pub cache_hits: u64,
}

pub struct Proxy<U> {
    upstream: U,
    clock: Arc<dyn Clock>,
    ttl: u64,
    authority: VerifyingKey,
    cache: Mutex<HashMap<[u8; 32], CacheEntry>>,
    latest_sigrl: Mutex<Option<SigRl>>,
    upstream_hits: AtomicU64,
    cache_hits: AtomicU64,
}

impl<U: Upstream> Proxy<U> {
    /// `authority` is the key that signs SigRLs; unsigned lists are ignored.
    pub fn new(upstream: U, clock: Arc<dyn Clock>, ttl: u64, authority: VerifyingKey) -> Self {
        Self {
            upstream,
            clock,
            ttl,
            authority,
            cache: Mutex::new(HashMap::new()),
            latest_sigrl: Mutex::new(None),
            upstream_hits: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn upstream(&self) -> &U {
        &self.upstream
    }

    pub fn stats(&self) -> ProxyStats {
        ProxyStats {
            upstream_hits: self.upstream_hits.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    /// Returns the service's signed report for `quote`, from cache when a
    /// fresh entry exists.
    pub fn forward(&self, quote: &[u8]) -> Result<Vec<u8>, ProxyError> {
        let key = sha256(quote);
        let now = self.clock.now();
        {
            let cache = self.cache.lock().unwrap();
            if let Some(entry) = cache.get(&key) {
                if now.saturating_sub(entry.stored_at) < self.ttl {
                    self.cache_hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(entry.report.clone());
                }
            }
        }
        let report = self
            .upstream
            .verify(quote)
            .map_err(|e| ProxyError::Unavailable(e.to_string()))?;
        self.upstream_hits.fetch_add(1, Ordering::SeqCst);

        let platform_id = Quote::from_bytes(quote).map(|q| q.platform_id).unwrap_or_default();
        let revoked_now = self
            .latest_sigrl
            .lock()
            .unwrap()
            .as_ref()
            .is_some_and(|rl| rl.contains(&platform_id));
        // Reports for platforms already known to be revoked are never kept.
        if !revoked_now {
            self.cache.lock().unwrap().insert(
                key,
                CacheEntry {
                    platform_id,
                    report: report.clone(),
                    stored_at: now,
                },
            );
        }
        Ok(report)
    }

    /// Drops every cached report for a platform in `sigrl`.
    pub fn observe_sigrl(&self, sigrl: &SigRl) -> bool {
        if !sigrl.verify(&self.authority) {
            return false;
        }
        let mut latest = self.latest_sigrl.lock().unwrap();
        if latest.as_ref().is_some_and(|l| l.issued_at > sigrl.issued_at) {
            return false;
        }
        self.cache
            .lock()
            .unwrap()
            .retain(|_, e| !sigrl.contains(&e.platform_id));
        *latest = Some(sigrl.clone());
        true
    }

    /// Fetches the current SigRL from upstream and applies it to the cache.
    pub fn refresh_sigrl(&self) -> Result<SigRl, ProxyError> {
        let bytes = self
            .upstream
            .sigrl()
            .map_err(|e| ProxyError::Unavailable(e.to_string()))?;
        let sigrl = SigRl::from_bytes(&bytes).map_err(|e| ProxyError::Unavailable(format!("bad sigrl: {e}")))?;
        self.observe_sigrl(&sigrl);
        Ok(sigrl)
    }

    /// Parsed convenience wrapper around [`Proxy::forward`].
    pub fn forward_report(&self, quote: &Quote) -> Result<AttestationReport, ProxyError> {
        let bytes = self.forward(&quote.to_bytes())?;
        AttestationReport::from_bytes(&bytes).map_err(|e| ProxyError::Unavailable(format!("bad report: {e}")))
    }
}

/// Keeps the last known SigRL and refreshes it on an interval.
pub struct SigRlMonitor<U> {
    upstream: U,
    authority: VerifyingKey,
    interval: u64,
    current: Option<SigRl>,
    last_attempt: Option<u64>,
    stale: bool,
}

impl<U: Upstream> SigRlMonitor<U> {
    pub fn new(upstream: U, authority: VerifyingKey, interval: u64) -> Self {
        Self {
            upstream,
            authority,
            interval,
            current: None,
            last_attempt: None,
            stale: true,
        }
    }

    pub fn current(&self) -> Option<&SigRl> {
        self.current.as_ref()
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }

    /// Fetches now. On failure, or on a list that fails verification or is
    /// older than the one held, keeps the previous list and flags staleness.
    pub fn fetch(&mut self, now: u64) -> Option<&SigRl> {
        self.last_attempt = Some(now);
        let fetched = self
            .upstream
            .sigrl()
            .ok()
            .and_then(|b| SigRl::from_bytes(&b).ok())
            .filter(|rl| rl.verify(&self.authority))
            .filter(|rl| self.current.as_ref().is_none_or(|cur| rl.issued_at >= cur.issued_at));
        match fetched {
            Some(rl) => {
                self.current = Some(rl);
                self.stale = false;
            }
            None => self.stale = true,
        }
        self.current.as_ref()
    }

    /// Fetches if the refresh interval has elapsed. Returns true if a fetch
    /// was attempted.
    pub fn tick(&mut self, now: u64) -> bool {
        let due = self.last_attempt.is_none_or(|t| now.saturating_sub(t) >= self.interval);
        if due {
            self.fetch(now);
        }
        due
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attestation::{Measurement, QuotingAuthority, Verdict};
    use crate::clock::SimClock;

    struct Fabric {
        clock: SimClock,
        authority: Arc<QuotingAuthority>,
        ias: Arc<Switchable<Arc<VerificationService>>>,
        service: Arc<VerificationService>,
    }

    fn fabric() -> Fabric {
        let clock = SimClock::new(1_000);
        let authority = Arc::new(QuotingAuthority::from_seed(b"seed"));
        let service = Arc::new(VerificationService::new(
            b"seed",
            authority.clone(),
            Arc::new(clock.clone()),
        ));
        Fabric {
            clock,
            authority,
            ias: Arc::new(Switchable::new(service.clone())),
            service,
        }
    }

    fn proxy(f: &Fabric) -> Proxy<Arc<Switchable<Arc<VerificationService>>>> {
        Proxy::new(
            f.ias.clone(),
            Arc::new(f.clock.clone()),
            DEFAULT_CACHE_TTL_SECS,
            f.authority.public_key(),
        )
    }

    #[test]
    fn cache_hit_is_byte_identical() {
        let f = fabric();
        let p = proxy(&f);
        let q = f
            .authority
            .issue_quote(Measurement::of_code("e"), &[1; 32], b"p")
            .to_bytes();
        let first = p.forward(&q).unwrap();
        let second = p.forward(&q).unwrap();
        assert_eq!(first, second);
        assert_eq!(
            p.stats(),
            ProxyStats {
                upstream_hits: 1,
                cache_hits: 1
            }
        );
    }

    #[test]
    fn distinct_quotes_and_expiry_go_upstream() {
        let f = fabric();
        let p = proxy(&f);
        let m = Measurement::of_code("e");
        let a = f.authority.issue_quote(m, &[1; 32], b"p").to_bytes();
        let b = f.authority.issue_quote(m, &[2; 32], b"p").to_bytes();
        p.forward(&a).unwrap();
        p.forward(&b).unwrap();
        assert_eq!(p.stats().upstream_hits, 2);
        f.clock.advance(DEFAULT_CACHE_TTL_SECS);
        p.forward(&a).unwrap();
        assert_eq!(p.stats().upstream_hits, 3);
    }

    #[test]
    fn unreachable_upstream() {
        let f = fabric();
        let p = proxy(&f);
        f.ias.set_reachable(false);
        assert!(matches!(p.forward(b"q"), Err(ProxyError::Unavailable(_))));
    }

    #[test]
    fn sigrl_update_invalidates_cached_ok() {
        let f = fabric();
        let p = proxy(&f);
        let q = f
            .authority
            .issue_quote(Measurement::of_code("e"), &[1; 32], b"victim")
            .to_bytes();
        let before = AttestationReport::from_bytes(&p.forward(&q).unwrap()).unwrap();
        assert_eq!(before.verdict, Verdict::Ok);

        f.service.revoke_platform(b"victim");
        p.refresh_sigrl().unwrap();
        let after = AttestationReport::from_bytes(&p.forward(&q).unwrap()).unwrap();
        assert_eq!(after.verdict, Verdict::PlatformRevoked);
        assert_eq!(p.stats().upstream_hits, 2);
    }

    #[test]
    fn forged_sigrl_is_ignored() {
        let f = fabric();
        let p = proxy(&f);
        let rogue = QuotingAuthority::from_seed(b"rogue");
        let rl = rogue.sign_sigrl(vec![b"p".to_vec()], 5_000);
        assert!(!p.observe_sigrl(&rl));
    }

    #[test]
    fn monitor_keeps_last_known_list() {
        let f = fabric();
        let mut m = SigRlMonitor::new(f.ias.clone(), f.authority.public_key(), 3_600);
        assert!(m.tick(0));
        assert!(!m.is_stale());
        let first = m.current().unwrap().clone();

        f.clock.advance(10);
        f.service.revoke_platform(b"x");
        assert!(!m.tick(100), "interval not elapsed");
        assert!(m.tick(3_600));
        let second = m.current().unwrap().clone();
        assert!(second.contains(b"x"));
        assert!(second.issued_at >= first.issued_at);

        f.ias.set_reachable(false);
        m.fetch(7_200);
        assert!(m.is_stale());
        assert_eq!(m.current().unwrap(), &second);

        f.ias.set_reachable(true);
        m.fetch(7_300);
        let third = m.current().unwrap().clone();
        assert_eq!(third, second);
        assert!(!m.is_stale());
    }
}
