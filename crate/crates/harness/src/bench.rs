//! Throughput and memory measurements. Throughput is wall-clock and
//! machine-bound; the memory figure is exact heap accounting and only
//! available when the binary installs [`CountingAlloc`].

use std::alloc::{GlobalAlloc, Layout, System};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use safekeeper_core::enclave::{Credential, Enclave};
use safekeeper_core::Salt;
use safekeeper_server::http::Status;
use serde::Serialize;

use crate::sim::{Browser, Indicator, World};

/// System allocator that tracks live heap bytes. One relaxed atomic per
/// allocation, which is noise next to a CMAC.
pub struct CountingAlloc;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static INSTALLED: AtomicBool = AtomicBool::new(false);

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        INSTALLED.store(true, Ordering::Relaxed);
        let p = System.alloc(layout);
        if !p.is_null() {
            LIVE.fetch_add(layout.size(), Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
            LIVE.fetch_add(new_size, Ordering::Relaxed);
        }
        p
    }
}

/// Live heap bytes, or `None` if [`CountingAlloc`] is not the global
/// allocator.
pub fn live_heap() -> Option<usize> {
    drop(std::hint::black_box(Box::new(0u64)));
    INSTALLED.load(Ordering::Relaxed).then(|| LIVE.load(Ordering::Relaxed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    EnclaveRaw,
    ServerPath,
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "enclave-raw" => Ok(Target::EnclaveRaw),
            "server-path" => Ok(Target::ServerPath),
            _ => Err(format!(
                "unknown bench target {s:?}; expected enclave-raw or server-path"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Throughput {
    pub target: Target,
    pub operations: u64,
    pub seconds: f64,
    pub per_second: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemoryReport {
    pub salts: usize,
    /// Live heap with a fresh enclave and no salts seen.
    pub baseline_bytes: usize,
    pub loaded_bytes: usize,
    pub bytes_per_salt: f64,
}

/// Enough headroom that no salt runs out during a run.
const BENCH_RATE: u32 = u32::MAX;

fn bench_enclave(w: &World) -> Enclave {
    Enclave::init(w.platform("bench", 1), w.config(BENCH_RATE), None).expect("fresh enclave")
}

pub fn throughput(target: Target, duration: Duration) -> Throughput {
    let (operations, seconds) = match target {
        Target::EnclaveRaw => enclave_raw(duration),
        Target::ServerPath => server_path(duration),
    };
    Throughput {
        target,
        operations,
        seconds,
        per_second: operations as f64 / seconds,
    }
}

/// Plaintext `process()` calls over 4096 rotating salts.
fn enclave_raw(duration: Duration) -> (u64, f64) {
    let w = World::new();
    let e = bench_enclave(&w);
    for i in 0..4096u64 {
        e.process(Credential::Plain(b"warm"), Salt(i.to_be_bytes())).unwrap();
    }
    let start = Instant::now();
    let mut n = 0u64;
    while start.elapsed() < duration {
        for _ in 0..256 {
            let salt = Salt((n % 4096).to_be_bytes());
            std::hint::black_box(e.process(Credential::Plain(b"correct horse"), salt).unwrap());
            n += 1;
        }
    }
    (n, start.elapsed().as_secs_f64())
}

/// Encrypted logins through the HTTP router: JSON decode, channel
/// decryption, CMAC, store lookup and response encoding.
fn server_path(duration: Duration) -> (u64, f64) {
    let w = World::new();
    let site = w.site(Some(Arc::new(bench_enclave(&w))), 1);
    let mut browser = Browser::new(&w, 1);
    assert_eq!(
        browser.register(&w, &site, "bench", b"correct horse"),
        Ok(Status::Accepted)
    );
    let page = browser.load(&w, &site, "/login");
    let Indicator::Protected(v) = browser.assess(&w, &site, &page) else {
        panic!("bench site failed attestation");
    };
    let start = Instant::now();
    let mut n = 0u64;
    while start.elapsed() < duration {
        let st = browser.submit(&w, &site, "/api/login", &v, "bench", b"correct horse");
        assert_eq!(st, Status::Accepted);
        n += 1;
    }
    (n, start.elapsed().as_secs_f64())
}

/// Heap growth of the rate-limit state after `salts` distinct salts.
pub fn memory(salts: usize) -> Option<MemoryReport> {
    let w = World::new();
    let e = bench_enclave(&w);
    e.process(Credential::Plain(b"warm"), Salt([0xff; 8])).unwrap();
    let baseline_bytes = live_heap()?;
    for i in 0..salts as u64 {
        e.process(Credential::Plain(b"x"), Salt(i.to_be_bytes())).unwrap();
    }
    let loaded_bytes = live_heap()?;
    drop(e);
    Some(MemoryReport {
        salts,
        baseline_bytes,
        loaded_bytes,
        bytes_per_salt: loaded_bytes.saturating_sub(baseline_bytes) as f64 / salts.max(1) as f64,
    })
}
