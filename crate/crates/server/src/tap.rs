//! Recorder for everything the untrusted host can observe: HTTP bodies,
//! database writes, log lines. Tests scan it for plaintext passwords.

use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapEvent {
    pub channel: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct Tap {
    events: Arc<Mutex<Vec<TapEvent>>>,
    enabled: bool,
}

impl Tap {
    pub fn recording() -> Self {
        Self {
            events: Arc::default(),
            enabled: true,
        }
    }

    /// A tap that drops everything (production).
    pub fn off() -> Self {
        Self::default()
    }

    pub fn is_recording(&self) -> bool {
        self.enabled
    }

    pub fn record(&self, channel: &str, bytes: &[u8]) {
        if self.enabled {
            self.events.lock().unwrap().push(TapEvent {
                channel: channel.to_string(),
                bytes: bytes.to_vec(),
            });
        }
    }

    pub fn events(&self) -> Vec<TapEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel of the first event containing `needle`, if any.
    pub fn find(&self, needle: &[u8]) -> Option<String> {
        if needle.is_empty() {
            return None;
        }
        self.events
            .lock()
            .unwrap()
            .iter()
            .find(|e| e.bytes.windows(needle.len()).any(|w| w == needle))
            .map(|e| e.channel.clone())
    }
}
