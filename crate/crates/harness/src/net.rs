//! In-process network for replication messages. Delivery is unreliable in
//! a seeded, reproducible way: messages may be dropped, duplicated and
//! reordered.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Faults {
    pub drop: f64,
    pub duplicate: f64,
    pub reorder: bool,
}

impl Faults {
    pub const NONE: Faults = Faults {
        drop: 0.0,
        duplicate: 0.0,
        reorder: false,
    };
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    pub sent: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub delivered: u64,
}

pub struct SimNet<M> {
    rng: ChaCha20Rng,
    faults: Faults,
    queue: Vec<(String, M)>,
    stats: NetStats,
}

impl<M: Clone> SimNet<M> {
    pub fn new(seed: u64, faults: Faults) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            faults,
            queue: Vec::new(),
            stats: NetStats::default(),
        }
    }

    pub fn send(&mut self, to: &str, msg: M) {
        self.stats.sent += 1;
        if self.rng.gen_bool(self.faults.drop) {
            self.stats.dropped += 1;
            return;
        }
        if self.rng.gen_bool(self.faults.duplicate) {
            self.stats.duplicated += 1;
            self.queue.push((to.to_string(), msg.clone()));
        }
        self.queue.push((to.to_string(), msg));
    }

    /// Everything in flight, in delivery order.
    pub fn drain(&mut self) -> Vec<(String, M)> {
        let mut out = std::mem::take(&mut self.queue);
        if self.faults.reorder {
            out.shuffle(&mut self.rng);
        }
        self.stats.delivered += out.len() as u64;
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn stats(&self) -> &NetStats {
        &self.stats
    }
}
