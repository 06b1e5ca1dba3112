//! Exhaustive exploration of the replication protocol on the real
//! [`Replica`] state machine.
//!
//! The scheduler is the adversary: at each step it picks any enabled
//! action. It may let any holder sign any candidate list, deliver any
//! signed lists it has seen to anyone, publish and deliver revocations in
//! any order, withhold messages forever, and roll any replica back to an
//! earlier state of its own (which the enclave detects and answers with
//! quarantine). Every reachable state up to the depth bound is checked
//! for:
//!
//! * the sum of enforced rates over live replicas (not revoked, not
//!   halted) never exceeds the total;
//! * the key never reaches a replica unless every live holder signed the
//!   list that admitted it.
//!
//! Every transition runs the real replica code once; results are memoized
//! per (replica state, input), and search states are small vectors of ids
//! into interned replica and list tables.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use ed25519_dalek::SigningKey;
use safekeeper_core::attestation::Measurement;
use safekeeper_core::crypto::sha256;
use safekeeper_core::replication::{EnclaveIdentity, KeyHolderList, ListContent, Replica, Role};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelConfig {
    pub replicas: usize,
    pub depth: usize,
    pub total: u32,
    /// Per-member rates candidate lists are built from.
    pub rates: Vec<u32>,
    /// Revocation statements the authority may publish along one path.
    pub max_revocations: usize,
    /// Whether a restored replica notices it is stale. Off only as a
    /// negative control: the search must then find a violation.
    pub rollback_detection: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            replicas: 3,
            depth: 8,
            total: 144,
            rates: vec![0, 72, 144],
            max_revocations: 1,
            rollback_detection: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Action {
    Approve {
        by: usize,
        content: String,
    },
    Transfer {
        from: usize,
        to: usize,
        content: String,
    },
    AcceptLists {
        at: usize,
        content: String,
    },
    Decrease {
        at: usize,
        rate: u32,
    },
    ObserveDecrease {
        at: usize,
        signer: usize,
    },
    /// Publishes the statement on first delivery.
    DeliverRevocation {
        at: usize,
        target: usize,
    },
    /// Restores an earlier state of `at`.
    Rollback {
        at: usize,
        held_key: bool,
    },
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Approve { .. } => "approve",
            Action::Transfer { .. } => "transfer",
            Action::AcceptLists { .. } => "accept-lists",
            Action::Decrease { .. } => "decrease",
            Action::ObserveDecrease { .. } => "observe-decrease",
            Action::DeliverRevocation { .. } => "deliver-revocation",
            Action::Rollback { .. } => "rollback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: String,
    pub detail: String,
    pub trace: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelReport {
    pub config: ModelConfig,
    pub distinct_states: usize,
    pub transitions: u64,
    pub max_depth: usize,
    pub max_live_rate_sum: u32,
    pub max_holders: usize,
    pub replica_states: usize,
    pub signed_lists: usize,
    pub transitions_by_action: BTreeMap<String, u64>,
    pub violations: Vec<Violation>,
}

type Id = u32;

/// Step with interned operands; rendered into [`Action`] for reports.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Step {
    Approve { by: usize, content: Id },
    Transfer { from: usize, to: usize, content: Id },
    AcceptLists { at: usize, content: Id },
    Decrease { at: usize, rate: u32 },
    ObserveDecrease { at: usize, list: Id },
    DeliverRevocation { at: usize, target: usize },
    Rollback { at: usize, held_key: bool },
}

impl Step {
    /// Only these can raise an enforced rate or move the key.
    fn raises(&self) -> bool {
        matches!(self, Step::Transfer { .. } | Step::AcceptLists { .. })
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Node {
    replicas: Vec<Id>,
    /// Earlier states per replica, at most one per key possession:
    /// `[without key, with key]`.
    past: Vec<[Option<Id>; 2]>,
    /// Signed lists the host has seen, sorted.
    pool: Vec<Id>,
    published: u8,
}

struct Info {
    holds_key: bool,
    current: bool,
    live_rate: u32,
    halted: bool,
    quarantined: bool,
}

struct Tables {
    replicas: Vec<Replica>,
    info: Vec<Info>,
    replica_ids: HashMap<[u8; 32], Id>,
    lists: Vec<KeyHolderList>,
    list_content: Vec<Id>,
    list_ids: HashMap<KeyHolderList, Id>,
    contents: Vec<ListContent>,
    content_ids: HashMap<ListContent, Id>,
}

impl Tables {
    fn replica(&mut self, r: Replica) -> Id {
        let d = r.state_digest();
        if let Some(&id) = self.replica_ids.get(&d) {
            return id;
        }
        let id = self.replicas.len() as Id;
        self.info.push(Info {
            holds_key: r.holds_key(),
            current: r.holds_key() && r.check_current().is_ok(),
            live_rate: r.enforced_rate(),
            halted: r.is_halted(),
            quarantined: r.is_quarantined(),
        });
        self.replicas.push(r);
        self.replica_ids.insert(d, id);
        id
    }

    fn content(&mut self, c: ListContent) -> Id {
        if let Some(&id) = self.content_ids.get(&c) {
            return id;
        }
        let id = self.contents.len() as Id;
        self.contents.push(c.clone());
        self.content_ids.insert(c, id);
        id
    }

    fn list(&mut self, l: KeyHolderList) -> Id {
        if let Some(&id) = self.list_ids.get(&l) {
            return id;
        }
        let id = self.lists.len() as Id;
        let c = self.content(l.content.clone());
        self.lists.push(l.clone());
        self.list_content.push(c);
        self.list_ids.insert(l, id);
        id
    }
}

/// Memoized outcomes of running replica code on an input.
#[derive(Default)]
struct Memo {
    approve: HashMap<(Id, Id), Option<(Id, Id)>>,
    accept_lists: HashMap<(Id, Vec<Id>), Option<Id>>,
    transfer: HashMap<(Id, usize, Vec<Id>), Option<Id>>,
    decrease: HashMap<(Id, u32), Option<(Id, Id)>>,
    observe: HashMap<(Id, Id), Option<Id>>,
    revoke: HashMap<(Id, usize), Id>,
    quarantine: HashMap<Id, Id>,
    candidates: HashMap<(Vec<u64>, usize), Vec<Id>>,
}

struct Model {
    config: ModelConfig,
    keys: Vec<[u8; 32]>,
    measurement: Measurement,
    t: Tables,
    memo: Memo,
}

impl Model {
    fn new(config: ModelConfig) -> (Self, Node) {
        assert!(config.replicas <= 8, "published set is a byte");
        let measurement = Measurement::of_code("model-enclave");
        let mut t = Tables {
            replicas: Vec::new(),
            info: Vec::new(),
            replica_ids: HashMap::new(),
            lists: Vec::new(),
            list_content: Vec::new(),
            list_ids: HashMap::new(),
            contents: Vec::new(),
            content_ids: HashMap::new(),
        };
        let mut keys = Vec::new();
        let mut ids = Vec::new();
        for i in 0..config.replicas {
            let sk = SigningKey::from_bytes(&sha256(format!("model-replica-{i}").as_bytes()));
            keys.push(sk.verifying_key().to_bytes());
            let r = if i == 0 {
                Replica::genesis(sk, measurement, [measurement], config.total)
            } else {
                Replica::joining(sk, measurement, [measurement], config.total)
            };
            ids.push(t.replica(r));
        }
        let node = Node {
            past: vec![[None, None]; ids.len()],
            replicas: ids,
            pool: Vec::new(),
            published: 0,
        };
        (
            Self {
                config,
                keys,
                measurement,
                t,
                memo: Memo::default(),
            },
            node,
        )
    }

    fn describe(&self, content: Id) -> String {
        let c = &self.t.contents[content as usize];
        let members: Vec<String> = c
            .members
            .iter()
            .map(|m| {
                let idx = self.keys.iter().position(|k| k == &m.signing_key).unwrap_or(usize::MAX);
                format!("r{idx}={}", m.rate)
            })
            .collect();
        format!("e{}{{{}}}", c.epoch, members.join(","))
    }

    fn render(&self, s: Step) -> Action {
        match s {
            Step::Approve { by, content } => Action::Approve {
                by,
                content: self.describe(content),
            },
            Step::Transfer { from, to, content } => Action::Transfer {
                from,
                to,
                content: self.describe(content),
            },
            Step::AcceptLists { at, content } => Action::AcceptLists {
                at,
                content: self.describe(content),
            },
            Step::Decrease { at, rate } => Action::Decrease { at, rate },
            Step::ObserveDecrease { at, list } => {
                let signer = &self.t.lists[list as usize].signer;
                Action::ObserveDecrease {
                    at,
                    signer: self.keys.iter().position(|k| k == signer).unwrap_or(usize::MAX),
                }
            }
            Step::DeliverRevocation { at, target } => Action::DeliverRevocation { at, target },
            Step::Rollback { at, held_key } => Action::Rollback { at, held_key },
        }
    }

    fn info(&self, id: Id) -> &Info {
        &self.t.info[id as usize]
    }

    fn live(&self, n: &Node, i: usize) -> bool {
        n.published & (1 << i) == 0 && !self.info(n.replicas[i]).halted
    }

    fn live_sum(&self, n: &Node) -> u32 {
        (0..n.replicas.len())
            .filter(|&i| self.live(n, i))
            .map(|i| self.info(n.replicas[i]).live_rate)
            .sum()
    }

    fn fingerprint(&self, n: &Node) -> u128 {
        let mut halves = [0u64; 2];
        for (salt, half) in halves.iter_mut().enumerate() {
            let mut h = DefaultHasher::new();
            salt.hash(&mut h);
            for (i, &r) in n.replicas.iter().enumerate() {
                // A quarantined replica is inert: everything that could
                // raise a rate, sign or send refuses, so only key
                // possession is observable.
                let info = self.info(r);
                if info.quarantined {
                    (u32::MAX - info.holds_key as u32).hash(&mut h);
                } else {
                    r.hash(&mut h);
                }
                // A rollback yields an inert replica, so of the past only
                // the key possession it could restore matters.
                n.past[i].map(|p| p.is_some()).hash(&mut h);
            }
            n.pool.hash(&mut h);
            n.published.hash(&mut h);
            *half = h.finish();
        }
        (u128::from(halves[0]) << 64) | u128::from(halves[1])
    }

    /// Joiners are interchangeable until one of them is first named in a
    /// list, so joiner `j` may only be named once joiner `j - 1` has been.
    fn named(&self, n: &Node) -> usize {
        let mut named = 1;
        while named < n.replicas.len() {
            let k = &self.keys[named];
            let seen = n.pool.iter().any(|&l| self.t.lists[l as usize].content.contains(k))
                || n.replicas
                    .iter()
                    .any(|&r| self.t.replicas[r as usize].view().is_some_and(|v| v.contains(k)));
            if !seen {
                break;
            }
            named += 1;
        }
        named
    }

    /// Rate assignments over `members` drawn from the configured rates
    /// summing to the total. Lists below the total only arise from
    /// unilateral decreases, which have their own action.
    fn assignments(&self, members: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new()];
        for _ in 0..members {
            let mut next = Vec::new();
            for partial in &out {
                for &r in &self.config.rates {
                    let mut v: Vec<u32> = partial.clone();
                    v.push(r);
                    if v.iter().sum::<u32>() <= self.config.total {
                        next.push(v);
                    }
                }
            }
            out = next;
        }
        out.retain(|v| v.iter().sum::<u32>() == self.config.total);
        out
    }

    /// Candidate lists a holder might be asked to sign: any member set (up
    /// to the symmetry rule), any rate assignment, the next epoch of any
    /// holder's view.
    fn candidates(&mut self, n: &Node) -> Vec<Id> {
        let epochs: BTreeSet<u64> = n
            .replicas
            .iter()
            .filter_map(|&r| self.t.replicas[r as usize].view().map(|v| v.epoch + 1))
            .collect();
        let named = self.named(n);
        let key = (epochs.iter().copied().collect::<Vec<_>>(), named);
        if let Some(c) = self.memo.candidates.get(&key) {
            return c.clone();
        }
        let count = n.replicas.len();
        let mut out = Vec::new();
        for &e in &epochs {
            for mask in 1u32..(1 << count) {
                let members: Vec<usize> = (0..count).filter(|i| mask & (1 << i) != 0).collect();
                // Naming a joiner past the first unnamed one is a relabeling.
                if members.iter().any(|&i| i > named) {
                    continue;
                }
                for rates in self.assignments(members.len()) {
                    let c = ListContent::new(
                        e,
                        members
                            .iter()
                            .zip(&rates)
                            .map(|(&i, &r)| EnclaveIdentity::new(self.keys[i], self.measurement, r))
                            .collect(),
                    );
                    out.push(self.t.content(c));
                }
            }
        }
        self.memo.candidates.insert(key, out.clone());
        out
    }

    fn approve(&mut self, r: Id, c: Id) -> Option<(Id, Id)> {
        if let Some(&o) = self.memo.approve.get(&(r, c)) {
            return o;
        }
        let mut rep = self.t.replicas[r as usize].clone();
        let content = self.t.contents[c as usize].clone();
        let o = rep
            .approve(&content)
            .ok()
            .map(|l| (self.t.replica(rep), self.t.list(l)));
        self.memo.approve.insert((r, c), o);
        o
    }

    fn accept_lists(&mut self, r: Id, lists: &[Id]) -> Option<Id> {
        let key = (r, lists.to_vec());
        if let Some(&o) = self.memo.accept_lists.get(&key) {
            return o;
        }
        let mut rep = self.t.replicas[r as usize].clone();
        let ls: Vec<KeyHolderList> = lists.iter().map(|&l| self.t.lists[l as usize].clone()).collect();
        let o = rep.accept_lists(&ls).ok().map(|_| self.t.replica(rep));
        self.memo.accept_lists.insert(key, o);
        o
    }

    fn transfer(&mut self, r: Id, sender: usize, lists: &[Id], role: Role) -> Option<Id> {
        let key = (r, sender, lists.to_vec());
        if let Some(&o) = self.memo.transfer.get(&key) {
            return o;
        }
        let mut rep = self.t.replicas[r as usize].clone();
        let ls: Vec<KeyHolderList> = lists.iter().map(|&l| self.t.lists[l as usize].clone()).collect();
        let o = rep
            .accept_transfer(&self.keys[sender], &ls, role)
            .ok()
            .map(|_| self.t.replica(rep));
        self.memo.transfer.insert(key, o);
        o
    }

    fn decrease(&mut self, r: Id, rate: u32) -> Option<(Id, Id)> {
        if let Some(&o) = self.memo.decrease.get(&(r, rate)) {
            return o;
        }
        let mut rep = self.t.replicas[r as usize].clone();
        let o = rep
            .decrease_own(rate)
            .ok()
            .map(|l| (self.t.replica(rep), self.t.list(l)));
        self.memo.decrease.insert((r, rate), o);
        o
    }

    fn observe(&mut self, r: Id, l: Id) -> Option<Id> {
        if let Some(&o) = self.memo.observe.get(&(r, l)) {
            return o;
        }
        let mut rep = self.t.replicas[r as usize].clone();
        let list = self.t.lists[l as usize].clone();
        let o = rep.observe_decrease(&list).ok().map(|_| self.t.replica(rep));
        self.memo.observe.insert((r, l), o);
        o
    }

    fn revoke(&mut self, r: Id, target: usize) -> Id {
        if let Some(&o) = self.memo.revoke.get(&(r, target)) {
            return o;
        }
        let mut rep = self.t.replicas[r as usize].clone();
        rep.apply_revocation(&self.keys[target]);
        let o = self.t.replica(rep);
        self.memo.revoke.insert((r, target), o);
        o
    }

    fn quarantine(&mut self, r: Id) -> Id {
        if let Some(&o) = self.memo.quarantine.get(&r) {
            return o;
        }
        let mut rep = self.t.replicas[r as usize].clone();
        rep.quarantine();
        let o = self.t.replica(rep);
        self.memo.quarantine.insert(r, o);
        o
    }

    /// Replaces replica `i`, remembering its previous state for rollback.
    fn set(&self, n: &Node, i: usize, r: Id) -> Node {
        let mut m = n.clone();
        let old = n.replicas[i];
        if r != old {
            let slot = self.info(old).holds_key as usize;
            m.past[i][slot].get_or_insert(old);
            m.replicas[i] = r;
        }
        m
    }

    fn with_list(mut n: Node, l: Id) -> Node {
        if let Err(pos) = n.pool.binary_search(&l) {
            n.pool.insert(pos, l);
        }
        n
    }

    /// Successors of `n`, with a description of any propagation problem.
    /// With `raises_only`, only steps that can raise a rate or move the
    /// key are generated.
    fn successors(&mut self, n: &Node, raises_only: bool) -> Vec<(Step, Node, Option<String>)> {
        let mut out = Vec::new();
        let count = n.replicas.len();
        let mut by_content: BTreeMap<Id, Vec<Id>> = BTreeMap::new();
        for &l in &n.pool {
            by_content.entry(self.t.list_content[l as usize]).or_default().push(l);
        }
        let contents = if raises_only { Vec::new() } else { self.candidates(n) };
        let named = self.named(n);

        for i in 0..count {
            let me = n.replicas[i];
            if self.info(me).quarantined {
                continue;
            }
            let current = self.info(me).current;
            if current && !raises_only {
                let (view_epoch, view_members): (u64, Vec<[u8; 32]>) = {
                    let v = self.t.replicas[me as usize].view().expect("holders have a view");
                    (v.epoch, v.members.iter().map(|m| m.signing_key).collect())
                };
                for &c in &contents {
                    // Cheap filters for lists approve() refuses anyway.
                    let content = &self.t.contents[c as usize];
                    if content.epoch <= view_epoch
                        || !content.contains(&self.keys[i])
                        || view_members.iter().any(|k| !content.contains(k))
                    {
                        continue;
                    }
                    if let Some((r, l)) = self.approve(me, c) {
                        out.push((
                            Step::Approve { by: i, content: c },
                            Self::with_list(self.set(n, i, r), l),
                            None,
                        ));
                    }
                }
            }
            for (&c, lists) in &by_content {
                if current {
                    if let Some(r) = self.accept_lists(me, lists) {
                        out.push((Step::AcceptLists { at: i, content: c }, self.set(n, i, r), None));
                    }
                }
                // Key transfer: the sender must hold the key, be current
                // and have adopted exactly this list.
                let sender_view = self.t.replicas[me as usize].view();
                if !current || sender_view != Some(&self.t.contents[c as usize]) {
                    continue;
                }
                for j in 0..count {
                    if j == i {
                        continue;
                    }
                    let Some(member) = self.t.contents[c as usize].member(&self.keys[j]) else {
                        continue;
                    };
                    let role = Role::for_rate(member.rate);
                    let Some(r) = self.transfer(n.replicas[j], i, lists, role) else {
                        continue;
                    };
                    let signers: BTreeSet<[u8; 32]> = lists.iter().map(|&l| self.t.lists[l as usize].signer).collect();
                    let unapproved: Vec<usize> = (0..count)
                        .filter(|&h| {
                            h != j
                                && self.info(n.replicas[h]).holds_key
                                && self.live(n, h)
                                && !signers.contains(&self.keys[h])
                        })
                        .collect();
                    let problem =
                        (!unapproved.is_empty()).then(|| format!("r{j} admitted without approval from {unapproved:?}"));
                    out.push((
                        Step::Transfer {
                            from: i,
                            to: j,
                            content: c,
                        },
                        self.set(n, j, r),
                        problem,
                    ));
                }
            }
            if raises_only {
                continue;
            }
            if current {
                let rate_now = self.info(me).live_rate;
                for k in 0..self.config.rates.len() {
                    let rate = self.config.rates[k];
                    if rate >= rate_now {
                        continue;
                    }
                    if let Some((r, l)) = self.decrease(me, rate) {
                        out.push((
                            Step::Decrease { at: i, rate },
                            Self::with_list(self.set(n, i, r), l),
                            None,
                        ));
                    }
                }
            }
            if self.info(me).holds_key {
                for &l in &n.pool {
                    if let Some(r) = self.observe(me, l) {
                        out.push((Step::ObserveDecrease { at: i, list: l }, self.set(n, i, r), None));
                    }
                }
            }
            // Publishing a revocation only shrinks the live set, which can
            // only hide violations, so it happens at its first delivery
            // instead of being a step of its own.
            let published = n.published.count_ones() as usize;
            for target in 0..count.min(named + 1) {
                let fresh = n.published & (1 << target) == 0;
                if fresh && published >= self.config.max_revocations {
                    continue;
                }
                let r = self.revoke(me, target);
                if r == me && !fresh {
                    continue;
                }
                let mut m = self.set(n, i, r);
                m.published |= 1 << target;
                out.push((Step::DeliverRevocation { at: i, target }, m, None));
            }
            for (slot, past) in n.past[i].iter().enumerate() {
                if let Some(p) = *past {
                    let r = if self.config.rollback_detection {
                        self.quarantine(p)
                    } else {
                        p
                    };
                    out.push((
                        Step::Rollback {
                            at: i,
                            held_key: slot == 1,
                        },
                        self.set(n, i, r),
                        None,
                    ));
                }
            }
        }
        out
    }
}

struct Search {
    model: Model,
    /// Remaining depth each state was last expanded with.
    seen: HashMap<u128, u8>,
    path: Vec<Step>,
    report: ModelReport,
}

impl Search {
    fn trace(&self) -> Vec<Action> {
        self.path.iter().map(|&s| self.model.render(s)).collect()
    }

    fn visit(&mut self, node: &Node, remaining: usize) {
        if remaining == 0 || self.report.violations.len() >= 16 {
            return;
        }
        // The sum only grows through steps that raise a rate, and only
        // transfers can propagate the key, so the last step need not try
        // anything else.
        let successors = self.model.successors(node, remaining == 1);
        for (step, child, problem) in successors {
            debug_assert!(remaining > 1 || step.raises());
            self.report.transitions += 1;
            *self
                .report
                .transitions_by_action
                .entry(self.model.render(step).kind().to_string())
                .or_default() += 1;
            self.path.push(step);
            if let Some(detail) = problem {
                self.report.violations.push(Violation {
                    property: "approved-propagation".into(),
                    detail,
                    trace: self.trace(),
                });
            }
            let sum = self.model.live_sum(&child);
            self.report.max_live_rate_sum = self.report.max_live_rate_sum.max(sum);
            let holders = child.replicas.iter().filter(|&&r| self.model.info(r).holds_key).count();
            self.report.max_holders = self.report.max_holders.max(holders);
            if sum > self.model.config.total {
                self.report.violations.push(Violation {
                    property: "live-rate-sum".into(),
                    detail: format!("sum {sum} > {}", self.model.config.total),
                    trace: self.trace(),
                });
            }
            let fp = self.model.fingerprint(&child);
            let left = remaining - 1;
            let explore = match self.seen.get(&fp) {
                Some(&done) => usize::from(done) < left,
                None => true,
            };
            if explore {
                self.seen.insert(fp, left as u8);
                self.report.max_depth = self.report.max_depth.max(self.path.len());
                self.visit(&child, left);
            }
            self.path.pop();
        }
    }
}

/// Depth-first over all action sequences up to the depth bound. A state
/// reached again is only re-expanded if more depth remains than before,
/// so every sequence of at most `depth` steps is covered.
pub fn check(config: ModelConfig) -> ModelReport {
    assert!(config.depth < usize::from(u8::MAX));
    let (model, root) = Model::new(config.clone());
    let mut search = Search {
        report: ModelReport {
            config,
            distinct_states: 1,
            transitions: 0,
            max_depth: 0,
            max_live_rate_sum: model.live_sum(&root),
            max_holders: 1,
            replica_states: 0,
            signed_lists: 0,
            transitions_by_action: BTreeMap::new(),
            violations: Vec::new(),
        },
        seen: HashMap::new(),
        path: Vec::new(),
        model,
    };
    let depth = search.model.config.depth;
    search.seen.insert(search.model.fingerprint(&root), depth as u8);
    search.visit(&root, depth);
    search.report.distinct_states = search.seen.len();
    search.report.replica_states = search.model.t.replicas.len();
    search.report.signed_lists = search.model.t.lists.len();
    search.report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shallow_search_is_clean_and_reaches_a_transfer() {
        let r = check(ModelConfig {
            depth: 3,
            ..ModelConfig::default()
        });
        assert!(r.violations.is_empty(), "{:?}", r.violations.first());
        assert!(r.transitions_by_action["transfer"] > 0);
        assert_eq!(r.max_live_rate_sum, 144);
    }

    #[test]
    fn undetected_rollback_is_caught() {
        let r = check(ModelConfig {
            replicas: 2,
            depth: 4,
            rollback_detection: false,
            ..ModelConfig::default()
        });
        let v = r
            .violations
            .iter()
            .find(|v| v.property == "live-rate-sum")
            .expect("rollback without detection breaks the bound");
        assert!(v.trace.iter().any(|a| a.kind() == "rollback"));
    }
}
