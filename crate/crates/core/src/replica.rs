//! One server's replica: durable event log, clock, version vector, gap
//! buffer, stub overlay and per-peer sync bookkeeping.
//!
//! All mutation goes through `&mut self`, so a caller that shares a replica
//! behind a lock gets batch-level atomicity for free. Materialized state is
//! computed lazily and cached until the next change.

use std::collections::BTreeMap;
use std::num::NonZeroU64;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::domain::{partition_cases, ActiveThread, CaseLists, CasesError, Thread, ThreadStatus};
use crate::event::{Event, EventId, EventKind, EventPayload, MalformedEvent, VersionVector};
use crate::hlc::{HlcTimestamp, HybridClock};
use crate::ids::{DoctorId, ServerId, ThreadId};
use crate::log::{LogStore, MemoryLog, StorageError};
use crate::state::{materialize, State};
use crate::stub::StubNotice;
use crate::validate::{validate_payload, Violation};

pub const DEFAULT_GAP_LIMIT: usize = 10_000;

#[derive(Debug, Clone)]
pub struct ReplicaConfig {
    pub server_id: ServerId,
    /// Most out-of-order events held per origin while waiting for a gap to fill.
    pub gap_limit: usize,
}

impl ReplicaConfig {
    pub fn new(server_id: impl Into<ServerId>) -> Self {
        Self {
            server_id: server_id.into(),
            gap_limit: DEFAULT_GAP_LIMIT,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OpenError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("durable log for origin {origin} jumps from seq {expected} to {found}")]
    Gap {
        origin: ServerId,
        expected: u64,
        found: u64,
    },
    #[error(transparent)]
    Malformed(#[from] MalformedEvent),
}

#[derive(Debug, thiserror::Error)]
pub enum CommitError {
    #[error("{kind:?} rejected: {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid {
        kind: EventKind,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Malformed(#[from] MalformedEvent),
    #[error("commit aborted: {0}")]
    Storage(#[from] StorageError),
}

#[derive(Debug, thiserror::Error)]
pub enum ApplyError {
    #[error(transparent)]
    Malformed(#[from] MalformedEvent),
    #[error("gap buffer for origin {origin} would hold {buffered} events (limit {limit})")]
    GapOverflow {
        origin: ServerId,
        buffered: usize,
        limit: usize,
    },
    #[error("apply aborted: {0}")]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// A full thread record disagreed with the stub notice shown before it.
    StubMismatch { thread: ThreadId, field: String },
    /// A peer offered an event whose id we already hold with other content.
    ConflictingDuplicate { event: EventId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerStatus {
    pub peer: ServerId,
    pub last_success_ms: Option<u64>,
    pub stale: bool,
    pub consecutive_failures: u32,
    /// Earliest virtual or wall time at which the next attempt is due.
    pub next_attempt_ms: u64,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StalenessTransition {
    pub peer: ServerId,
    pub stale: bool,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncStatus {
    pub server_id: ServerId,
    /// True when every configured peer is stale: nothing has reached this
    /// server within the threshold by any route.
    pub stale: bool,
    pub peers: Vec<PeerStatus>,
}

pub struct Replica {
    config: ReplicaConfig,
    clock: HybridClock,
    store: Box<dyn LogStore>,
    log: BTreeMap<ServerId, Vec<Event>>,
    vv: VersionVector,
    gap: BTreeMap<ServerId, BTreeMap<u64, Event>>,
    stubs: BTreeMap<ThreadId, StubNotice>,
    peers: BTreeMap<ServerId, PeerStatus>,
    started_ms: u64,
    minted: u64,
    diagnostics: Vec<Diagnostic>,
    cache: OnceLock<Arc<State>>,
}

impl std::fmt::Debug for Replica {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Replica")
            .field("server_id", &self.config.server_id)
            .field("digest", &self.vv)
            .finish_non_exhaustive()
    }
}

impl Replica {
    /// Rebuilds a replica from its durable log. `now_ms` is the staleness
    /// baseline for peers that have never synced.
    pub fn open(
        config: ReplicaConfig,
        store: Box<dyn LogStore>,
        now_ms: u64,
    ) -> Result<Self, OpenError> {
        let mut by_origin: BTreeMap<ServerId, Vec<Event>> = BTreeMap::new();
        for e in store.load()? {
            e.check_well_formed()?;
            by_origin.entry(e.origin.clone()).or_default().push(e);
        }
        let mut clock = HybridClock::new(config.server_id.clone());
        let mut vv = VersionVector::new();
        for (origin, events) in by_origin.iter_mut() {
            events.sort_by_key(|e| e.seq);
            for (i, e) in events.iter().enumerate() {
                let expected = i as u64 + 1;
                if e.seq != expected {
                    return Err(OpenError::Gap {
                        origin: origin.clone(),
                        expected,
                        found: e.seq,
                    });
                }
                clock.observe(&e.at);
            }
            vv.advance(origin, events.len() as u64);
        }
        Ok(Self {
            config,
            clock,
            store,
            log: by_origin,
            vv,
            gap: BTreeMap::new(),
            stubs: BTreeMap::new(),
            peers: BTreeMap::new(),
            started_ms: now_ms,
            minted: 0,
            diagnostics: Vec::new(),
            cache: OnceLock::new(),
        })
    }

    pub fn in_memory(server_id: impl Into<ServerId>, now_ms: u64) -> Self {
        Self::open(
            ReplicaConfig::new(server_id),
            Box::new(MemoryLog::new()),
            now_ms,
        )
        .expect("an empty memory log always opens")
    }

    pub fn server_id(&self) -> &ServerId {
        &self.config.server_id
    }

    pub fn clock(&self) -> &HybridClock {
        &self.clock
    }

    pub fn digest(&self) -> VersionVector {
        self.vv.clone()
    }

    pub fn state(&self) -> Arc<State> {
        self.cache
            .get_or_init(|| Arc::new(materialize(self.events())))
            .clone()
    }

    /// All applied events ordered by `(origin, seq)`.
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.log.values().flatten()
    }

    pub fn event_count(&self) -> usize {
        self.log.values().map(Vec::len).sum()
    }

    pub fn get_event(&self, id: &EventId) -> Option<&Event> {
        let idx = usize::try_from(id.seq.checked_sub(1)?).ok()?;
        self.log.get(&id.origin)?.get(idx)
    }

    pub fn gap_len(&self, origin: &ServerId) -> usize {
        self.gap.get(origin).map_or(0, BTreeMap::len)
    }

    /// Events waiting in the gap buffer across all origins.
    pub fn gap_total(&self) -> usize {
        self.gap.values().map(BTreeMap::len).sum()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    /// A fresh id that no other server can mint: it embeds this server's id
    /// and the sequence number the next commit will take.
    pub fn mint_id(&mut self, prefix: &str) -> String {
        let next = self.vv.get(&self.config.server_id) + 1;
        self.minted += 1;
        format!("{prefix}-{}-{next}-{}", self.config.server_id, self.minted)
    }

    pub fn commit(&mut self, payload: EventPayload, wall_ms: u64) -> Result<Event, CommitError> {
        self.commit_with(wall_ms, |_| payload)
    }

    /// Commits a payload built from the stamp the event will carry, for
    /// records that embed their own timestamp. A rejected or failed commit
    /// consumes neither a sequence number nor a stamp.
    pub fn commit_with(
        &mut self,
        wall_ms: u64,
        build: impl FnOnce(&HlcTimestamp) -> EventPayload,
    ) -> Result<Event, CommitError> {
        let own = self.config.server_id.clone();
        let saved_clock = self.clock.clone();
        let at = self.clock.now(wall_ms);
        let payload = build(&at);
        let event = Event {
            origin: own.clone(),
            seq: self.vv.get(&own) + 1,
            at,
            payload,
        };
        if let Err(e) = self.check_commit(&event) {
            self.clock = saved_clock;
            return Err(e);
        }
        self.log.entry(own.clone()).or_default().push(event.clone());
        self.vv.advance(&own, event.seq);
        self.minted = 0;
        self.cache = OnceLock::new();
        Ok(event)
    }

    fn check_commit(&mut self, event: &Event) -> Result<(), CommitError> {
        let violations = validate_payload(&self.state(), &self.stubs, &event.payload);
        if !violations.is_empty() {
            return Err(CommitError::Invalid {
                kind: event.kind(),
                violations,
            });
        }
        event.check_well_formed()?;
        self.store.append(std::slice::from_ref(event))?;
        Ok(())
    }

    /// Events this replica holds that `peer` has not acknowledged, ordered by
    /// `(origin, seq)`. Only durably appended events are ever returned.
    pub fn delta_since(&self, peer: &VersionVector) -> Vec<Event> {
        let mut out = Vec::new();
        for (origin, events) in &self.log {
            let have = usize::try_from(peer.get(origin)).unwrap_or(usize::MAX);
            out.extend(events.iter().skip(have).cloned());
        }
        out
    }

    /// Applies a batch of remote events. Returns the events that became
    /// applied, in `(origin, seq)` order; already-known events are skipped
    /// and out-of-order ones wait in the gap buffer. The batch is all or
    /// nothing: on error no state changes.
    pub fn apply(&mut self, events: &[Event]) -> Result<Vec<Event>, ApplyError> {
        for e in events {
            e.check_well_formed()?;
        }

        let mut conflicts = Vec::new();
        let mut staged: BTreeMap<ServerId, BTreeMap<u64, &Event>> = BTreeMap::new();
        for e in events {
            let known = if e.seq <= self.vv.get(&e.origin) {
                self.get_event(&e.id())
            } else {
                self.gap.get(&e.origin).and_then(|g| g.get(&e.seq))
            };
            match known {
                Some(k) if k != e => conflicts.push(e.id()),
                Some(_) => {}
                None => {
                    staged
                        .entry(e.origin.clone())
                        .or_default()
                        .entry(e.seq)
                        .or_insert(e);
                }
            }
        }

        let mut ready: Vec<Event> = Vec::new();
        for (origin, new) in &staged {
            let buffered = self.gap.get(origin);
            let mut next = self.vv.get(origin) + 1;
            let mut taken = 0;
            loop {
                let hit = new
                    .get(&next)
                    .copied()
                    .or_else(|| buffered.and_then(|b| b.get(&next)));
                let Some(e) = hit else { break };
                ready.push(e.clone());
                taken += 1;
                next += 1;
            }
            let remaining = new.len() + buffered.map_or(0, BTreeMap::len) - taken;
            if remaining > self.config.gap_limit {
                return Err(ApplyError::GapOverflow {
                    origin: origin.clone(),
                    buffered: remaining,
                    limit: self.config.gap_limit,
                });
            }
        }

        if !ready.is_empty() {
            self.store.append(&ready)?;
        }

        for e in events {
            self.clock.observe(&e.at);
        }
        for id in conflicts {
            tracing::warn!(event = %id, "peer offered conflicting content for a known event");
            self.diagnostics.push(Diagnostic::ConflictingDuplicate { event: id });
        }
        for (origin, new) in staged {
            let gap = self.gap.entry(origin).or_default();
            for (seq, e) in new {
                gap.insert(seq, e.clone());
            }
        }
        for e in &ready {
            if let Some(g) = self.gap.get_mut(&e.origin) {
                g.remove(&e.seq);
            }
            self.vv.advance(&e.origin, e.seq);
            self.log.entry(e.origin.clone()).or_default().push(e.clone());
            self.upgrade_stub(e);
        }
        self.gap.retain(|_, g| !g.is_empty());
        if !ready.is_empty() {
            self.cache = OnceLock::new();
        }
        Ok(ready)
    }

    fn upgrade_stub(&mut self, e: &Event) {
        let EventPayload::ThreadCreated(t) = &e.payload else {
            return;
        };
        let Some(stub) = self.stubs.remove(&t.id) else {
            return;
        };
        let specialization = t
            .case_form
            .as_ref()
            .and_then(|f| f.specialization_requested.as_ref());
        let mismatches = [
            ("kind", stub.kind != t.kind),
            ("creator", stub.creator != t.creator),
            ("specialization", stub.specialization.as_ref() != specialization),
            ("at", stub.at != e.at),
        ];
        for (field, differs) in mismatches {
            if differs {
                tracing::warn!(thread = %t.id, field, "stub notice disagrees with full record");
                self.diagnostics.push(Diagnostic::StubMismatch {
                    thread: t.id.clone(),
                    field: field.to_owned(),
                });
            }
        }
    }

    /// Records a stub notice. Returns true when it created a new stub; a
    /// notice for a thread that is already known (in full or as a stub) is
    /// a no-op.
    pub fn ingest_stub(&mut self, notice: StubNotice) -> bool {
        self.clock.observe(&notice.at);
        if self.stubs.contains_key(&notice.thread) || self.state().threads.contains_key(&notice.thread)
        {
            return false;
        }
        self.stubs.insert(notice.thread.clone(), notice);
        true
    }

    pub fn stubs(&self) -> impl Iterator<Item = &StubNotice> {
        self.stubs.values()
    }

    /// Stub-only threads rendered as [`Thread`] values with `stub = true`.
    pub fn stub_threads(&self) -> Vec<Thread> {
        self.stubs
            .values()
            .map(|n| Thread {
                id: n.thread.clone(),
                kind: n.kind,
                creator: n.creator.clone(),
                created_at: n.at.clone(),
                case_form: None,
                assignments: Vec::new(),
                status: ThreadStatus::Open,
                stub: true,
                stub_specialization: n.specialization.clone(),
            })
            .collect()
    }

    /// Case lists over full threads plus stub-only threads.
    pub fn case_lists(&self, user: &DoctorId) -> Result<CaseLists, CasesError> {
        let state = self.state();
        let stubs = self.stub_threads();
        let threads = state.active_threads().chain(stubs.iter().map(|t| ActiveThread {
            thread: t,
            last_activity: &t.created_at,
        }));
        partition_cases(user, &state.doctors, threads, &state.groups)
    }

    pub fn add_peer(&mut self, peer: impl Into<ServerId>) {
        let peer = peer.into();
        self.peers.entry(peer.clone()).or_insert(PeerStatus {
            peer,
            last_success_ms: None,
            stale: false,
            consecutive_failures: 0,
            next_attempt_ms: 0,
            last_error: None,
        });
    }

    pub fn peers(&self) -> impl Iterator<Item = &PeerStatus> {
        self.peers.values()
    }

    pub fn peer(&self, peer: &ServerId) -> Option<&PeerStatus> {
        self.peers.get(peer)
    }

    pub fn sync_due(&self, peer: &ServerId, now_ms: u64) -> bool {
        self.peers
            .get(peer)
            .is_some_and(|p| now_ms >= p.next_attempt_ms)
    }

    /// Marks a completed round; clears staleness for the peer at once.
    pub fn record_sync_success(
        &mut self,
        peer: &ServerId,
        now_ms: u64,
        next_attempt_ms: u64,
    ) -> Option<StalenessTransition> {
        self.add_peer(peer.clone());
        let p = self.peers.get_mut(peer).expect("peer just added");
        p.last_success_ms = Some(now_ms);
        p.consecutive_failures = 0;
        p.next_attempt_ms = next_attempt_ms;
        p.last_error = None;
        std::mem::take(&mut p.stale).then(|| StalenessTransition {
            peer: peer.clone(),
            stale: false,
            at_ms: now_ms,
        })
    }

    /// Marks a failed round. The caller computes the retry time from its
    /// backoff policy and the returned failure count.
    pub fn record_sync_failure(&mut self, peer: &ServerId, error: String) -> u32 {
        self.add_peer(peer.clone());
        let p = self.peers.get_mut(peer).expect("peer just added");
        p.consecutive_failures = p.consecutive_failures.saturating_add(1);
        p.last_error = Some(error);
        p.consecutive_failures
    }

    pub fn schedule_retry(&mut self, peer: &ServerId, at_ms: u64) {
        if let Some(p) = self.peers.get_mut(peer) {
            p.next_attempt_ms = at_ms;
        }
    }

    /// Recomputes per-peer stale flags: stale exactly when the time since
    /// the last success (or since start, if never synced) exceeds the
    /// threshold. Returns the flags that changed.
    pub fn staleness_check(&mut self, now_ms: u64, threshold_ms: NonZeroU64) -> Vec<StalenessTransition> {
        let mut out = Vec::new();
        for p in self.peers.values_mut() {
            let since = p.last_success_ms.unwrap_or(self.started_ms);
            let stale = now_ms.saturating_sub(since) > threshold_ms.get();
            if stale != p.stale {
                p.stale = stale;
                out.push(StalenessTransition {
                    peer: p.peer.clone(),
                    stale,
                    at_ms: now_ms,
                });
            }
        }
        out
    }

    pub fn sync_status(&self) -> SyncStatus {
        SyncStatus {
            server_id: self.config.server_id.clone(),
            stale: !self.peers.is_empty() && self.peers.values().all(|p| p.stale),
            peers: self.peers.values().cloned().collect(),
        }
    }
}
