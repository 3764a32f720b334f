//! Virtual-time event loop over in-process replicas.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::num::NonZeroU64;

use medsync_core::domain::CaseEntry;
use medsync_core::event::{StatusRecord, ThreadRecord};
use medsync_core::notify::{Dispatcher, JobKey, JobState, LossyTransport, MemoryTransport};
use medsync_core::routing::{assign_thread, post_message, set_colleague, set_membership, RoutingError};
use medsync_core::stub::{emit_stub, MemoryStubChannel, StubChannel, StubNotice};
use medsync_core::sync::{
    handle_delta, sync_round, DeltaAck, DigestReply, DirectLink, LinkError, PeerLink, SyncPolicy,
};
use medsync_core::{Event, EventId, EventPayload, Replica, ServerId, VersionVector};
use serde::Serialize;

use crate::outage::{OutageError, OutageTrace};
use crate::scenario::{Op, Scenario, TraceSpec};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("workload op {index} names unknown server {server}")]
    UnknownServer { index: usize, server: ServerId },
    #[error("peering names unknown server {0}")]
    UnknownPeer(ServerId),
    #[error("duplicate server {0}")]
    DuplicateServer(ServerId),
    #[error("topology has no servers")]
    Empty,
    #[error("bootstrap payload {index} rejected: {error}")]
    Bootstrap { index: usize, error: String },
    #[error(transparent)]
    Outage(#[from] OutageError),
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectedOp {
    pub index: usize,
    pub server: ServerId,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CommitStats {
    pub committed: usize,
    pub rejected: usize,
    /// Committed while the server's own uplink was down.
    pub during_outage: usize,
    /// Peer calls made while a commit was executing.
    pub peer_calls_during_commits: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SyncStats {
    pub rounds_ok: usize,
    pub rounds_failed: usize,
    /// Requests that reached a peer.
    pub peer_calls: u64,
    /// Requests that reached a peer while either endpoint's uplink was down.
    pub peer_calls_in_outage: u64,
    pub events_sent: usize,
    pub events_received: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StalenessRecord {
    pub server: ServerId,
    pub peer: ServerId,
    pub stale: bool,
    pub at_ms: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StubStats {
    pub emitted: u64,
    pub dropped: u64,
    pub ingested: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NotificationStats {
    pub jobs: usize,
    pub sent: usize,
    pub failed: usize,
    pub pending: usize,
    pub deliveries: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub at_ms: u64,
    pub server: ServerId,
    pub user: medsync_core::DoctorId,
    pub primary: Vec<CaseEntry>,
    pub other: Vec<CaseEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub at_ms: u64,
    pub from: ServerId,
    pub to: ServerId,
    pub ok: bool,
    pub sent: usize,
    pub received: usize,
    /// Whether both ends held the same digest after the round.
    pub settled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub seed: u64,
    pub converged: bool,
    /// First instant at or after the last workload op when every digest
    /// was equal.
    pub convergence_time_ms: Option<u64>,
    pub max_divergence_window_ms: u64,
    pub last_workload_ms: u64,
    pub end_ms: u64,
    /// Per server, `(time, events held)` at every change.
    pub digest_history: BTreeMap<ServerId, Vec<(u64, u64)>>,
    pub final_digests: BTreeMap<ServerId, VersionVector>,
    pub final_hashes: BTreeMap<ServerId, String>,
    pub commits: CommitStats,
    pub sync: SyncStats,
    pub staleness: Vec<StalenessRecord>,
    pub stubs: StubStats,
    pub notifications: BTreeMap<ServerId, NotificationStats>,
    pub probes: Vec<ProbeResult>,
    pub rounds: Vec<RoundRecord>,
    pub rejected: Vec<RejectedOp>,
    #[serde(skip)]
    pub notification_keys: BTreeMap<ServerId, Vec<JobKey>>,
    /// Per server, event ids in the batches handed to the dispatcher.
    #[serde(skip)]
    pub apply_batches: BTreeMap<ServerId, Vec<Vec<EventId>>>,
    #[serde(skip)]
    pub logs: BTreeMap<ServerId, Vec<Event>>,
    #[serde(skip)]
    pub homed: BTreeMap<ServerId, Vec<medsync_core::DoctorId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Op(usize),
    Probe(usize),
    StubArrive(usize),
    Sync { from: usize, to: usize },
    FullResync,
    StalenessTick,
    DispatchTick,
}

struct Queue {
    heap: BinaryHeap<Reverse<(u64, u64, Action)>>,
    seq: u64,
    /// Queued ops, probes and stub arrivals.
    work: usize,
}

fn is_work(a: &Action) -> bool {
    matches!(a, Action::Op(_) | Action::Probe(_) | Action::StubArrive(_))
}

impl Queue {
    fn push(&mut self, at: u64, action: Action) {
        self.seq += 1;
        self.work += usize::from(is_work(&action));
        self.heap.push(Reverse((at, self.seq, action)));
    }

    fn pop(&mut self) -> Option<(u64, Action)> {
        let (at, _, a) = self.heap.pop()?.0;
        self.work -= usize::from(is_work(&a));
        Some((at, a))
    }
}

/// Link to a peer through the simulated network.
struct NetLink<'a> {
    inner: DirectLink<'a>,
    down: bool,
    calls: &'a mut u64,
}

impl PeerLink for NetLink<'_> {
    fn peer(&self) -> &ServerId {
        self.inner.peer()
    }

    fn exchange_digest(&mut self, caller: &ServerId, digest: &VersionVector) -> Result<DigestReply, LinkError> {
        if self.down {
            return Err(LinkError::Unreachable("link down".into()));
        }
        *self.calls += 1;
        self.inner.exchange_digest(caller, digest)
    }

    fn push_delta(&mut self, caller: &ServerId, events: &[Event]) -> Result<DeltaAck, LinkError> {
        if self.down {
            return Err(LinkError::Unreachable("link down".into()));
        }
        *self.calls += 1;
        self.inner.push_delta(caller, events)
    }
}

fn pair_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (a, b) = v.split_at_mut(j);
        (&mut a[i], &mut b[0])
    } else {
        let (a, b) = v.split_at_mut(i);
        (&mut b[0], &mut a[j])
    }
}

struct Node {
    id: ServerId,
    replica: Replica,
    dispatcher: Dispatcher,
    transport: LossyTransport<MemoryTransport>,
    peers: Vec<usize>,
}

struct Sim<'s> {
    scenario: &'s Scenario,
    trace: OutageTrace,
    nodes: Vec<Node>,
    queue: Queue,
    stub_channel: MemoryStubChannel,
    calls: u64,
    result: ScenarioResult,
    diverged_since: Option<u64>,
}

fn rejected(e: impl ToString) -> String {
    e.to_string()
}

impl Sim<'_> {
    fn down(&self, i: usize, at: u64) -> bool {
        self.trace.is_down(&self.nodes[i].id, at)
    }

    fn notify_applied(&mut self, i: usize, events: &[Event], now: u64) {
        if events.is_empty() {
            return;
        }
        let node = &mut self.nodes[i];
        let state = node.replica.state();
        node.dispatcher.on_applied(events, &state, now);
        self.result
            .apply_batches
            .entry(node.id.clone())
            .or_default()
            .push(events.iter().map(Event::id).collect());
    }

    fn observe_digests(&mut self, now: u64) {
        let mut equal = true;
        let first = self.nodes[0].replica.digest();
        for n in &self.nodes {
            let d = n.replica.digest();
            let hist = self.result.digest_history.entry(n.id.clone()).or_default();
            let total = d.total();
            if hist.last().map(|&(_, t)| t) != Some(total) {
                hist.push((now, total));
            }
            equal &= d == first && n.replica.gap_total() == 0;
        }
        match (equal, self.diverged_since) {
            (false, None) => self.diverged_since = Some(now),
            (true, Some(since)) => {
                self.result.max_divergence_window_ms = self.result.max_divergence_window_ms.max(now - since);
                self.diverged_since = None;
            }
            _ => {}
        }
        if equal && now >= self.result.last_workload_ms && self.result.convergence_time_ms.is_none() {
            self.result.convergence_time_ms = Some(now);
        }
        if !equal && now >= self.result.last_workload_ms {
            self.result.convergence_time_ms = None;
        }
    }

    fn all_equal(&self) -> bool {
        let first = self.nodes[0].replica.digest();
        self.nodes
            .iter()
            .all(|n| n.replica.digest() == first && n.replica.gap_total() == 0)
    }

    fn run_op(&mut self, index: usize, now: u64) {
        let timed = &self.scenario.workload[index];
        let i = self
            .nodes
            .iter()
            .position(|n| n.id == timed.server)
            .expect("servers validated");
        let calls_before = self.calls;
        let outage = self.down(i, now);
        let mut committed = Vec::new();
        let outcome = self.apply_op(i, &timed.op, now, &mut committed);
        self.result.commits.peer_calls_during_commits += self.calls - calls_before;
        if outage && !committed.is_empty() {
            self.result.commits.during_outage += committed.len();
        }
        self.result.commits.committed += committed.len();
        if let Err(error) = outcome {
            self.result.commits.rejected += 1;
            self.result.rejected.push(RejectedOp {
                index,
                server: timed.server.clone(),
                error,
            });
        }
        for e in &committed {
            if let EventPayload::ThreadCreated(_) = e.payload {
                self.send_stub(i, e, now);
            }
        }
        self.notify_applied(i, &committed, now);
        self.observe_digests(now);
    }

    fn apply_op(&mut self, i: usize, op: &Op, now: u64, out: &mut Vec<Event>) -> Result<(), String> {
        let r = &mut self.nodes[i].replica;
        match op {
            Op::CreateThread {
                thread,
                creator,
                kind,
                case_form,
                assign_to,
            } => {
                if !r.state().doctors.contains_key(creator) {
                    return Err(rejected(RoutingError::UnknownDoctor(creator.clone())));
                }
                let e = r
                    .commit(
                        EventPayload::ThreadCreated(ThreadRecord {
                            id: thread.clone(),
                            kind: *kind,
                            creator: creator.clone(),
                            case_form: case_form.clone(),
                            attachments: Vec::new(),
                        }),
                        now,
                    )
                    .map_err(rejected)?;
                out.push(e);
                if let Some(target) = assign_to {
                    out.push(assign_thread(r, thread, target.clone(), creator, now).map_err(rejected)?);
                }
            }
            Op::PostMessage { thread, author, body } => {
                out.push(post_message(r, thread, author, body.clone(), Vec::new(), now).map_err(rejected)?);
            }
            Op::Assign { thread, actor, target } => {
                out.push(assign_thread(r, thread, target.clone(), actor, now).map_err(rejected)?);
            }
            Op::SetStatus { thread, actor, status } => {
                if !medsync_core::routing::is_participant(r, thread, actor).map_err(rejected)? {
                    return Err(format!("{actor} may not change status of {thread}"));
                }
                let payload = EventPayload::StatusChanged(StatusRecord {
                    thread: thread.clone(),
                    status: *status,
                    kind: None,
                    actor: actor.clone(),
                });
                out.push(r.commit(payload, now).map_err(rejected)?);
            }
            Op::SetColleague { from, to, listed } => {
                out.push(set_colleague(r, from, to, *listed, now).map_err(rejected)?);
            }
            Op::SetMembership { doctor, group, member } => {
                out.push(set_membership(r, doctor, group, *member, now).map_err(rejected)?);
            }
            Op::Commit { payload } => {
                out.push(r.commit(payload.clone(), now).map_err(rejected)?);
            }
        }
        Ok(())
    }

    fn send_stub(&mut self, from: usize, event: &Event, now: u64) {
        if !self.scenario.params.stub_channel {
            return;
        }
        let Ok(notice) = emit_stub(event) else {
            return;
        };
        let payload = notice.encode();
        for to in 0..self.nodes.len() {
            if to == from {
                continue;
            }
            self.result.stubs.emitted += 1;
            if self.stub_channel.send(&self.nodes[to].id, &payload) {
                self.queue.push(now + self.scenario.params.stub_latency_ms, Action::StubArrive(to));
            } else {
                self.result.stubs.dropped += 1;
            }
        }
    }

    fn stub_arrive(&mut self, to: usize) {
        let id = self.nodes[to].id.clone();
        for raw in self.stub_channel.drain(&id) {
            if let Ok(notice) = StubNotice::decode(&raw) {
                if self.nodes[to].replica.ingest_stub(notice) {
                    self.result.stubs.ingested += 1;
                }
            }
        }
    }

    fn sync(&mut self, from: usize, to: usize, now: u64) {
        let down = self.down(from, now) || self.down(to, now);
        let policy = SyncPolicy {
            period_ms: self.scenario.params.sync_period_ms,
            ..SyncPolicy::default()
        };
        let was_stale = self.nodes[from]
            .replica
            .peer(&self.nodes[to].id)
            .is_some_and(|p| p.stale);
        let calls_before = self.calls;
        let (a, b) = pair_mut(&mut self.nodes, from, to);
        let mut link = NetLink {
            inner: DirectLink::new(&mut b.replica),
            down,
            calls: &mut self.calls,
        };
        let outcome = sync_round(&mut a.replica, &mut link, &policy, &|| now);
        let remote_applied = std::mem::take(&mut link.inner.remote_applied);
        let settled = a.replica.digest() == b.replica.digest();
        let next = a.replica.peer(&b.id).map_or(now + policy.period_ms, |p| p.next_attempt_ms);
        let (from_id, to_id) = (a.id.clone(), b.id.clone());
        if down {
            self.result.sync.peer_calls_in_outage += self.calls - calls_before;
        }
        self.result.sync.peer_calls += self.calls - calls_before;

        let record = |ok, sent, received| RoundRecord {
            at_ms: now,
            from: from_id.clone(),
            to: to_id.clone(),
            ok,
            sent,
            received,
            settled,
        };
        match outcome {
            Ok(res) => {
                self.result.sync.rounds_ok += 1;
                self.result.sync.events_sent += res.sent;
                self.result.sync.events_received += res.received;
                if self.scenario.params.record_rounds {
                    self.result.rounds.push(record(true, res.sent, res.received));
                }
                if was_stale {
                    self.result.staleness.push(StalenessRecord {
                        server: from_id.clone(),
                        peer: to_id.clone(),
                        stale: false,
                        at_ms: now,
                    });
                }
                self.notify_applied(from, &res.applied, now);
                self.notify_applied(to, &remote_applied, now);
            }
            Err(_) => {
                self.result.sync.rounds_failed += 1;
                if self.scenario.params.record_rounds {
                    self.result.rounds.push(record(false, 0, 0));
                }
                self.notify_applied(to, &remote_applied, now);
            }
        }
        self.queue.push(next.max(now + 1), Action::Sync { from, to });
        self.observe_digests(now);
    }

    /// Pushes every event each server holds to each reachable peer,
    /// regardless of what the peer already has.
    fn full_resync(&mut self, now: u64) {
        for from in 0..self.nodes.len() {
            for k in 0..self.nodes[from].peers.len() {
                let to = self.nodes[from].peers[k];
                if self.down(from, now) || self.down(to, now) {
                    continue;
                }
                let (a, b) = pair_mut(&mut self.nodes, from, to);
                let all: Vec<Event> = a.replica.events().cloned().collect();
                self.calls += 1;
                self.result.sync.peer_calls += 1;
                if let Ok(applied) = handle_delta(&mut b.replica, &all) {
                    self.notify_applied(to, &applied, now);
                }
            }
        }
        self.observe_digests(now);
    }

    fn staleness_tick(&mut self, now: u64) {
        let hours = self.scenario.params.staleness_threshold_hours.max(1);
        let threshold = NonZeroU64::new(hours * 3_600_000).expect("positive");
        for node in &mut self.nodes {
            let transitions = node.replica.staleness_check(now, threshold);
            if transitions.is_empty() {
                continue;
            }
            let state = node.replica.state();
            node.dispatcher.on_staleness(&transitions, &state, now);
            self.result.staleness.extend(transitions.into_iter().map(|t| StalenessRecord {
                server: node.id.clone(),
                peer: t.peer,
                stale: t.stale,
                at_ms: t.at_ms,
            }));
        }
    }

    fn dispatch_tick(&mut self, now: u64) {
        for node in &mut self.nodes {
            node.dispatcher.dispatch_due(&mut node.transport, now);
        }
    }

    fn probe(&mut self, index: usize, now: u64) {
        let p = &self.scenario.probes[index];
        let Some(node) = self.nodes.iter().find(|n| n.id == p.server) else {
            return;
        };
        let lists = node.replica.case_lists(&p.user).unwrap_or_default();
        self.result.probes.push(ProbeResult {
            at_ms: now,
            server: p.server.clone(),
            user: p.user.clone(),
            primary: lists.primary,
            other: lists.other,
        });
    }
}

fn validate(scenario: &Scenario) -> Result<(), ScenarioError> {
    if scenario.topology.servers.is_empty() {
        return Err(ScenarioError::Empty);
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &scenario.topology.servers {
        if !seen.insert(&s.id) {
            return Err(ScenarioError::DuplicateServer(s.id.clone()));
        }
    }
    for (a, b) in &scenario.topology.peers {
        for x in [a, b] {
            if !seen.contains(x) {
                return Err(ScenarioError::UnknownPeer(x.clone()));
            }
        }
    }
    for (index, op) in scenario.workload.iter().enumerate() {
        if !seen.contains(&op.server) {
            return Err(ScenarioError::UnknownServer {
                index,
                server: op.server.clone(),
            });
        }
    }
    Ok(())
}

/// Runs a scenario to completion: the scripted phase up to the horizon,
/// then a quiescence phase with all links up, ending once every replica
/// holds the same events or the quiescence limit passes.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult, ScenarioError> {
    validate(scenario)?;
    let params = &scenario.params;
    let trace = match &scenario.trace {
        TraceSpec::Explicit(t) => t.clone().normalized(),
        TraceSpec::Generated(p) => OutageTrace::generate(scenario.seed, p, scenario.topology.ids())?,
    };
    let last_workload_ms = scenario.workload.iter().map(|o| o.at_ms).max().unwrap_or(0);
    let horizon = scenario
        .horizon_ms
        .unwrap_or(trace.horizon_ms)
        .max(last_workload_ms)
        .max(trace.last_end_ms());

    let ids: Vec<ServerId> = scenario.topology.ids().cloned().collect();
    let mut nodes: Vec<Node> = Vec::with_capacity(ids.len());
    let mut boot_events = Vec::new();
    for (i, spec) in scenario.topology.servers.iter().enumerate() {
        let mut replica = Replica::in_memory(spec.id.clone(), 0);
        if i == 0 {
            for (index, p) in scenario.bootstrap.iter().enumerate() {
                let e = replica.commit(p.clone(), 0).map_err(|e| ScenarioError::Bootstrap {
                    index,
                    error: e.to_string(),
                })?;
                boot_events.push(e);
            }
        } else {
            replica.apply(&boot_events).map_err(|e| ScenarioError::Bootstrap {
                index: 0,
                error: e.to_string(),
            })?;
        }
        let peers: Vec<usize> = scenario
            .topology
            .peers_of(&spec.id)
            .map(|p| ids.iter().position(|x| x == p).expect("validated"))
            .collect();
        for &p in &peers {
            replica.add_peer(ids[p].clone());
        }
        nodes.push(Node {
            id: spec.id.clone(),
            replica,
            dispatcher: Dispatcher::new(spec.homed_users.iter().cloned(), params.staleness_threshold_hours),
            transport: LossyTransport::new(
                MemoryTransport::default(),
                params.notification_loss,
                scenario.seed.wrapping_add(i as u64 + 1),
            ),
            peers,
        });
    }

    let mut queue = Queue {
        heap: BinaryHeap::new(),
        seq: 0,
        work: 0,
    };
    for (i, op) in scenario.workload.iter().enumerate() {
        queue.push(op.at_ms, Action::Op(i));
    }
    for (i, p) in scenario.probes.iter().enumerate() {
        queue.push(p.at_ms, Action::Probe(i));
    }
    let period = params.sync_period_ms.max(1);
    for (from, n) in nodes.iter().enumerate() {
        for &to in &n.peers {
            // Deterministic stagger so rounds do not all fire at once.
            let offset = (scenario.seed.wrapping_add((from * 31 + to * 7) as u64)) % period;
            queue.push(offset, Action::Sync { from, to });
        }
    }
    queue.push(0, Action::StalenessTick);
    queue.push(0, Action::DispatchTick);
    if let Some(every) = params.full_resync_ms {
        queue.push(every.max(1), Action::FullResync);
    }

    let result = ScenarioResult {
        seed: scenario.seed,
        converged: false,
        convergence_time_ms: None,
        max_divergence_window_ms: 0,
        last_workload_ms,
        end_ms: 0,
        digest_history: BTreeMap::new(),
        final_digests: BTreeMap::new(),
        final_hashes: BTreeMap::new(),
        commits: CommitStats::default(),
        sync: SyncStats::default(),
        staleness: Vec::new(),
        stubs: StubStats::default(),
        notifications: BTreeMap::new(),
        probes: Vec::new(),
        rounds: Vec::new(),
        rejected: Vec::new(),
        notification_keys: BTreeMap::new(),
        apply_batches: BTreeMap::new(),
        logs: BTreeMap::new(),
        homed: scenario
            .topology
            .servers
            .iter()
            .map(|s| (s.id.clone(), s.homed_users.clone()))
            .collect(),
    };
    let mut sim = Sim {
        scenario,
        trace,
        nodes,
        queue,
        stub_channel: MemoryStubChannel::new(params.stub_loss, scenario.seed ^ 0x5157_u64),
        calls: 0,
        result,
        diverged_since: None,
    };
    for i in 0..sim.nodes.len() {
        sim.notify_applied(i, &boot_events, 0);
    }
    sim.observe_digests(0);

    let deadline = horizon.saturating_add(params.quiescence_limit_ms);
    let mut now = 0;
    while let Some((at, action)) = sim.queue.pop() {
        if at > deadline {
            break;
        }
        now = at;
        match action {
            Action::Op(i) => sim.run_op(i, now),
            Action::Probe(i) => sim.probe(i, now),
            Action::StubArrive(to) => sim.stub_arrive(to),
            Action::Sync { from, to } => sim.sync(from, to, now),
            Action::FullResync => {
                sim.full_resync(now);
                if let Some(every) = params.full_resync_ms {
                    sim.queue.push(now + every.max(1), Action::FullResync);
                }
            }
            Action::StalenessTick => {
                sim.staleness_tick(now);
                sim.queue.push(now + params.staleness_check_ms.max(1), Action::StalenessTick);
            }
            Action::DispatchTick => {
                sim.dispatch_tick(now);
                sim.queue.push(now + params.dispatch_tick_ms.max(1), Action::DispatchTick);
            }
        }
        if now >= horizon && sim.queue.work == 0 && sim.all_equal() {
            break;
        }
    }
    sim.dispatch_tick(now);
    if let Some(since) = sim.diverged_since {
        sim.result.max_divergence_window_ms = sim.result.max_divergence_window_ms.max(now - since);
    }

    let mut result = sim.result;
    result.end_ms = now;
    result.converged = sim.nodes.iter().all(|n| n.replica.gap_total() == 0)
        && sim.nodes.windows(2).all(|w| w[0].replica.digest() == w[1].replica.digest());
    if !result.converged {
        result.convergence_time_ms = None;
    }
    result.stubs.dropped = sim.stub_channel.dropped;
    for node in &sim.nodes {
        let jobs: Vec<_> = node.dispatcher.jobs().collect();
        result.notifications.insert(
            node.id.clone(),
            NotificationStats {
                jobs: jobs.len(),
                sent: jobs.iter().filter(|j| j.state == JobState::Sent).count(),
                failed: jobs.iter().filter(|j| j.state == JobState::Failed).count(),
                pending: jobs.iter().filter(|j| j.state == JobState::Queued).count(),
                deliveries: node.transport.inner.delivered.len(),
            },
        );
        result
            .notification_keys
            .insert(node.id.clone(), jobs.iter().map(|j| j.key.clone()).collect());
        result.final_digests.insert(node.id.clone(), node.replica.digest());
        result
            .final_hashes
            .insert(node.id.clone(), node.replica.state().canonical_hash());
        result.logs.insert(node.id.clone(), node.replica.events().cloned().collect());
    }
    Ok(result)
}

impl ScenarioResult {
    /// First time `server` flagged any peer stale.
    pub fn stale_raised(&self, server: &ServerId) -> Option<u64> {
        self.staleness
            .iter()
            .find(|s| &s.server == server && s.stale)
            .map(|s| s.at_ms)
    }

    pub fn stale_cleared_after(&self, server: &ServerId, after_ms: u64) -> Option<u64> {
        self.staleness
            .iter()
            .find(|s| &s.server == server && !s.stale && s.at_ms >= after_ms)
            .map(|s| s.at_ms)
    }
}
