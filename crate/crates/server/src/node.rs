//! One running server: replica, notification queue, sessions and the
//! background loops that sync, check staleness and dispatch.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::num::NonZeroU64;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use medsync_core::log::{write_snapshot, FileLog, StorageError};
use medsync_core::notify::{Channel, Dispatcher, Transport, TransportError};
use medsync_core::replica::{OpenError, ReplicaConfig};
use medsync_core::stub::emit_stub;
use medsync_core::sync::{
    Backoff, DeltaAck, DigestReply, LinkError, PROTOCOL_HEADER, PROTOCOL_VERSION, SERVER_HEADER,
};
use medsync_core::{Event, EventPayload, Replica, ServerId, State};

use crate::auth::Sessions;
use crate::config::{Config, PeerConfig, TransportConfig};

/// Milliseconds since the Unix epoch, or a test's virtual time.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    })
}

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error("opening the event log: {0}")]
    Open(#[from] OpenError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("building the peer client: {0}")]
    Client(#[from] reqwest::Error),
}

enum Sink {
    Log,
    Outbox(PathBuf),
}

impl Sink {
    fn from_config(c: &TransportConfig) -> Self {
        match c {
            TransportConfig::Log => Self::Log,
            TransportConfig::Outbox { path } => Self::Outbox(path.clone()),
        }
    }

    fn send(&self, channel: Channel, address: &str, body: &str) -> Result<(), TransportError> {
        match self {
            Self::Log => {
                tracing::info!(%channel, address, body, "notification");
                Ok(())
            }
            Self::Outbox(path) => {
                let line = serde_json::json!({ "channel": channel, "address": address, "body": body });
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .and_then(|mut f| writeln!(f, "{line}"))
                    .map_err(|e| TransportError::Retryable(e.to_string()))
            }
        }
    }
}

/// Email and SMS sinks chosen in the config.
pub struct ConfiguredTransport {
    email: Sink,
    sms: Sink,
}

impl Transport for ConfiguredTransport {
    fn send(&mut self, channel: Channel, address: &str, body: &str) -> Result<(), TransportError> {
        match channel {
            Channel::Email => self.email.send(channel, address, body),
            Channel::Sms => self.sms.send(channel, address, body),
        }
    }
}

pub struct Node {
    pub config: Config,
    replica: Mutex<Replica>,
    dispatcher: Mutex<Dispatcher>,
    sessions: Mutex<Sessions>,
    transport: Mutex<Box<dyn Transport + Send>>,
    in_flight: Mutex<BTreeSet<ServerId>>,
    clock: Clock,
    http: reqwest::Client,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Opens the durable log under `config.data_dir`.
pub fn open_replica(config: &Config, now_ms: u64) -> Result<Replica, NodeError> {
    let store = FileLog::open(config.log_path())?;
    let mut replica = Replica::open(ReplicaConfig::new(config.server_id.clone()), Box::new(store), now_ms)?;
    for p in &config.peers {
        replica.add_peer(p.id.clone());
    }
    Ok(replica)
}

impl Node {
    pub fn open(config: Config, clock: Clock) -> Result<Self, NodeError> {
        let replica = open_replica(&config, clock())?;
        let dispatcher = Dispatcher::new(config.homed_users.iter().cloned(), config.staleness_threshold_hours);
        let transport = ConfiguredTransport {
            email: Sink::from_config(&config.transports.email),
            sms: Sink::from_config(&config.transports.sms),
        };
        let mut http = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .https_only(!config.test_mode);
        if let Some(ca) = config.tls.as_ref().and_then(|t| t.ca.as_ref()) {
            let pem = std::fs::read(ca).map_err(|source| NodeError::Io {
                path: ca.clone(),
                source,
            })?;
            http = http.add_root_certificate(reqwest::Certificate::from_pem(&pem)?);
        }
        Ok(Self {
            config,
            replica: Mutex::new(replica),
            dispatcher: Mutex::new(dispatcher),
            sessions: Mutex::new(Sessions::default()),
            transport: Mutex::new(Box::new(transport)),
            in_flight: Mutex::new(BTreeSet::new()),
            clock,
            http: http.build()?,
        })
    }

    /// Replaces the notification transport.
    pub fn set_transport(&self, transport: Box<dyn Transport + Send>) {
        *lock(&self.transport) = transport;
    }

    pub fn now(&self) -> u64 {
        (self.clock)()
    }

    pub fn server_id(&self) -> &ServerId {
        &self.config.server_id
    }

    pub fn state(&self) -> Arc<State> {
        lock(&self.replica).state()
    }

    /// Runs `f` with the replica locked. Keep `f` short; nothing async.
    pub fn with_replica<T>(&self, f: impl FnOnce(&mut Replica) -> T) -> T {
        f(&mut lock(&self.replica))
    }

    pub fn sessions(&self) -> MutexGuard<'_, Sessions> {
        lock(&self.sessions)
    }

    pub fn dispatcher(&self) -> MutexGuard<'_, Dispatcher> {
        lock(&self.dispatcher)
    }

    /// Commits through `f` and queues notifications for what it wrote.
    pub fn commit<E>(&self, f: impl FnOnce(&mut Replica, u64) -> Result<Vec<Event>, E>) -> Result<Vec<Event>, E> {
        let now = self.now();
        let (events, state) = {
            let mut r = lock(&self.replica);
            let events = f(&mut r, now)?;
            (events, r.state())
        };
        self.after_apply(&events, &state, now);
        for e in &events {
            if let EventPayload::ThreadCreated(_) = e.payload {
                self.push_stub(e);
            }
        }
        Ok(events)
    }

    fn after_apply(&self, events: &[Event], state: &State, now: u64) {
        if !events.is_empty() {
            lock(&self.dispatcher).on_applied(events, state, now);
        }
    }

    /// Responder side of the digest exchange.
    pub fn handle_digest(
        &self,
        protocol: u32,
        digest: &medsync_core::VersionVector,
    ) -> Result<DigestReply, LinkError> {
        medsync_core::sync::handle_digest(&lock(&self.replica), protocol, digest)
    }

    /// Responder side of the delta push.
    pub fn handle_delta(&self, events: &[Event]) -> Result<DeltaAck, medsync_core::replica::ApplyError> {
        let now = self.now();
        let (applied, state) = {
            let mut r = lock(&self.replica);
            let applied = medsync_core::sync::handle_delta(&mut r, events)?;
            (applied, r.state())
        };
        self.after_apply(&applied, &state, now);
        Ok(DeltaAck {
            applied: applied.len(),
        })
    }

    pub fn peer_config(&self, id: &ServerId) -> Option<&PeerConfig> {
        self.config.peers.iter().find(|p| p.id == *id)
    }

    fn post(&self, peer: &PeerConfig, path: &str) -> reqwest::RequestBuilder {
        self.http
            .post(format!("{}/api/v1/sync/{path}", peer.url.trim_end_matches('/')))
            .bearer_auth(&peer.secret)
            .header(PROTOCOL_HEADER, PROTOCOL_VERSION.to_string())
            .header(SERVER_HEADER, self.server_id().as_str())
    }

    async fn exchange(&self, peer: &PeerConfig) -> Result<(usize, usize), String> {
        let digest = lock(&self.replica).digest();
        let reply = self
            .post(peer, "digest")
            .json(&digest)
            .send()
            .await
            .and_then(reqwest::Response::error_for_status)
            .map_err(|e| LinkError::Unreachable(e.to_string()).to_string())?
            .json::<DigestReply>()
            .await
            .map_err(|e| LinkError::Rejected(e.to_string()).to_string())?;
        if reply.protocol != PROTOCOL_VERSION {
            return Err(LinkError::ProtocolMismatch {
                ours: PROTOCOL_VERSION,
                theirs: reply.protocol,
            }
            .to_string());
        }
        let outgoing = lock(&self.replica).delta_since(&reply.digest);
        if !outgoing.is_empty() {
            self.post(peer, "delta")
                .json(&outgoing)
                .send()
                .await
                .and_then(reqwest::Response::error_for_status)
                .map_err(|e| LinkError::Unreachable(e.to_string()).to_string())?;
        }
        let now = self.now();
        let (applied, state) = {
            let mut r = lock(&self.replica);
            let applied = r.apply(&reply.delta).map_err(|e| e.to_string())?;
            (applied, r.state())
        };
        self.after_apply(&applied, &state, now);
        Ok((outgoing.len(), reply.delta.len()))
    }

    /// One anti-entropy round with `peer`: digest exchange, push of what the
    /// peer lacks, then apply of what it sent. Retry and staleness
    /// bookkeeping is updated either way.
    pub async fn sync_with(&self, peer: &ServerId) -> Result<(usize, usize), String> {
        let Some(cfg) = self.peer_config(peer).cloned() else {
            return Err(format!("{peer} is not a configured peer"));
        };
        if !lock(&self.in_flight).insert(peer.clone()) {
            return Err(format!("a round with {peer} is already running"));
        }
        let outcome = self.exchange(&cfg).await;
        lock(&self.in_flight).remove(peer);
        let now = self.now();
        let mut r = lock(&self.replica);
        match &outcome {
            Ok(_) => {
                let period = self.config.sync_period_secs.max(1) * 1000;
                if let Some(t) = r.record_sync_success(peer, now, now + period) {
                    let state = r.state();
                    drop(r);
                    lock(&self.dispatcher).on_staleness(&[t], &state, now);
                }
            }
            Err(e) => {
                tracing::warn!(%peer, error = %e, "sync round failed");
                let failures = r.record_sync_failure(peer, e.clone());
                r.schedule_retry(peer, now + Backoff::SYNC.delay_ms(failures));
            }
        }
        outcome
    }

    /// Starts a round with every peer that is due.
    pub async fn sync_due(self: &Arc<Self>) {
        let now = self.now();
        let due: Vec<ServerId> = {
            let r = lock(&self.replica);
            self.config
                .peers
                .iter()
                .map(|p| p.id.clone())
                .filter(|p| r.sync_due(p, now))
                .collect()
        };
        for peer in due {
            let node = Arc::clone(self);
            tokio::spawn(async move {
                let _ = node.sync_with(&peer).await;
            });
        }
    }

    pub fn staleness_tick(&self) {
        let now = self.now();
        let threshold = NonZeroU64::new(self.config.staleness_threshold_hours.max(1) * 3_600_000).expect("positive");
        let (transitions, state) = {
            let mut r = lock(&self.replica);
            (r.staleness_check(now, threshold), r.state())
        };
        if !transitions.is_empty() {
            for t in &transitions {
                tracing::warn!(peer = %t.peer, stale = t.stale, "staleness changed");
            }
            lock(&self.dispatcher).on_staleness(&transitions, &state, now);
        }
    }

    pub fn dispatch_tick(&self) -> medsync_core::notify::DispatchReport {
        let now = self.now();
        let mut transport = lock(&self.transport);
        lock(&self.dispatcher).dispatch_due(transport.as_mut(), now)
    }

    pub fn write_snapshot(&self) -> Result<(), StorageError> {
        write_snapshot(self.config.snapshot_path(), &self.state())
    }

    /// Best effort: the notice goes straight to each peer's stub endpoint,
    /// and a failure is only logged. Full data follows through sync.
    fn push_stub(&self, event: &Event) {
        let Ok(notice) = emit_stub(event) else { return };
        let Ok(handle) = tokio::runtime::Handle::try_current() else {
            return;
        };
        for peer in self.config.peers.clone() {
            let req = self.post(&peer, "stub").body(notice.encode());
            handle.spawn(async move {
                if let Err(e) = req.send().await {
                    tracing::debug!(peer = %peer.id, error = %e, "stub notice not delivered");
                }
            });
        }
    }

    /// Sync, staleness, dispatch and snapshot loops. Abort the returned
    /// handles to stop them.
    pub fn spawn_background(self: &Arc<Self>) -> Vec<tokio::task::JoinHandle<()>> {
        fn repeat(node: &Arc<Node>, secs: u64, f: fn(&Node)) -> tokio::task::JoinHandle<()> {
            let node = Arc::clone(node);
            tokio::spawn(async move {
                let mut tick = tokio::time::interval(Duration::from_secs(secs));
                loop {
                    tick.tick().await;
                    f(&node);
                }
            })
        }
        let node = Arc::clone(self);
        let sync = tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(1));
            loop {
                tick.tick().await;
                node.sync_due().await;
            }
        });
        vec![
            sync,
            repeat(self, 60, Node::staleness_tick),
            repeat(self, 10, |n| {
                n.dispatch_tick();
            }),
            repeat(self, 600, |n| {
                if let Err(e) = n.write_snapshot() {
                    tracing::error!(error = %e, "snapshot failed");
                }
            }),
        ]
    }
}
