//! Pairwise anti-entropy.
//!
//! A round initiated by `A` against peer `B`:
//! 1. `A` sends its digest; `B` answers with its own digest and the events
//!    `A` is missing.
//! 2. `A` pushes the events `B` is missing.
//! 3. Only after the push succeeds does `A` apply what `B` sent, so a round
//!    that fails at any step leaves `A` unchanged apart from retry
//!    bookkeeping.

use serde::{Deserialize, Serialize};

use crate::event::{Event, VersionVector};
use crate::ids::ServerId;
use crate::replica::{ApplyError, Replica};

pub const PROTOCOL_VERSION: u32 = 1;
pub const PROTOCOL_HEADER: &str = "x-medsync-protocol";
pub const SERVER_HEADER: &str = "x-medsync-server";

/// Exponential backoff: `base * 2^(failures - 1)`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backoff {
    pub base_ms: u64,
    pub cap_ms: u64,
}

impl Backoff {
    pub const SYNC: Self = Self {
        base_ms: 30_000,
        cap_ms: 30 * 60_000,
    };

    pub fn delay_ms(&self, failures: u32) -> u64 {
        if failures == 0 {
            return 0;
        }
        let factor = 1u64.checked_shl(failures - 1).unwrap_or(u64::MAX);
        self.base_ms.saturating_mul(factor).min(self.cap_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestReply {
    pub protocol: u32,
    pub digest: VersionVector,
    /// Events the caller's digest shows it is missing.
    pub delta: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaAck {
    pub applied: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("peer unreachable: {0}")]
    Unreachable(String),
    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    ProtocolMismatch { ours: u32, theirs: u32 },
    #[error("peer rejected the request: {0}")]
    Rejected(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SyncError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("applying the peer's delta failed: {0}")]
    Apply(#[from] ApplyError),
}

/// Transport to one peer.
pub trait PeerLink {
    fn peer(&self) -> &ServerId;
    fn exchange_digest(
        &mut self,
        caller: &ServerId,
        digest: &VersionVector,
    ) -> Result<DigestReply, LinkError>;
    fn push_delta(&mut self, caller: &ServerId, events: &[Event]) -> Result<DeltaAck, LinkError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncResult {
    pub sent: usize,
    pub received: usize,
    /// Received events that were new to this replica.
    pub applied: Vec<Event>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncPolicy {
    pub backoff: Backoff,
    /// Delay between successful rounds.
    pub period_ms: u64,
}

impl Default for SyncPolicy {
    fn default() -> Self {
        Self {
            backoff: Backoff::SYNC,
            period_ms: 60_000,
        }
    }
}

/// Runs one round against `link` and updates the replica's retry and
/// staleness bookkeeping for that peer. `clock` reports the current time;
/// it is read at the start and end of the round.
pub fn sync_round(
    replica: &mut Replica,
    link: &mut dyn PeerLink,
    policy: &SyncPolicy,
    clock: &dyn Fn() -> u64,
) -> Result<SyncResult, SyncError> {
    let started = clock();
    let peer = link.peer().clone();
    let outcome = exchange(replica, link);
    let ended = clock();
    match outcome {
        Ok((sent, received, applied)) => {
            replica.record_sync_success(&peer, ended, ended.saturating_add(policy.period_ms));
            Ok(SyncResult {
                sent,
                received,
                applied,
                duration_ms: ended.saturating_sub(started),
            })
        }
        Err(e) => {
            let failures = replica.record_sync_failure(&peer, e.to_string());
            replica.schedule_retry(&peer, ended.saturating_add(policy.backoff.delay_ms(failures)));
            Err(e)
        }
    }
}

fn exchange(
    replica: &mut Replica,
    link: &mut dyn PeerLink,
) -> Result<(usize, usize, Vec<Event>), SyncError> {
    let me = replica.server_id().clone();
    let reply = link.exchange_digest(&me, &replica.digest())?;
    if reply.protocol != PROTOCOL_VERSION {
        return Err(LinkError::ProtocolMismatch {
            ours: PROTOCOL_VERSION,
            theirs: reply.protocol,
        }
        .into());
    }
    let outgoing = replica.delta_since(&reply.digest);
    if !outgoing.is_empty() {
        link.push_delta(&me, &outgoing)?;
    }
    let applied = replica.apply(&reply.delta)?;
    Ok((outgoing.len(), reply.delta.len(), applied))
}

/// Responder side of step 1.
pub fn handle_digest(
    replica: &Replica,
    protocol: u32,
    caller_digest: &VersionVector,
) -> Result<DigestReply, LinkError> {
    if protocol != PROTOCOL_VERSION {
        return Err(LinkError::ProtocolMismatch {
            ours: PROTOCOL_VERSION,
            theirs: protocol,
        });
    }
    Ok(DigestReply {
        protocol: PROTOCOL_VERSION,
        digest: replica.digest(),
        delta: replica.delta_since(caller_digest),
    })
}

/// Responder side of step 2. Returns the events that became applied.
pub fn handle_delta(replica: &mut Replica, events: &[Event]) -> Result<Vec<Event>, ApplyError> {
    replica.apply(events)
}

/// In-process link to another replica, for tests and simulation.
pub struct DirectLink<'a> {
    pub remote: &'a mut Replica,
    /// Events the remote applied from pushes over this link.
    pub remote_applied: Vec<Event>,
}

impl<'a> DirectLink<'a> {
    pub fn new(remote: &'a mut Replica) -> Self {
        Self {
            remote,
            remote_applied: Vec::new(),
        }
    }
}

impl PeerLink for DirectLink<'_> {
    fn peer(&self) -> &ServerId {
        self.remote.server_id()
    }

    fn exchange_digest(
        &mut self,
        _caller: &ServerId,
        digest: &VersionVector,
    ) -> Result<DigestReply, LinkError> {
        handle_digest(self.remote, PROTOCOL_VERSION, digest)
    }

    fn push_delta(&mut self, _caller: &ServerId, events: &[Event]) -> Result<DeltaAck, LinkError> {
        let applied =
            handle_delta(self.remote, events).map_err(|e| LinkError::Rejected(e.to_string()))?;
        let ack = DeltaAck {
            applied: applied.len(),
        };
        self.remote_applied.extend(applied);
        Ok(ack)
    }
}
