//! Stub notices: minimal thread metadata sent over a narrow side channel
//! (one SMS) so a partitioned server can show that a case exists before
//! the full record propagates.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ThreadKind;
use crate::event::{Event, EventPayload};
use crate::hlc::HlcTimestamp;
use crate::ids::{DoctorId, ServerId, Specialty, ThreadId};

/// Payload budget of one SMS.
pub const STUB_BUDGET_BYTES: usize = 160;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubNotice {
    #[serde(rename = "t")]
    pub thread: ThreadId,
    #[serde(rename = "k")]
    pub kind: ThreadKind,
    #[serde(rename = "c")]
    pub creator: DoctorId,
    #[serde(rename = "s", default, skip_serializing_if = "Option::is_none")]
    pub specialization: Option<Specialty>,
    #[serde(rename = "a")]
    pub at: HlcTimestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StubError {
    #[error("stub notices are only emitted for ThreadCreated events")]
    NotThreadCreated,
    #[error("stub notice is {0} bytes, over the {STUB_BUDGET_BYTES}-byte budget")]
    Oversize(usize),
    #[error("undecodable stub notice: {0}")]
    Decode(String),
}

impl StubNotice {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("notice serializes")
    }

    pub fn decode(raw: &str) -> Result<Self, StubError> {
        if raw.len() > STUB_BUDGET_BYTES {
            return Err(StubError::Oversize(raw.len()));
        }
        serde_json::from_str(raw).map_err(|e| StubError::Decode(e.to_string()))
    }
}

pub fn emit_stub(event: &Event) -> Result<StubNotice, StubError> {
    let EventPayload::ThreadCreated(t) = &event.payload else {
        return Err(StubError::NotThreadCreated);
    };
    let notice = StubNotice {
        thread: t.id.clone(),
        kind: t.kind,
        creator: t.creator.clone(),
        specialization: t
            .case_form
            .as_ref()
            .and_then(|f| f.specialization_requested.clone()),
        at: event.at.clone(),
    };
    let len = notice.encode().len();
    if len > STUB_BUDGET_BYTES {
        return Err(StubError::Oversize(len));
    }
    Ok(notice)
}

/// Best-effort transport for encoded notices.
pub trait StubChannel {
    /// Returns false when the channel dropped the payload.
    fn send(&mut self, to: &ServerId, payload: &str) -> bool;
}

/// In-memory channel that drops each payload with probability `loss`.
#[derive(Debug)]
pub struct MemoryStubChannel {
    inboxes: BTreeMap<ServerId, VecDeque<String>>,
    loss: f64,
    rng: ChaCha8Rng,
    pub sent: u64,
    pub dropped: u64,
}

impl MemoryStubChannel {
    pub fn new(loss: f64, seed: u64) -> Self {
        Self {
            inboxes: BTreeMap::new(),
            loss: loss.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
            sent: 0,
            dropped: 0,
        }
    }

    pub fn drain(&mut self, to: &ServerId) -> Vec<String> {
        self.inboxes
            .get_mut(to)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default()
    }
}

impl StubChannel for MemoryStubChannel {
    fn send(&mut self, to: &ServerId, payload: &str) -> bool {
        self.sent += 1;
        if payload.len() > STUB_BUDGET_BYTES || self.rng.random_bool(self.loss) {
            self.dropped += 1;
            return false;
        }
        self.inboxes
            .entry(to.clone())
            .or_default()
            .push_back(payload.to_owned());
        true
    }
}
