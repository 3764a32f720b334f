//! Replicated events and version vectors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_case_form, Assignment, Attachment, CaseForm, ColleagueEdge, Doctor, Group, Hospital,
    Message, ThreadKind, ThreadStatus,
};
use crate::hlc::HlcTimestamp;
use crate::ids::{DoctorId, GroupId, ServerId, ThreadId};

/// Stored password verifier for an account. Opaque to the engine; the API
/// layer produces and checks it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub scheme: String,
    pub verifier: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub doctor: Doctor,
    #[serde(default)]
    pub credential: Option<Credential>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadRecord {
    pub id: ThreadId,
    pub kind: ThreadKind,
    pub creator: DoctorId,
    #[serde(default)]
    pub case_form: Option<CaseForm>,
    /// Metadata for attachments referenced by the case form.
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub message: Message,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub thread: ThreadId,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipRecord {
    pub doctor: DoctorId,
    pub group: GroupId,
    pub member: bool,
}

/// Status change; escalation also rewrites the thread kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub thread: ThreadId,
    pub status: ThreadStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ThreadKind>,
    pub actor: DoctorId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventPayload {
    UserCreated(UserRecord),
    HospitalCreated(Hospital),
    GroupCreated(Group),
    MembershipChanged(MembershipRecord),
    EdgeAdded(ColleagueEdge),
    EdgeRemoved(ColleagueEdge),
    ThreadCreated(ThreadRecord),
    MessageAdded(MessageRecord),
    AssignmentAdded(AssignmentRecord),
    StatusChanged(StatusRecord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    UserCreated,
    HospitalCreated,
    GroupCreated,
    MembershipChanged,
    EdgeAdded,
    EdgeRemoved,
    ThreadCreated,
    MessageAdded,
    AssignmentAdded,
    StatusChanged,
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            Self::UserCreated(_) => EventKind::UserCreated,
            Self::HospitalCreated(_) => EventKind::HospitalCreated,
            Self::GroupCreated(_) => EventKind::GroupCreated,
            Self::MembershipChanged(_) => EventKind::MembershipChanged,
            Self::EdgeAdded(_) => EventKind::EdgeAdded,
            Self::EdgeRemoved(_) => EventKind::EdgeRemoved,
            Self::ThreadCreated(_) => EventKind::ThreadCreated,
            Self::MessageAdded(_) => EventKind::MessageAdded,
            Self::AssignmentAdded(_) => EventKind::AssignmentAdded,
            Self::StatusChanged(_) => EventKind::StatusChanged,
        }
    }

    /// The thread an event belongs to, for thread-scoped events.
    pub fn thread(&self) -> Option<&ThreadId> {
        match self {
            Self::ThreadCreated(t) => Some(&t.id),
            Self::MessageAdded(m) => Some(&m.message.thread),
            Self::AssignmentAdded(a) => Some(&a.thread),
            Self::StatusChanged(s) => Some(&s.thread),
            _ => None,
        }
    }

    /// The doctor who performed the action, when the event records one.
    pub fn author(&self) -> Option<&DoctorId> {
        match self {
            Self::ThreadCreated(t) => Some(&t.creator),
            Self::MessageAdded(m) => Some(&m.message.author),
            Self::AssignmentAdded(a) => Some(&a.assignment.assigned_by),
            Self::StatusChanged(s) => Some(&s.actor),
            Self::EdgeAdded(e) | Self::EdgeRemoved(e) => Some(&e.from),
            _ => None,
        }
    }
}

/// `(origin, seq)`: the identity of an event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId {
    pub origin: ServerId,
    pub seq: u64,
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub origin: ServerId,
    pub seq: u64,
    pub at: HlcTimestamp,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MalformedEvent {
    #[error("event {0} has sequence number 0")]
    ZeroSeq(EventId),
    #[error("event {0} is stamped by server {1}, not its origin")]
    ForeignStamp(EventId, ServerId),
    #[error("event {0} violates its payload shape: {1}")]
    Payload(EventId, String),
}

impl Event {
    pub fn id(&self) -> EventId {
        EventId {
            origin: self.origin.clone(),
            seq: self.seq,
        }
    }

    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    /// Structural checks that do not depend on replica state.
    pub fn check_well_formed(&self) -> Result<(), MalformedEvent> {
        if self.seq == 0 {
            return Err(MalformedEvent::ZeroSeq(self.id()));
        }
        if self.at.server_id != self.origin {
            return Err(MalformedEvent::ForeignStamp(self.id(), self.at.server_id.clone()));
        }
        let bad = |why: &str| Err(MalformedEvent::Payload(self.id(), why.to_owned()));
        match &self.payload {
            EventPayload::ThreadCreated(t) => {
                if !validate_case_form(t.case_form.as_ref(), t.kind).is_empty() {
                    return bad("case form does not match thread kind");
                }
            }
            EventPayload::StatusChanged(s) => match (s.status, s.kind) {
                (ThreadStatus::Escalated, Some(ThreadKind::Referral)) => {}
                (ThreadStatus::Escalated, _) => return bad("escalation must rewrite kind to referral"),
                (_, Some(_)) => return bad("only escalation rewrites thread kind"),
                _ => {}
            },
            EventPayload::EdgeAdded(e) | EventPayload::EdgeRemoved(e) if e.from == e.to => {
                return bad("self edge");
            }
            EventPayload::GroupCreated(g) if !g.affiliation_matches_kind() => {
                return bad("group affiliation does not match kind");
            }
            _ => {}
        }
        Ok(())
    }
}

/// Per-origin high-water mark of contiguously applied sequence numbers.
/// Missing entries read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionVector(BTreeMap<ServerId, u64>);

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, origin: &ServerId) -> u64 {
        self.0.get(origin).copied().unwrap_or(0)
    }

    /// Raises the entry for `origin` to `seq`; never lowers it.
    pub fn advance(&mut self, origin: &ServerId, seq: u64) {
        if seq == 0 {
            return;
        }
        let entry = self.0.entry(origin.clone()).or_insert(0);
        *entry = (*entry).max(seq);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ServerId, u64)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every entry of `other` is covered by `self`.
    pub fn dominates(&self, other: &VersionVector) -> bool {
        other.iter().all(|(origin, seq)| self.get(origin) >= seq)
    }

    pub fn merge(&mut self, other: &VersionVector) {
        for (origin, seq) in other.iter() {
            self.advance(origin, seq);
        }
    }

    /// Sum of all entries: the number of events the vector accounts for.
    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }
}

impl FromIterator<(ServerId, u64)> for VersionVector {
    fn from_iter<I: IntoIterator<Item = (ServerId, u64)>>(iter: I) -> Self {
        let mut vv = Self::new();
        for (origin, seq) in iter {
            vv.advance(&origin, seq);
        }
        vv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgeBand, Sex};

    fn event(payload: EventPayload) -> Event {
        Event {
            origin: "S".into(),
            seq: 1,
            at: HlcTimestamp::new(5, 0, "S"),
            payload,
        }
    }

    #[test]
    fn wire_form_has_kind_and_payload() {
        let e = event(EventPayload::EdgeAdded(ColleagueEdge {
            from: "a".into(),
            to: "b".into(),
        }));
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "origin": "S", "seq": 1, "at": "5:0:S",
                "kind": "EdgeAdded", "payload": {"from": "a", "to": "b"}
            })
        );
        let back: Event = serde_json::from_value(json).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn well_formedness() {
        let mut e = event(EventPayload::StatusChanged(StatusRecord {
            thread: "t".into(),
            status: ThreadStatus::Escalated,
            kind: None,
            actor: "a".into(),
        }));
        assert!(e.check_well_formed().is_err());
        if let EventPayload::StatusChanged(s) = &mut e.payload {
            s.kind = Some(ThreadKind::Referral);
        }
        assert!(e.check_well_formed().is_ok());
        e.seq = 0;
        assert!(matches!(e.check_well_formed(), Err(MalformedEvent::ZeroSeq(_))));
        e.seq = 1;
        e.at.server_id = "R".into();
        assert!(matches!(e.check_well_formed(), Err(MalformedEvent::ForeignStamp(..))));

        let discussion_with_form = event(EventPayload::ThreadCreated(ThreadRecord {
            id: "t".into(),
            kind: ThreadKind::Discussion,
            creator: "a".into(),
            case_form: Some(CaseForm {
                age_band: AgeBand::Thirties,
                sex: Sex::Female,
                clinical_history: "x".into(),
                specialization_requested: None,
                attachments: vec![],
            }),
            attachments: vec![],
        }));
        assert!(discussion_with_form.check_well_formed().is_err());

        let self_edge = event(EventPayload::EdgeAdded(ColleagueEdge {
            from: "a".into(),
            to: "a".into(),
        }));
        assert!(self_edge.check_well_formed().is_err());
    }

    #[test]
    fn version_vector_is_monotone() {
        let mut vv = VersionVector::new();
        let s = ServerId::from("S");
        vv.advance(&s, 3);
        vv.advance(&s, 1);
        assert_eq!(vv.get(&s), 3);
        assert_eq!(vv.get(&"R".into()), 0);
        assert_eq!(serde_json::to_string(&vv).unwrap(), r#"{"S":3}"#);
        let other: VersionVector = [("R".into(), 5), ("S".into(), 2)].into_iter().collect();
        assert!(!vv.dominates(&other));
        vv.merge(&other);
        assert!(vv.dominates(&other));
        assert_eq!(vv.total(), 8);
    }
}
