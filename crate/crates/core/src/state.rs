//! Deterministic fold of an event set into domain state.
//!
//! Entity records are applied first (hospitals, users, groups, threads),
//! then everything else in HLC order. Mutable fields (thread status and
//! kind, group membership, colleague edges) are last-writer-wins registers
//! keyed by HLC, whose order already breaks ties on server id. Messages are
//! append-only and ordered by `(at, id)`. The result depends only on the
//! set of events, never on their arrival order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    partition_cases, ActiveThread, Attachment, CaseLists, CasesError, ColleagueEdge, Doctor, Group,
    Hospital, Message, Thread, ThreadKind, ThreadStatus,
};
use crate::event::{Credential, Event, EventId, EventPayload};
use crate::hlc::HlcTimestamp;
use crate::ids::{AttachmentId, DoctorId, GroupId, HospitalId, ThreadId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParkReason {
    UnknownHospital(HospitalId),
    UnknownDoctor(DoctorId),
    UnknownGroup(GroupId),
    UnknownThread(ThreadId),
    DuplicateThread(ThreadId),
}

/// An event that could not be folded because it references something the
/// event set does not contain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParkedEvent {
    pub event: EventId,
    pub reason: ParkReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub hospitals: BTreeMap<HospitalId, Hospital>,
    pub doctors: BTreeMap<DoctorId, Doctor>,
    pub credentials: BTreeMap<DoctorId, Credential>,
    pub groups: BTreeMap<GroupId, Group>,
    pub edges: BTreeSet<ColleagueEdge>,
    pub threads: BTreeMap<ThreadId, Thread>,
    pub messages: BTreeMap<ThreadId, Vec<Message>>,
    pub attachments: BTreeMap<AttachmentId, Attachment>,
    /// Latest activity per thread: creation or newest message.
    pub activity: BTreeMap<ThreadId, HlcTimestamp>,
    pub parked: Vec<ParkedEvent>,
}

fn entity_rank(payload: &EventPayload) -> Option<u8> {
    match payload {
        EventPayload::HospitalCreated(_) => Some(0),
        EventPayload::UserCreated(_) => Some(1),
        EventPayload::GroupCreated(_) => Some(2),
        EventPayload::ThreadCreated(_) => Some(3),
        _ => None,
    }
}

/// Last-writer-wins register.
struct Lww<T> {
    value: T,
    at: HlcTimestamp,
}

fn lww_set<K: Ord, T>(map: &mut BTreeMap<K, Lww<T>>, key: K, value: T, at: &HlcTimestamp) {
    match map.get_mut(&key) {
        Some(reg) if reg.at >= *at => {}
        Some(reg) => {
            reg.value = value;
            reg.at = at.clone();
        }
        None => {
            map.insert(
                key,
                Lww {
                    value,
                    at: at.clone(),
                },
            );
        }
    }
}

pub fn materialize<'a>(events: impl IntoIterator<Item = &'a Event>) -> State {
    let mut entities = Vec::new();
    let mut updates = Vec::new();
    for e in events {
        match entity_rank(&e.payload) {
            Some(rank) => entities.push((rank, e)),
            None => updates.push(e),
        }
    }
    entities.sort_by(|(ra, a), (rb, b)| (ra, &a.at, a.id()).cmp(&(rb, &b.at, b.id())));
    updates.sort_by(|a, b| (&a.at, a.id()).cmp(&(&b.at, b.id())));

    let mut state = State::default();
    let mut membership: BTreeMap<(GroupId, DoctorId), Lww<bool>> = BTreeMap::new();
    let mut edges: BTreeMap<ColleagueEdge, Lww<bool>> = BTreeMap::new();
    let mut status: BTreeMap<ThreadId, Lww<ThreadStatus>> = BTreeMap::new();
    let mut kind: BTreeMap<ThreadId, Lww<ThreadKind>> = BTreeMap::new();
    let mut parked = Vec::new();

    for (_, e) in entities {
        match &e.payload {
            EventPayload::HospitalCreated(h) => {
                state.hospitals.insert(h.id.clone(), h.clone());
            }
            EventPayload::UserCreated(u) => {
                if !state.hospitals.contains_key(&u.doctor.hospital) {
                    parked.push(parked_event(e, ParkReason::UnknownHospital(u.doctor.hospital.clone())));
                    continue;
                }
                let id = u.doctor.id.clone();
                match &u.credential {
                    Some(c) => state.credentials.insert(id.clone(), c.clone()),
                    None => state.credentials.remove(&id),
                };
                state.doctors.insert(id, u.doctor.clone());
            }
            EventPayload::GroupCreated(g) => {
                for m in &g.members {
                    lww_set(&mut membership, (g.id.clone(), m.clone()), true, &e.at);
                }
                let mut record = g.clone();
                record.members.clear();
                state.groups.insert(g.id.clone(), record);
            }
            EventPayload::ThreadCreated(t) => {
                if !state.doctors.contains_key(&t.creator) {
                    parked.push(parked_event(e, ParkReason::UnknownDoctor(t.creator.clone())));
                    continue;
                }
                if state.threads.contains_key(&t.id) {
                    parked.push(parked_event(e, ParkReason::DuplicateThread(t.id.clone())));
                    continue;
                }
                for a in &t.attachments {
                    state.attachments.insert(a.id.clone(), a.clone());
                }
                status.insert(
                    t.id.clone(),
                    Lww {
                        value: ThreadStatus::Open,
                        at: e.at.clone(),
                    },
                );
                kind.insert(
                    t.id.clone(),
                    Lww {
                        value: t.kind,
                        at: e.at.clone(),
                    },
                );
                state.threads.insert(
                    t.id.clone(),
                    Thread {
                        id: t.id.clone(),
                        kind: t.kind,
                        creator: t.creator.clone(),
                        created_at: e.at.clone(),
                        case_form: t.case_form.clone(),
                        assignments: Vec::new(),
                        status: ThreadStatus::Open,
                        stub: false,
                        stub_specialization: None,
                    },
                );
            }
            _ => unreachable!("entity_rank admits only entity events"),
        }
    }

    for e in updates {
        match &e.payload {
            EventPayload::MembershipChanged(m) => {
                if !state.groups.contains_key(&m.group) {
                    parked.push(parked_event(e, ParkReason::UnknownGroup(m.group.clone())));
                } else if !state.doctors.contains_key(&m.doctor) {
                    parked.push(parked_event(e, ParkReason::UnknownDoctor(m.doctor.clone())));
                } else {
                    lww_set(&mut membership, (m.group.clone(), m.doctor.clone()), m.member, &e.at);
                }
            }
            EventPayload::EdgeAdded(edge) | EventPayload::EdgeRemoved(edge) => {
                let present = matches!(e.payload, EventPayload::EdgeAdded(_));
                if let Some(missing) = [&edge.from, &edge.to]
                    .into_iter()
                    .find(|d| !state.doctors.contains_key(*d))
                {
                    parked.push(parked_event(e, ParkReason::UnknownDoctor(missing.clone())));
                } else {
                    lww_set(&mut edges, edge.clone(), present, &e.at);
                }
            }
            EventPayload::MessageAdded(m) => {
                if !state.threads.contains_key(&m.message.thread) {
                    parked.push(parked_event(e, ParkReason::UnknownThread(m.message.thread.clone())));
                    continue;
                }
                for a in &m.attachments {
                    state.attachments.insert(a.id.clone(), a.clone());
                }
                state
                    .messages
                    .entry(m.message.thread.clone())
                    .or_default()
                    .push(m.message.clone());
            }
            EventPayload::AssignmentAdded(a) => match state.threads.get_mut(&a.thread) {
                Some(t) => t.assignments.push(a.assignment.clone()),
                None => parked.push(parked_event(e, ParkReason::UnknownThread(a.thread.clone()))),
            },
            EventPayload::StatusChanged(s) => {
                if !state.threads.contains_key(&s.thread) {
                    parked.push(parked_event(e, ParkReason::UnknownThread(s.thread.clone())));
                    continue;
                }
                lww_set(&mut status, s.thread.clone(), s.status, &e.at);
                if let Some(k) = s.kind {
                    lww_set(&mut kind, s.thread.clone(), k, &e.at);
                }
            }
            _ => unreachable!("entity events are folded in the first pass"),
        }
    }

    for ((group, doctor), reg) in membership {
        if reg.value && state.doctors.contains_key(&doctor) {
            if let Some(g) = state.groups.get_mut(&group) {
                g.members.insert(doctor);
            }
        }
    }
    state.edges = edges
        .into_iter()
        .filter(|(_, reg)| reg.value)
        .map(|(edge, _)| edge)
        .collect();
    for (id, t) in state.threads.iter_mut() {
        t.status = status[id].value;
        t.kind = kind[id].value;
        let mut latest = t.created_at.clone();
        if let Some(msgs) = state.messages.get_mut(id) {
            msgs.sort_by(|a, b| (&a.at, &a.id).cmp(&(&b.at, &b.id)));
            if let Some(last) = msgs.last() {
                latest = latest.max(last.at.clone());
            }
        }
        state.activity.insert(id.clone(), latest);
    }
    parked.sort();
    state.parked = parked;
    state
}

fn parked_event(e: &Event, reason: ParkReason) -> ParkedEvent {
    ParkedEvent {
        event: e.id(),
        reason,
    }
}

impl State {
    pub fn active_threads(&self) -> impl Iterator<Item = ActiveThread<'_>> {
        self.threads.values().map(|t| ActiveThread {
            thread: t,
            last_activity: &self.activity[&t.id],
        })
    }

    pub fn case_lists(&self, user: &DoctorId) -> Result<CaseLists, CasesError> {
        partition_cases(user, &self.doctors, self.active_threads(), &self.groups)
    }

    pub fn messages(&self, thread: &ThreadId) -> &[Message] {
        self.messages.get(thread).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn out_neighbors<'a>(&'a self, doctor: &'a DoctorId) -> impl Iterator<Item = &'a DoctorId> {
        self.edges
            .iter()
            .filter(move |e| e.from == *doctor)
            .map(|e| &e.to)
    }

    /// Serialization with sorted keys throughout; equal event sets give
    /// byte-identical output.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn canonical_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
