//! Consultant selection and the mutations that route cases: colleague
//! edges, group membership, thread creation, assignment and escalation.
//!
//! Mutations commit through the replica; queries read a state snapshot.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{
    is_other_for, is_primary_for, referral_chain, Assignment, AssignmentTarget, Attachment,
    CaseForm, ColleagueEdge, GroupKind, Affiliation, Message, Thread, ThreadKind, ThreadStatus,
};
use crate::event::{
    AssignmentRecord, Event, EventPayload, MembershipRecord, MessageRecord, StatusRecord,
    ThreadRecord,
};
use crate::ids::{CountryCode, DoctorId, GroupId, HospitalId, Specialty, ThreadId};
use crate::replica::{CommitError, Replica};
use crate::state::State;

#[derive(Debug, thiserror::Error)]
pub enum RoutingError {
    #[error("unknown doctor {0}")]
    UnknownDoctor(DoctorId),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("unknown thread {0}")]
    UnknownThread(ThreadId),
    #[error("a doctor cannot list themselves as a colleague")]
    SelfEdge,
    #[error("{actor} may not {action} thread {thread}")]
    Unauthorized {
        actor: DoctorId,
        thread: ThreadId,
        action: &'static str,
    },
    #[error("thread {thread} is a {kind:?} and cannot be escalated")]
    NotEscalatable { thread: ThreadId, kind: ThreadKind },
    #[error(transparent)]
    Commit(#[from] CommitError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColleagueCandidate {
    pub doctor: DoctorId,
    pub display_name: String,
    pub specialties: BTreeSet<Specialty>,
    pub hospital: HospitalId,
    pub country: CountryCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCandidate {
    pub group: GroupId,
    pub name: String,
    pub kind: GroupKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DepartmentCandidate {
    pub hospital: HospitalId,
    pub specialty: Specialty,
}

/// The three side-by-side lists offered when choosing a consultant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub colleagues: Vec<ColleagueCandidate>,
    pub groups: Vec<GroupCandidate>,
    pub departments: Vec<DepartmentCandidate>,
}

/// Colleagues are the user's out-neighbours (listing `filter`, if given),
/// same country first, then by name. Groups are all groups, specialty
/// groups for `filter` first, then by name. Departments walk the user's
/// referral chain nearest first.
pub fn candidate_consultants(
    state: &State,
    user: &DoctorId,
    filter: Option<&Specialty>,
) -> Result<CandidateSet, RoutingError> {
    let me = state
        .doctors
        .get(user)
        .ok_or_else(|| RoutingError::UnknownDoctor(user.clone()))?;

    let mut colleagues: Vec<ColleagueCandidate> = state
        .out_neighbors(user)
        .filter_map(|id| state.doctors.get(id))
        .filter(|d| filter.is_none_or(|s| d.specialties.contains(s)))
        .map(|d| ColleagueCandidate {
            doctor: d.id.clone(),
            display_name: d.display_name.clone(),
            specialties: d.specialties.clone(),
            hospital: d.hospital.clone(),
            country: d.country.clone(),
        })
        .collect();
    colleagues.sort_by(|a, b| {
        (a.country != me.country, &a.display_name, &a.doctor).cmp(&(
            b.country != me.country,
            &b.display_name,
            &b.doctor,
        ))
    });

    let matches_filter = |kind: GroupKind, affiliation: &Option<Affiliation>| {
        kind == GroupKind::Specialty
            && matches!((affiliation, filter), (Some(Affiliation::Specialty(a)), Some(f)) if a == f)
    };
    let mut groups: Vec<(bool, GroupCandidate)> = state
        .groups
        .values()
        .map(|g| {
            (
                !matches_filter(g.kind, &g.affiliation),
                GroupCandidate {
                    group: g.id.clone(),
                    name: g.name.clone(),
                    kind: g.kind,
                },
            )
        })
        .collect();
    groups.sort_by(|(ra, a), (rb, b)| (ra, &a.name, &a.group).cmp(&(rb, &b.name, &b.group)));

    let mut seen = BTreeSet::new();
    let departments = referral_chain(&me.hospital, &state.hospitals)
        .into_iter()
        .flat_map(|h| {
            h.departments.iter().map(|s| DepartmentCandidate {
                hospital: h.id.clone(),
                specialty: s.clone(),
            })
        })
        .filter(|d| seen.insert(d.clone()))
        .collect();

    Ok(CandidateSet {
        colleagues,
        groups: groups.into_iter().map(|(_, g)| g).collect(),
        departments,
    })
}

/// Creator, a direct or department assignee, or a member of an assigned
/// group. Stub threads admit only their creator.
pub fn is_participant(replica: &Replica, thread: &ThreadId, user: &DoctorId) -> Result<bool, RoutingError> {
    let state = replica.state();
    if let Some(t) = state.threads.get(thread) {
        let Some(doctor) = state.doctors.get(user) else {
            return Ok(false);
        };
        return Ok(is_primary_for(t, doctor) || is_other_for(t, user, &state.groups));
    }
    replica
        .stubs()
        .find(|s| s.thread == *thread)
        .map(|s| s.creator == *user)
        .ok_or_else(|| RoutingError::UnknownThread(thread.clone()))
}

fn known_thread(replica: &Replica, id: &ThreadId) -> Result<Thread, RoutingError> {
    if let Some(t) = replica.state().threads.get(id) {
        return Ok(t.clone());
    }
    replica
        .stub_threads()
        .into_iter()
        .find(|t| t.id == *id)
        .ok_or_else(|| RoutingError::UnknownThread(id.clone()))
}

fn require_doctor(state: &State, id: &DoctorId) -> Result<(), RoutingError> {
    if state.doctors.contains_key(id) {
        Ok(())
    } else {
        Err(RoutingError::UnknownDoctor(id.clone()))
    }
}

pub fn set_colleague(
    replica: &mut Replica,
    from: &DoctorId,
    to: &DoctorId,
    present: bool,
    wall_ms: u64,
) -> Result<Event, RoutingError> {
    if from == to {
        return Err(RoutingError::SelfEdge);
    }
    let state = replica.state();
    require_doctor(&state, from)?;
    require_doctor(&state, to)?;
    let edge = ColleagueEdge {
        from: from.clone(),
        to: to.clone(),
    };
    let payload = if present {
        EventPayload::EdgeAdded(edge)
    } else {
        EventPayload::EdgeRemoved(edge)
    };
    Ok(replica.commit(payload, wall_ms)?)
}

pub fn set_membership(
    replica: &mut Replica,
    doctor: &DoctorId,
    group: &GroupId,
    member: bool,
    wall_ms: u64,
) -> Result<Event, RoutingError> {
    let state = replica.state();
    require_doctor(&state, doctor)?;
    if !state.groups.contains_key(group) {
        return Err(RoutingError::UnknownGroup(group.clone()));
    }
    let payload = EventPayload::MembershipChanged(MembershipRecord {
        doctor: doctor.clone(),
        group: group.clone(),
        member,
    });
    Ok(replica.commit(payload, wall_ms)?)
}

pub struct NewThread {
    pub kind: ThreadKind,
    pub creator: DoctorId,
    pub case_form: Option<CaseForm>,
    pub attachments: Vec<Attachment>,
}

pub fn create_thread(
    replica: &mut Replica,
    new: NewThread,
    wall_ms: u64,
) -> Result<Event, RoutingError> {
    require_doctor(&replica.state(), &new.creator)?;
    let id = ThreadId::new(replica.mint_id("t"));
    let payload = EventPayload::ThreadCreated(ThreadRecord {
        id,
        kind: new.kind,
        creator: new.creator,
        case_form: new.case_form,
        attachments: new.attachments,
    });
    Ok(replica.commit(payload, wall_ms)?)
}

pub fn post_message(
    replica: &mut Replica,
    thread: &ThreadId,
    author: &DoctorId,
    body: String,
    attachments: Vec<Attachment>,
    wall_ms: u64,
) -> Result<Event, RoutingError> {
    if !is_participant(replica, thread, author)? {
        return Err(RoutingError::Unauthorized {
            actor: author.clone(),
            thread: thread.clone(),
            action: "reply to",
        });
    }
    let id = replica.mint_id("m").into();
    let event = replica.commit_with(wall_ms, |at| {
        EventPayload::MessageAdded(MessageRecord {
            message: Message {
                id,
                thread: thread.clone(),
                author: author.clone(),
                body,
                attachments: attachments.iter().map(|a| a.id.clone()).collect(),
                at: at.clone(),
            },
            attachments,
        })
    })?;
    Ok(event)
}

pub fn assign_thread(
    replica: &mut Replica,
    thread: &ThreadId,
    target: AssignmentTarget,
    actor: &DoctorId,
    wall_ms: u64,
) -> Result<Event, RoutingError> {
    if !is_participant(replica, thread, actor)? {
        return Err(RoutingError::Unauthorized {
            actor: actor.clone(),
            thread: thread.clone(),
            action: "assign",
        });
    }
    let event = replica.commit_with(wall_ms, |at| {
        EventPayload::AssignmentAdded(AssignmentRecord {
            thread: thread.clone(),
            assignment: Assignment {
                target,
                assigned_by: actor.clone(),
                at: at.clone(),
            },
        })
    })?;
    Ok(event)
}

/// Consultation to referral, by the creator only. One-way.
pub fn escalate_thread(
    replica: &mut Replica,
    thread: &ThreadId,
    actor: &DoctorId,
    wall_ms: u64,
) -> Result<Event, RoutingError> {
    let t = known_thread(replica, thread)?;
    if t.creator != *actor {
        return Err(RoutingError::Unauthorized {
            actor: actor.clone(),
            thread: thread.clone(),
            action: "escalate",
        });
    }
    if t.kind != ThreadKind::Consultation {
        return Err(RoutingError::NotEscalatable {
            thread: thread.clone(),
            kind: t.kind,
        });
    }
    let payload = EventPayload::StatusChanged(StatusRecord {
        thread: thread.clone(),
        status: ThreadStatus::Escalated,
        kind: Some(ThreadKind::Referral),
        actor: actor.clone(),
    });
    Ok(replica.commit(payload, wall_ms)?)
}
