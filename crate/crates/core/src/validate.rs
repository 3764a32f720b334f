//! Commit-time checks of a payload against the local replica state.
//!
//! Remote events are not re-validated on apply: the origin validated them
//! against its own view, and the fold parks anything that still dangles.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::domain::{
    validate_case_form, validate_hierarchy, Affiliation, AssignmentTarget, FormViolation,
    HierarchyViolation, ThreadStatus,
};
use crate::event::EventPayload;
use crate::ids::{AttachmentId, DoctorId, GroupId, HospitalId, Specialty, ThreadId};
use crate::state::State;
use crate::stub::StubNotice;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(rename_all = "snake_case", tag = "rule", content = "subject")]
pub enum Violation {
    #[error("unknown hospital {0}")]
    UnknownHospital(HospitalId),
    #[error("unknown doctor {0}")]
    UnknownDoctor(DoctorId),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("unknown thread {0}")]
    UnknownThread(ThreadId),
    #[error("unknown attachment {0}")]
    UnknownAttachment(AttachmentId),
    #[error("hospital {0} already exists")]
    DuplicateHospital(HospitalId),
    #[error("doctor {0} already exists")]
    DuplicateDoctor(DoctorId),
    #[error("group {0} already exists")]
    DuplicateGroup(GroupId),
    #[error("thread {0} already exists")]
    DuplicateThread(ThreadId),
    #[error("hierarchy rule {:?} broken at {}", .0.rule, .0.hospital)]
    Hierarchy(HierarchyViolation),
    #[error("case form: {0:?}")]
    Form(FormViolation),
    #[error("a doctor cannot list themselves as a colleague")]
    SelfEdge,
    #[error("group affiliation does not match its kind")]
    AffiliationMismatch,
    #[error("hospital {hospital} has no {specialty} department")]
    UnknownDepartment {
        hospital: HospitalId,
        specialty: Specialty,
    },
    #[error("escalation must set kind referral and status escalated together")]
    EscalationShape,
}

/// Everything wrong with `payload` if it were committed on top of `state`.
/// Stub threads count as existing for thread-scoped events.
pub fn validate_payload(
    state: &State,
    stubs: &BTreeMap<ThreadId, StubNotice>,
    payload: &EventPayload,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let doctor = |id: &DoctorId, out: &mut Vec<Violation>| {
        if !state.doctors.contains_key(id) {
            out.push(Violation::UnknownDoctor(id.clone()));
        }
    };
    let thread = |id: &ThreadId, out: &mut Vec<Violation>| {
        if !state.threads.contains_key(id) && !stubs.contains_key(id) {
            out.push(Violation::UnknownThread(id.clone()));
        }
    };
    let attachments = |ids: &[AttachmentId], described: &[crate::domain::Attachment], out: &mut Vec<Violation>| {
        let described: BTreeSet<_> = described.iter().map(|a| &a.id).collect();
        for id in ids {
            if !described.contains(id) && !state.attachments.contains_key(id) {
                out.push(Violation::UnknownAttachment(id.clone()));
            }
        }
    };

    match payload {
        EventPayload::HospitalCreated(h) => {
            if state.hospitals.contains_key(&h.id) {
                out.push(Violation::DuplicateHospital(h.id.clone()));
                return out;
            }
            let existing: Vec<_> = state.hospitals.values().cloned().collect();
            let before: BTreeSet<_> = validate_hierarchy(&existing).into_iter().collect();
            let mut with_new = existing;
            with_new.push(h.clone());
            out.extend(
                validate_hierarchy(&with_new)
                    .into_iter()
                    .filter(|v| !before.contains(v))
                    .map(Violation::Hierarchy),
            );
        }
        EventPayload::UserCreated(u) => {
            if state.doctors.contains_key(&u.doctor.id) {
                out.push(Violation::DuplicateDoctor(u.doctor.id.clone()));
            }
            if !state.hospitals.contains_key(&u.doctor.hospital) {
                out.push(Violation::UnknownHospital(u.doctor.hospital.clone()));
            }
        }
        EventPayload::GroupCreated(g) => {
            if state.groups.contains_key(&g.id) {
                out.push(Violation::DuplicateGroup(g.id.clone()));
            }
            if !g.affiliation_matches_kind() {
                out.push(Violation::AffiliationMismatch);
            }
            if let Some(Affiliation::Hospital(h)) = &g.affiliation {
                if !state.hospitals.contains_key(h) {
                    out.push(Violation::UnknownHospital(h.clone()));
                }
            }
            for m in &g.members {
                doctor(m, &mut out);
            }
        }
        EventPayload::MembershipChanged(m) => {
            doctor(&m.doctor, &mut out);
            if !state.groups.contains_key(&m.group) {
                out.push(Violation::UnknownGroup(m.group.clone()));
            }
        }
        EventPayload::EdgeAdded(e) | EventPayload::EdgeRemoved(e) => {
            if e.from == e.to {
                out.push(Violation::SelfEdge);
            }
            doctor(&e.from, &mut out);
            doctor(&e.to, &mut out);
        }
        EventPayload::ThreadCreated(t) => {
            if state.threads.contains_key(&t.id) || stubs.contains_key(&t.id) {
                out.push(Violation::DuplicateThread(t.id.clone()));
            }
            doctor(&t.creator, &mut out);
            out.extend(
                validate_case_form(t.case_form.as_ref(), t.kind)
                    .into_iter()
                    .map(Violation::Form),
            );
            if let Some(form) = &t.case_form {
                attachments(&form.attachments, &t.attachments, &mut out);
            }
        }
        EventPayload::MessageAdded(m) => {
            thread(&m.message.thread, &mut out);
            doctor(&m.message.author, &mut out);
            attachments(&m.message.attachments, &m.attachments, &mut out);
        }
        EventPayload::AssignmentAdded(a) => {
            thread(&a.thread, &mut out);
            doctor(&a.assignment.assigned_by, &mut out);
            match &a.assignment.target {
                AssignmentTarget::Doctor(d) => doctor(d, &mut out),
                AssignmentTarget::Group(g) => {
                    if !state.groups.contains_key(g) {
                        out.push(Violation::UnknownGroup(g.clone()));
                    }
                }
                AssignmentTarget::Department {
                    hospital,
                    specialty,
                } => match state.hospitals.get(hospital) {
                    None => out.push(Violation::UnknownHospital(hospital.clone())),
                    Some(h) if !h.departments.contains(specialty) => {
                        out.push(Violation::UnknownDepartment {
                            hospital: hospital.clone(),
                            specialty: specialty.clone(),
                        })
                    }
                    Some(_) => {}
                },
            }
        }
        EventPayload::StatusChanged(s) => {
            thread(&s.thread, &mut out);
            doctor(&s.actor, &mut out);
            let escalating = s.status == ThreadStatus::Escalated;
            if escalating != s.kind.is_some() {
                out.push(Violation::EscalationShape);
            }
        }
    }
    out
}
