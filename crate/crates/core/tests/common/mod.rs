#![allow(dead_code)]

use std::collections::BTreeSet;

use medsync_core::domain::{
    Affiliation, AgeBand, CaseForm, Contact, Doctor, Group, GroupKind, Hospital, HospitalTier,
    Seniority, Sex,
};
use medsync_core::event::UserRecord;
use medsync_core::{EventPayload, Replica};

pub fn hospital(id: &str, tier: HospitalTier, parent: Option<&str>, depts: &[&str]) -> Hospital {
    Hospital {
        id: id.into(),
        name: id.to_uppercase(),
        tier,
        region: "Central".into(),
        referral_parent: parent.map(Into::into),
        departments: depts.iter().map(|d| (*d).into()).collect(),
        country: None,
    }
}

pub fn doctor(id: &str, hospital: &str, country: &str, specialties: &[&str]) -> Doctor {
    Doctor {
        id: id.into(),
        display_name: format!("Dr {}", id.to_uppercase()),
        hospital: hospital.into(),
        specialties: specialties.iter().map(|s| (*s).into()).collect(),
        country: country.into(),
        seniority: if specialties.is_empty() {
            Seniority::Junior
        } else {
            Seniority::Specialist
        },
        contact: Contact {
            email: Some(format!("{id}@example.org")),
            phone: Some("+233200000000".into()),
        },
        is_admin: false,
    }
}

pub fn user(d: Doctor) -> EventPayload {
    EventPayload::UserCreated(UserRecord {
        doctor: d,
        credential: None,
    })
}

pub fn group(id: &str, kind: GroupKind, affiliation: Option<Affiliation>, members: &[&str]) -> Group {
    Group {
        id: id.into(),
        name: id.to_uppercase(),
        kind,
        affiliation,
        members: members.iter().map(|m| (*m).into()).collect::<BTreeSet<_>>(),
    }
}

pub fn form(specialty: Option<&str>) -> CaseForm {
    CaseForm {
        age_band: AgeBand::Forties,
        sex: Sex::Male,
        clinical_history: "three weeks of intermittent fever".into(),
        specialization_requested: specialty.map(Into::into),
        attachments: vec![],
    }
}

/// A three-tier public chain, one private hospital, five doctors and a
/// pediatrics specialty group:
///
/// ```text
/// dist (district) -> region (regional) -> teach (teaching)      priv (private)
/// ```
pub fn world() -> Vec<EventPayload> {
    vec![
        EventPayload::HospitalCreated(hospital(
            "teach",
            HospitalTier::Teaching,
            None,
            &["internal_medicine", "pediatrics", "surgery"],
        )),
        EventPayload::HospitalCreated(hospital(
            "region",
            HospitalTier::Regional,
            Some("teach"),
            &["pediatrics", "obstetrics"],
        )),
        EventPayload::HospitalCreated(hospital("dist", HospitalTier::District, Some("region"), &[])),
        EventPayload::HospitalCreated(hospital("priv", HospitalTier::Private, None, &["urology"])),
        user(doctor("ama", "dist", "GH", &[])),
        user(doctor("kofi", "region", "GH", &["pediatrics"])),
        user(doctor("esi", "teach", "GH", &["internal_medicine"])),
        user(doctor("john", "teach", "US", &["pediatrics"])),
        user(doctor("yaw", "priv", "GH", &["urology"])),
        EventPayload::GroupCreated(group(
            "peds",
            GroupKind::Specialty,
            Some(Affiliation::Specialty("pediatrics".into())),
            &["kofi", "john"],
        )),
    ]
}

pub fn seeded(server: &str) -> Replica {
    let mut r = Replica::in_memory(server, 0);
    for (i, p) in world().into_iter().enumerate() {
        r.commit(p, 1_000 + i as u64).expect("world commits");
    }
    r
}

use medsync_core::domain::{AssignmentTarget, ThreadKind};
use medsync_core::routing::{self, NewThread};
use medsync_core::{DoctorId, ThreadId};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const DOCTORS: [&str; 5] = ["ama", "kofi", "esi", "john", "yaw"];

/// Performs one random domain operation on `r`; operations the rules
/// reject are skipped. Returns whether something was committed.
pub fn random_op(r: &mut Replica, rng: &mut impl Rng, wall_ms: u64) -> bool {
    let pick = |rng: &mut dyn rand::RngCore| DoctorId::from(*DOCTORS.choose(rng).unwrap());
    let threads: Vec<ThreadId> = r.state().threads.keys().cloned().collect();
    let a = pick(rng);
    let b = pick(rng);
    let outcome = match rng.random_range(0..6) {
        0 => routing::set_colleague(r, &a, &b, rng.random_bool(0.7), wall_ms),
        1 => routing::set_membership(r, &a, &"peds".into(), rng.random_bool(0.5), wall_ms),
        2 => {
            let consult = rng.random_bool(0.6);
            routing::create_thread(
                r,
                NewThread {
                    kind: if consult {
                        ThreadKind::Consultation
                    } else {
                        ThreadKind::Discussion
                    },
                    creator: a,
                    case_form: consult.then(|| form(Some("pediatrics"))),
                    attachments: vec![],
                },
                wall_ms,
            )
        }
        3 | 4 if !threads.is_empty() => {
            let t = threads.choose(rng).unwrap().clone();
            let creator = r.state().threads[&t].creator.clone();
            if rng.random_bool(0.5) {
                routing::post_message(r, &t, &creator, format!("note at {wall_ms}"), vec![], wall_ms)
            } else {
                routing::assign_thread(r, &t, AssignmentTarget::Doctor(b), &creator, wall_ms)
            }
        }
        5 if !threads.is_empty() => {
            let t = threads.choose(rng).unwrap().clone();
            let creator = r.state().threads[&t].creator.clone();
            routing::escalate_thread(r, &t, &creator, wall_ms)
        }
        _ => return false,
    };
    outcome.is_ok()
}
