use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AssignmentTarget, Doctor, Group, Thread, ThreadKind, ThreadStatus};
use crate::hlc::HlcTimestamp;
use crate::ids::{DoctorId, GroupId, Specialty, ThreadId};

/// A thread together with its latest activity stamp (creation or newest message).
#[derive(Debug, Clone, Copy)]
pub struct ActiveThread<'a> {
    pub thread: &'a Thread,
    pub last_activity: &'a HlcTimestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub thread: ThreadId,
    pub kind: ThreadKind,
    pub status: ThreadStatus,
    pub creator: DoctorId,
    pub specialization: Option<Specialty>,
    pub stub: bool,
    pub last_activity: HlcTimestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseLists {
    pub primary: Vec<CaseEntry>,
    pub other: Vec<CaseEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CasesError {
    #[error("unknown user {0}")]
    UnknownUser(DoctorId),
}

/// Created by `user`, assigned directly to them, or assigned to a department
/// of their hospital in one of their specialties.
pub fn is_primary_for(thread: &Thread, user: &Doctor) -> bool {
    thread.creator == user.id
        || thread.assignments.iter().any(|a| match &a.target {
            AssignmentTarget::Doctor(d) => *d == user.id,
            AssignmentTarget::Department { hospital, specialty } => {
                *hospital == user.hospital && user.specialties.contains(specialty)
            }
            AssignmentTarget::Group(_) => false,
        })
}

/// Assigned to some group that `user` belongs to. Does not exclude primary.
pub fn is_other_for(thread: &Thread, user: &DoctorId, groups: &BTreeMap<GroupId, Group>) -> bool {
    thread.assignments.iter().any(|a| match &a.target {
        AssignmentTarget::Group(g) => groups.get(g).is_some_and(|g| g.members.contains(user)),
        _ => false,
    })
}

/// Splits threads into the user's primary and other case lists, each sorted
/// by latest activity (newest first), ties by thread id.
pub fn partition_cases<'a>(
    user: &DoctorId,
    doctors: &BTreeMap<DoctorId, Doctor>,
    threads: impl IntoIterator<Item = ActiveThread<'a>>,
    groups: &BTreeMap<GroupId, Group>,
) -> Result<CaseLists, CasesError> {
    let doctor = doctors
        .get(user)
        .ok_or_else(|| CasesError::UnknownUser(user.clone()))?;

    let mut lists = CaseLists::default();
    for active in threads {
        let t = active.thread;
        let bucket = if is_primary_for(t, doctor) {
            &mut lists.primary
        } else if is_other_for(t, user, groups) {
            &mut lists.other
        } else {
            continue;
        };
        bucket.push(CaseEntry {
            thread: t.id.clone(),
            kind: t.kind,
            status: t.status,
            creator: t.creator.clone(),
            specialization: t.specialization().cloned(),
            stub: t.stub,
            last_activity: active.last_activity.clone(),
        });
    }
    for list in [&mut lists.primary, &mut lists.other] {
        list.sort_by(|a, b| {
            b.last_activity
                .cmp(&a.last_activity)
                .then_with(|| a.thread.cmp(&b.thread))
        });
    }
    Ok(lists)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::domain::{Assignment, GroupKind, Seniority};
    use crate::ids::HospitalId;

    fn doctor(id: &str, hospital: &str, specialties: &[&str]) -> Doctor {
        Doctor {
            id: id.into(),
            display_name: id.to_uppercase(),
            hospital: hospital.into(),
            specialties: specialties.iter().map(|s| Specialty::from(*s)).collect(),
            country: "GH".into(),
            seniority: Seniority::Senior,
            contact: Default::default(),
            is_admin: false,
        }
    }

    fn thread(id: &str, creator: &str, ms: u64, targets: &[AssignmentTarget]) -> Thread {
        Thread {
            id: id.into(),
            kind: ThreadKind::Discussion,
            creator: creator.into(),
            created_at: HlcTimestamp::new(ms, 0, "S"),
            case_form: None,
            assignments: targets
                .iter()
                .map(|t| Assignment {
                    target: t.clone(),
                    assigned_by: creator.into(),
                    at: HlcTimestamp::new(ms, 1, "S"),
                })
                .collect(),
            status: ThreadStatus::Open,
            stub: false,
            stub_specialization: None,
        }
    }

    fn group(id: &str, members: &[&str]) -> Group {
        Group {
            id: id.into(),
            name: id.into(),
            kind: GroupKind::ProfessionalOrg,
            affiliation: None,
            members: members.iter().map(|m| DoctorId::from(*m)).collect(),
        }
    }

    fn run(user: &str, doctors: &[Doctor], threads: &[Thread], groups: &[Group]) -> CaseLists {
        let doctors: BTreeMap<_, _> = doctors.iter().map(|d| (d.id.clone(), d.clone())).collect();
        let groups: BTreeMap<_, _> = groups.iter().map(|g| (g.id.clone(), g.clone())).collect();
        let active = threads.iter().map(|t| ActiveThread {
            thread: t,
            last_activity: &t.created_at,
        });
        partition_cases(&user.into(), &doctors, active, &groups).unwrap()
    }

    fn ids(list: &[CaseEntry]) -> Vec<&str> {
        list.iter().map(|e| e.thread.as_str()).collect()
    }

    #[test]
    fn created_group_and_direct_assignments() {
        let docs = [doctor("U", "h1", &[]), doctor("V", "h1", &[])];
        let threads = [
            thread("T1", "U", 10, &[]),
            thread("T2", "V", 20, &[AssignmentTarget::Group("G".into())]),
            thread("T3", "V", 30, &[AssignmentTarget::Doctor("U".into())]),
        ];
        let lists = run("U", &docs, &threads, &[group("G", &["U"])]);
        assert_eq!(ids(&lists.primary), ["T3", "T1"]);
        assert_eq!(ids(&lists.other), ["T2"]);
    }

    #[test]
    fn user_without_threads_gets_empty_lists() {
        let lists = run("U", &[doctor("U", "h", &[])], &[], &[]);
        assert!(lists.primary.is_empty() && lists.other.is_empty());
    }

    #[test]
    fn unknown_user_is_an_error() {
        let err = partition_cases(
            &"nobody".into(),
            &BTreeMap::new(),
            std::iter::empty(),
            &BTreeMap::new(),
        )
        .unwrap_err();
        assert_eq!(err, CasesError::UnknownUser("nobody".into()));
    }

    #[test]
    fn department_assignment_reaches_matching_specialist_only() {
        let docs = [
            doctor("uro", "kbth", &["urology"]),
            doctor("peds", "kbth", &["pediatrics"]),
            doctor("uro_elsewhere", "kath", &["urology"]),
            doctor("C", "cc", &[]),
        ];
        let dept = AssignmentTarget::Department {
            hospital: HospitalId::from("kbth"),
            specialty: "urology".into(),
        };
        let threads = [thread("T", "C", 5, &[dept])];
        assert_eq!(ids(&run("uro", &docs, &threads, &[]).primary), ["T"]);
        assert!(run("peds", &docs, &threads, &[]).primary.is_empty());
        assert!(run("uro_elsewhere", &docs, &threads, &[]).primary.is_empty());
    }

    #[test]
    fn ties_break_on_thread_id() {
        let docs = [doctor("U", "h", &[])];
        let threads = [thread("b", "U", 7, &[]), thread("a", "U", 7, &[]), thread("c", "U", 9, &[])];
        let lists = run("U", &docs, &threads, &[]);
        assert_eq!(ids(&lists.primary), ["c", "a", "b"]);
    }

    /// Sixteen threads covering every combination of {creator, direct,
    /// group, department} relationships to the user; compared against the
    /// set-difference definition of the two buckets.
    #[test]
    fn sixteen_thread_fixture_matches_set_difference_oracle() {
        let docs = [doctor("U", "h", &["surgery"]), doctor("X", "h", &[])];
        let groups = [group("G", &["U"]), group("H", &["X"])];
        let mut threads = Vec::new();
        for mask in 0u8..16 {
            let creator = if mask & 1 != 0 { "U" } else { "X" };
            let mut targets = Vec::new();
            if mask & 2 != 0 {
                targets.push(AssignmentTarget::Doctor("U".into()));
            }
            if mask & 4 != 0 {
                targets.push(AssignmentTarget::Group("G".into()));
            } else {
                targets.push(AssignmentTarget::Group("H".into()));
            }
            if mask & 8 != 0 {
                targets.push(AssignmentTarget::Department {
                    hospital: "h".into(),
                    specialty: "surgery".into(),
                });
            }
            threads.push(thread(&format!("T{mask:02}"), creator, 100 + u64::from(mask), &targets));
        }
        let lists = run("U", &docs, &threads, &groups);

        let primary_oracle: BTreeSet<String> = (0u8..16)
            .filter(|m| m & 1 != 0 || m & 2 != 0 || m & 8 != 0)
            .map(|m| format!("T{m:02}"))
            .collect();
        let group_oracle: BTreeSet<String> =
            (0u8..16).filter(|m| m & 4 != 0).map(|m| format!("T{m:02}")).collect();
        let other_oracle: BTreeSet<String> =
            group_oracle.difference(&primary_oracle).cloned().collect();

        let primary: BTreeSet<String> = ids(&lists.primary).into_iter().map(String::from).collect();
        let other: BTreeSet<String> = ids(&lists.other).into_iter().map(String::from).collect();
        assert_eq!(primary, primary_oracle);
        assert_eq!(other, other_oracle);
        // thread assigned to both U and G: primary only
        assert!(primary.contains("T06") && !other.contains("T06"));
    }

    fn arb_threads() -> impl Strategy<Value = (Vec<Thread>, Vec<Group>)> {
        let users = ["U", "V", "W"];
        let target = prop_oneof![
            (0usize..3).prop_map(move |i| AssignmentTarget::Doctor(users[i].into())),
            (0usize..3).prop_map(|i| AssignmentTarget::Group(format!("G{i}").into())),
            Just(AssignmentTarget::Department {
                hospital: "h".into(),
                specialty: "surgery".into()
            }),
        ];
        let threads = prop::collection::vec(
            (0usize..3, 0u64..6, prop::collection::vec(target, 0..3)),
            0..12,
        )
        .prop_map(move |specs| {
            specs
                .into_iter()
                .enumerate()
                .map(|(i, (c, ms, targets))| thread(&format!("T{i}"), users[c], ms, &targets))
                .collect::<Vec<_>>()
        });
        let groups = prop::collection::vec(prop::collection::btree_set(0usize..3, 0..3), 3).prop_map(
            move |sets| {
                sets.into_iter()
                    .enumerate()
                    .map(|(i, members)| Group {
                        id: format!("G{i}").into(),
                        name: format!("G{i}"),
                        kind: GroupKind::ProfessionalOrg,
                        affiliation: None,
                        members: members.into_iter().map(|m| DoctorId::from(users[m])).collect(),
                    })
                    .collect::<Vec<_>>()
            },
        );
        (threads, groups)
    }

    proptest! {
        #[test]
        fn buckets_are_disjoint_and_order_is_input_independent(
            (threads, groups) in arb_threads(),
            shuffle_seed in any::<u64>(),
        ) {
            let docs = [doctor("U", "h", &["surgery"]), doctor("V", "h", &[]), doctor("W", "k", &["surgery"])];
            let lists = run("U", &docs, &threads, &groups);
            let primary: BTreeSet<_> = ids(&lists.primary).into_iter().collect();
            prop_assert!(ids(&lists.other).iter().all(|t| !primary.contains(t)));

            let mut permuted = threads.clone();
            let n = permuted.len();
            if n > 1 {
                let mut s = shuffle_seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    permuted.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            prop_assert_eq!(run("U", &docs, &permuted, &groups), lists);
        }
    }
}
