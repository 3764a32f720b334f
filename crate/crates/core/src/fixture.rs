//! Entity fixtures: a directory of JSONL files, one entity per line.
//!
//! `hospitals.jsonl`, `doctors.jsonl`, `groups.jsonl`, `edges.jsonl` and
//! `threads.jsonl`. Missing files read as empty.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::domain::{ColleagueEdge, Doctor, Group, Hospital, Thread};
use crate::event::{AssignmentRecord, EventPayload, ThreadRecord, UserRecord};
use crate::graph::{export_colleague_graph, ColleagueGraph, GraphError};
use crate::ids::{CountryCode, DoctorId, GroupId, HospitalId, ThreadId};
use crate::report::{category_report, classify_thread, CategoryReport, ClassifyError, Directory};

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fixture {
    pub hospitals: BTreeMap<HospitalId, Hospital>,
    pub doctors: BTreeMap<DoctorId, Doctor>,
    pub groups: BTreeMap<GroupId, Group>,
    pub edges: BTreeSet<ColleagueEdge>,
    pub threads: BTreeMap<ThreadId, Thread>,
}

fn read_jsonl<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, FixtureError> {
    let path = dir.join(name);
    let raw = match fs::read_to_string(&path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(FixtureError::Io { path, source }),
    };
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| FixtureError::Parse {
                path: path.clone(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

impl Fixture {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(FixtureError::Io {
                path: dir.to_path_buf(),
                source: io::Error::new(io::ErrorKind::NotFound, "fixture directory not found"),
            });
        }
        Ok(Self {
            hospitals: read_jsonl::<Hospital>(dir, "hospitals.jsonl")?
                .into_iter()
                .map(|h| (h.id.clone(), h))
                .collect(),
            doctors: read_jsonl::<Doctor>(dir, "doctors.jsonl")?
                .into_iter()
                .map(|d| (d.id.clone(), d))
                .collect(),
            groups: read_jsonl::<Group>(dir, "groups.jsonl")?
                .into_iter()
                .map(|g| (g.id.clone(), g))
                .collect(),
            edges: read_jsonl(dir, "edges.jsonl")?.into_iter().collect(),
            threads: read_jsonl::<Thread>(dir, "threads.jsonl")?
                .into_iter()
                .map(|t| (t.id.clone(), t))
                .collect(),
        })
    }

    pub fn directory<'a>(&'a self, home_country: &'a CountryCode) -> Directory<'a> {
        Directory {
            doctors: &self.doctors,
            groups: &self.groups,
            hospitals: &self.hospitals,
            home_country,
        }
    }

    /// Categorizes every thread that has an assignment.
    pub fn category_report(&self, home_country: &CountryCode) -> Result<CategoryReport, ClassifyError> {
        let dir = self.directory(home_country);
        let cats = self
            .threads
            .values()
            .map(|t| classify_thread(t, &dir))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(category_report(&cats))
    }

    pub fn colleague_graph(&self) -> Result<ColleagueGraph, GraphError> {
        export_colleague_graph(&self.doctors, &self.edges, &self.hospitals)
    }

    /// Payloads that recreate the fixture on an empty replica, in
    /// dependency order: hospitals (parents first), users, groups, edges,
    /// threads and their assignments.
    pub fn seed_payloads(&self) -> Vec<EventPayload> {
        let mut out = Vec::new();
        let mut placed = BTreeSet::new();
        while placed.len() < self.hospitals.len() {
            let before = placed.len();
            for h in self.hospitals.values() {
                let ready = h
                    .referral_parent
                    .as_ref()
                    .is_none_or(|p| placed.contains(p) || !self.hospitals.contains_key(p));
                if !placed.contains(&h.id) && ready {
                    placed.insert(h.id.clone());
                    out.push(EventPayload::HospitalCreated(h.clone()));
                }
            }
            if placed.len() == before {
                break;
            }
        }
        out.extend(self.doctors.values().map(|d| {
            EventPayload::UserCreated(UserRecord {
                doctor: d.clone(),
                credential: None,
            })
        }));
        out.extend(self.groups.values().cloned().map(EventPayload::GroupCreated));
        out.extend(self.edges.iter().cloned().map(EventPayload::EdgeAdded));
        for t in self.threads.values() {
            out.push(EventPayload::ThreadCreated(ThreadRecord {
                id: t.id.clone(),
                kind: t.kind,
                creator: t.creator.clone(),
                case_form: t.case_form.clone(),
                attachments: Vec::new(),
            }));
            out.extend(t.assignments.iter().map(|a| {
                EventPayload::AssignmentAdded(AssignmentRecord {
                    thread: t.id.clone(),
                    assignment: a.clone(),
                })
            }));
        }
        out
    }
}
