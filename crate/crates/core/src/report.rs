//! Thread categorization cross-tabs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{Affiliation, AssignmentTarget, Doctor, Group, Hospital, Thread};
use crate::ids::{CountryCode, DoctorId, GroupId, HospitalId, Specialty, ThreadId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Professional,
    Social,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Individual,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Overseas,
    Local,
    WorldwideGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadCategory {
    pub purpose: Purpose,
    pub target_kind: TargetKind,
    pub locality: Locality,
    pub specialization: Option<Specialty>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifyError {
    #[error("thread {0} has no assignment to classify")]
    Unassigned(ThreadId),
    #[error("thread {thread} is assigned to unknown doctor {doctor}")]
    UnknownDoctor { thread: ThreadId, doctor: DoctorId },
    #[error("thread {thread} is assigned to unknown group {group}")]
    UnknownGroup { thread: ThreadId, group: GroupId },
    #[error("thread {thread} is assigned to unknown hospital {hospital}")]
    UnknownHospital { thread: ThreadId, hospital: HospitalId },
}

/// Lookup tables a classification needs.
#[derive(Debug, Clone, Copy)]
pub struct Directory<'a> {
    pub doctors: &'a BTreeMap<DoctorId, Doctor>,
    pub groups: &'a BTreeMap<GroupId, Group>,
    pub hospitals: &'a BTreeMap<HospitalId, Hospital>,
    pub home_country: &'a CountryCode,
}

impl Directory<'_> {
    fn locality_of(&self, country: &CountryCode) -> Locality {
        if country == self.home_country {
            Locality::Local
        } else {
            Locality::Overseas
        }
    }

    fn hospital_country<'h>(&'h self, h: &'h Hospital) -> &'h CountryCode {
        h.country.as_ref().unwrap_or(self.home_country)
    }
}

/// Categorizes a thread by its first assignment.
///
/// Purpose is professional exactly when a case form is present. Groups
/// without a country or institution affiliation are worldwide; department
/// targets count as groups located in their hospital's country. Without a
/// form, the specialization is the sole specialty of an individual target,
/// if it has exactly one.
pub fn classify_thread(thread: &Thread, dir: &Directory<'_>) -> Result<ThreadCategory, ClassifyError> {
    let first = thread
        .assignments
        .first()
        .ok_or_else(|| ClassifyError::Unassigned(thread.id.clone()))?;
    let purpose = if thread.case_form.is_some() {
        Purpose::Professional
    } else {
        Purpose::Social
    };
    let hospital = |id: &HospitalId| {
        dir.hospitals.get(id).ok_or_else(|| ClassifyError::UnknownHospital {
            thread: thread.id.clone(),
            hospital: id.clone(),
        })
    };

    let (target_kind, locality, target_specialty) = match &first.target {
        AssignmentTarget::Doctor(d) => {
            let doc = dir.doctors.get(d).ok_or_else(|| ClassifyError::UnknownDoctor {
                thread: thread.id.clone(),
                doctor: d.clone(),
            })?;
            let sole = (doc.specialties.len() == 1)
                .then(|| doc.specialties.iter().next().cloned())
                .flatten();
            (TargetKind::Individual, dir.locality_of(&doc.country), sole)
        }
        AssignmentTarget::Group(g) => {
            let group = dir.groups.get(g).ok_or_else(|| ClassifyError::UnknownGroup {
                thread: thread.id.clone(),
                group: g.clone(),
            })?;
            let locality = match &group.affiliation {
                Some(Affiliation::Country(c)) => dir.locality_of(c),
                Some(Affiliation::Hospital(h)) => dir.locality_of(dir.hospital_country(hospital(h)?)),
                Some(Affiliation::Specialty(_)) | None => Locality::WorldwideGroup,
            };
            (TargetKind::Group, locality, None)
        }
        AssignmentTarget::Department { hospital: h, .. } => {
            let locality = dir.locality_of(dir.hospital_country(hospital(h)?));
            (TargetKind::Group, locality, None)
        }
    };

    let specialization = match &thread.case_form {
        Some(form) => form.specialization_requested.clone(),
        None => target_specialty,
    };
    Ok(ThreadCategory {
        purpose,
        target_kind,
        locality,
        specialization,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub row: String,
    pub label: String,
    pub professional: usize,
    pub social: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub threads: usize,
    pub by_specialization: Vec<ReportRow>,
    pub by_target: Vec<ReportRow>,
    pub by_locality: Vec<ReportRow>,
}

fn title_case(tag: &str) -> String {
    tag.split('_')
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn specialty_label(tag: Option<&Specialty>) -> String {
    match tag.map(Specialty::as_str) {
        None => "None".into(),
        Some("obgyn") => "Ob/Gyn".into(),
        Some(other) => title_case(other),
    }
}

fn tally<K: Ord + Clone>(cats: &[ThreadCategory], key: impl Fn(&ThreadCategory) -> K) -> BTreeMap<K, (usize, usize)> {
    let mut out: BTreeMap<K, (usize, usize)> = BTreeMap::new();
    for c in cats {
        let cell = out.entry(key(c)).or_default();
        match c.purpose {
            Purpose::Professional => cell.0 += 1,
            Purpose::Social => cell.1 += 1,
        }
    }
    out
}

fn row(id: String, label: String, (professional, social): (usize, usize)) -> ReportRow {
    ReportRow {
        row: id,
        label,
        professional,
        social,
        total: professional + social,
    }
}

/// Cross-tabulates purpose against specialization, target kind and
/// locality. Target and locality panels always list every row, zeros
/// included; the specialization panel lists the specializations present,
/// "none" first, then by total descending and label.
pub fn category_report(cats: &[ThreadCategory]) -> CategoryReport {
    let mut by_specialization: Vec<ReportRow> = tally(cats, |c| c.specialization.clone())
        .into_iter()
        .map(|(s, cell)| {
            let id = s.as_ref().map_or("none".to_owned(), |s| s.to_string());
            row(id, specialty_label(s.as_ref()), cell)
        })
        .collect();
    by_specialization.sort_by(|a, b| {
        (a.row != "none", std::cmp::Reverse(a.total), &a.label).cmp(&(
            b.row != "none",
            std::cmp::Reverse(b.total),
            &b.label,
        ))
    });

    let targets = tally(cats, |c| c.target_kind);
    let by_target = [
        (TargetKind::Individual, "individual", "Individual"),
        (TargetKind::Group, "group", "Group"),
    ]
    .into_iter()
    .map(|(k, id, label)| row(id.into(), label.into(), targets.get(&k).copied().unwrap_or_default()))
    .collect();

    let places = tally(cats, |c| c.locality);
    let by_locality = [
        (Locality::Overseas, "overseas", "Overseas Individual/Group"),
        (Locality::Local, "local", "Local Individual/Group"),
        (Locality::WorldwideGroup, "worldwide_group", "Worldwide Group"),
    ]
    .into_iter()
    .map(|(k, id, label)| row(id.into(), label.into(), places.get(&k).copied().unwrap_or_default()))
    .collect();

    CategoryReport {
        threads: cats.len(),
        by_specialization,
        by_target,
        by_locality,
    }
}

impl CategoryReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let panels = [
            ("Specialization Consulted", &self.by_specialization),
            ("Individual vs. Group", &self.by_target),
            ("Overseas vs. Local", &self.by_locality),
        ];
        for (i, (title, rows)) in panels.into_iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let width = rows
                .iter()
                .map(|r| r.label.len())
                .chain([title.len()])
                .max()
                .unwrap_or(0);
            let _ = writeln!(out, "{title:<width$}  Professional  Social  Total");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>12}  {:>6}  {:>5}",
                    r.label, r.professional, r.social, r.total
                );
            }
        }
        out
    }
}
