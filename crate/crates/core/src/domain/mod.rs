//! Replicated domain entities: the institutional graph (hospitals, doctors,
//! groups, colleague edges) and the conversational records (threads,
//! assignments, messages, attachments).
//!
//! None of these types carries a patient identifier. Case data is limited to
//! the fields of [`CaseForm`].

mod cases;
mod form;
mod hierarchy;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::hlc::HlcTimestamp;
use crate::ids::{
    AttachmentId, CountryCode, DoctorId, GroupId, HospitalId, MessageId, Specialty, ThreadId,
};

pub use cases::{
    is_other_for, is_primary_for, partition_cases, ActiveThread, CaseEntry, CaseLists, CasesError,
};
pub use form::{validate_case_form, FormViolation};
pub use hierarchy::{referral_chain, validate_hierarchy, HierarchyRule, HierarchyViolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HospitalTier {
    Teaching,
    Regional,
    District,
    Clinic,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hospital {
    pub id: HospitalId,
    pub name: String,
    pub tier: HospitalTier,
    pub region: String,
    #[serde(default)]
    pub referral_parent: Option<HospitalId>,
    #[serde(default)]
    pub departments: BTreeSet<Specialty>,
    /// Country of the institution; used to place institution groups as
    /// local or overseas. Absent means the deployment's home country.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<CountryCode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seniority {
    Junior,
    Senior,
    Specialist,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    #[serde(default)]
    pub email: Option<String>,
    #[serde(default)]
    pub phone: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Doctor {
    pub id: DoctorId,
    pub display_name: String,
    pub hospital: HospitalId,
    #[serde(default)]
    pub specialties: BTreeSet<Specialty>,
    pub country: CountryCode,
    pub seniority: Seniority,
    #[serde(default)]
    pub contact: Contact,
    #[serde(default)]
    pub is_admin: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Specialty,
    Institution,
    Country,
    ProfessionalOrg,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affiliation {
    Specialty(Specialty),
    Hospital(HospitalId),
    Country(CountryCode),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub name: String,
    pub kind: GroupKind,
    #[serde(default)]
    pub affiliation: Option<Affiliation>,
    #[serde(default)]
    pub members: BTreeSet<DoctorId>,
}

impl Group {
    /// Whether `affiliation` has the shape required by `kind`.
    pub fn affiliation_matches_kind(&self) -> bool {
        matches!(
            (self.kind, &self.affiliation),
            (GroupKind::Specialty, Some(Affiliation::Specialty(_)))
                | (GroupKind::Institution, Some(Affiliation::Hospital(_)))
                | (GroupKind::Country, Some(Affiliation::Country(_)))
                | (GroupKind::ProfessionalOrg, None)
        )
    }
}

/// Directed: `from` lists `to` as a colleague.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColleagueEdge {
    pub from: DoctorId,
    pub to: DoctorId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "0-9")]
    Under10,
    #[serde(rename = "10-19")]
    Teens,
    #[serde(rename = "20-29")]
    Twenties,
    #[serde(rename = "30-39")]
    Thirties,
    #[serde(rename = "40-49")]
    Forties,
    #[serde(rename = "50-59")]
    Fifties,
    #[serde(rename = "60-69")]
    Sixties,
    #[serde(rename = "70-79")]
    Seventies,
    #[serde(rename = "80-89")]
    Eighties,
    #[serde(rename = "90+")]
    NinetyPlus,
}

impl AgeBand {
    pub fn from_age(years: u32) -> Self {
        match years / 10 {
            0 => Self::Under10,
            1 => Self::Teens,
            2 => Self::Twenties,
            3 => Self::Thirties,
            4 => Self::Forties,
            5 => Self::Fifties,
            6 => Self::Sixties,
            7 => Self::Seventies,
            8 => Self::Eighties,
            _ => Self::NinetyPlus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Under10 => "0-9",
            Self::Teens => "10-19",
            Self::Twenties => "20-29",
            Self::Thirties => "30-39",
            Self::Forties => "40-49",
            Self::Fifties => "50-59",
            Self::Sixties => "60-69",
            Self::Seventies => "70-79",
            Self::Eighties => "80-89",
            Self::NinetyPlus => "90+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Unspecified,
}

/// Non-identifying case data: no patient name, address or national
/// identifier. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseForm {
    pub age_band: AgeBand,
    pub sex: Sex,
    pub clinical_history: String,
    #[serde(default)]
    pub specialization_requested: Option<Specialty>,
    #[serde(default)]
    pub attachments: Vec<AttachmentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadKind {
    Consultation,
    Discussion,
    Referral,
}

impl ThreadKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Consultation => "consultation",
            Self::Discussion => "discussion",
            Self::Referral => "referral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadStatus {
    Open,
    Escalated,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentTarget {
    Doctor(DoctorId),
    Group(GroupId),
    Department {
        hospital: HospitalId,
        specialty: Specialty,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub target: AssignmentTarget,
    pub assigned_by: DoctorId,
    pub at: HlcTimestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub id: ThreadId,
    pub kind: ThreadKind,
    pub creator: DoctorId,
    pub created_at: HlcTimestamp,
    #[serde(default)]
    pub case_form: Option<CaseForm>,
    #[serde(default)]
    pub assignments: Vec<Assignment>,
    pub status: ThreadStatus,
    #[serde(default)]
    pub stub: bool,
    /// Requested specialization carried by a stub notice before the full
    /// case form has arrived.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub_specialization: Option<Specialty>,
}

impl Thread {
    pub fn specialization(&self) -> Option<&Specialty> {
        match &self.case_form {
            Some(form) => form.specialization_requested.as_ref(),
            None => self.stub_specialization.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub thread: ThreadId,
    pub author: DoctorId,
    pub body: String,
    #[serde(default)]
    pub attachments: Vec<AttachmentId>,
    pub at: HlcTimestamp,
}

/// SHA-256 digest of an attachment payload, hex encoded on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> Self {
        use sha2::{Digest, Sha256};
        Self(Sha256::digest(bytes).into())
    }

    pub fn verifies(&self, bytes: &[u8]) -> bool {
        Self::of(bytes) == *self
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl Serialize for ContentHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&raw, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Self(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub id: AttachmentId,
    pub media_type: String,
    pub byte_size: u64,
    pub content_hash: ContentHash,
    pub payload_ref: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_form_rejects_identifying_fields() {
        let ok = r#"{"age_band":"30-39","sex":"female","clinical_history":"fever","specialization_requested":"pediatrics"}"#;
        let form: CaseForm = serde_json::from_str(ok).unwrap();
        assert_eq!(form.age_band, AgeBand::Thirties);

        for field in ["patient_name", "address", "national_id"] {
            let bad = format!(
                r#"{{"age_band":"30-39","sex":"female","clinical_history":"x","{field}":"y"}}"#
            );
            assert!(serde_json::from_str::<CaseForm>(&bad).is_err(), "{field} accepted");
        }
    }

    #[test]
    fn age_bands_cover_decades() {
        assert_eq!(AgeBand::from_age(0), AgeBand::Under10);
        assert_eq!(AgeBand::from_age(39), AgeBand::Thirties);
        assert_eq!(AgeBand::from_age(104), AgeBand::NinetyPlus);
        assert_eq!(AgeBand::from_age(85).label(), "80-89");
    }

    #[test]
    fn group_affiliation_shape() {
        let mut g = Group {
            id: "g".into(),
            name: "Pediatrics".into(),
            kind: GroupKind::Specialty,
            affiliation: Some(Affiliation::Specialty("pediatrics".into())),
            members: BTreeSet::new(),
        };
        assert!(g.affiliation_matches_kind());
        g.affiliation = Some(Affiliation::Country("GH".into()));
        assert!(!g.affiliation_matches_kind());
        g.kind = GroupKind::ProfessionalOrg;
        assert!(!g.affiliation_matches_kind());
        g.affiliation = None;
        assert!(g.affiliation_matches_kind());
    }

    #[test]
    fn content_hash_verifies_payload() {
        let h = ContentHash::of(b"xray.png bytes");
        assert!(h.verifies(b"xray.png bytes"));
        assert!(!h.verifies(b"tampered"));
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<ContentHash>(&json).unwrap(), h);
    }

    #[test]
    fn assignment_target_wire_shape() {
        let t = AssignmentTarget::Department {
            hospital: "kbth".into(),
            specialty: "urology".into(),
        };
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"department":{"hospital":"kbth","specialty":"urology"}}"#
        );
        let d: AssignmentTarget = serde_json::from_str(r#"{"doctor":"d1"}"#).unwrap();
        assert_eq!(d, AssignmentTarget::Doctor("d1".into()));
    }
}
