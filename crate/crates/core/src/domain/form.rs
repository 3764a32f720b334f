use serde::{Deserialize, Serialize};

use super::{CaseForm, ThreadKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormViolation {
    /// Discussions are free-form and never carry case data.
    FormOnDiscussion,
    /// Consultations and referrals require a case form.
    MissingForm,
    EmptyClinicalHistory,
}

pub fn validate_case_form(form: Option<&CaseForm>, kind: ThreadKind) -> Vec<FormViolation> {
    match (kind, form) {
        (ThreadKind::Discussion, Some(_)) => vec![FormViolation::FormOnDiscussion],
        (ThreadKind::Discussion, None) => Vec::new(),
        (_, None) => vec![FormViolation::MissingForm],
        (_, Some(f)) if f.clinical_history.trim().is_empty() => {
            vec![FormViolation::EmptyClinicalHistory]
        }
        (_, Some(_)) => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgeBand, Sex};

    fn form(history: &str) -> CaseForm {
        CaseForm {
            age_band: AgeBand::Forties,
            sex: Sex::Male,
            clinical_history: history.into(),
            specialization_requested: Some("urology".into()),
            attachments: vec![],
        }
    }

    #[test]
    fn complete_consultation_is_ok() {
        assert!(validate_case_form(Some(&form("haematuria 3 weeks")), ThreadKind::Consultation).is_empty());
    }

    #[test]
    fn discussion_with_form_is_rejected() {
        assert_eq!(
            validate_case_form(Some(&form("x")), ThreadKind::Discussion),
            [FormViolation::FormOnDiscussion]
        );
    }

    /// Every (kind, form state) combination against the rule table.
    #[test]
    fn rule_table() {
        let blank = form("  \n");
        let full = form("history");
        let cases: [(ThreadKind, Option<&CaseForm>, &[FormViolation]); 9] = [
            (ThreadKind::Consultation, None, &[FormViolation::MissingForm]),
            (ThreadKind::Consultation, Some(&blank), &[FormViolation::EmptyClinicalHistory]),
            (ThreadKind::Consultation, Some(&full), &[]),
            (ThreadKind::Referral, None, &[FormViolation::MissingForm]),
            (ThreadKind::Referral, Some(&blank), &[FormViolation::EmptyClinicalHistory]),
            (ThreadKind::Referral, Some(&full), &[]),
            (ThreadKind::Discussion, None, &[]),
            (ThreadKind::Discussion, Some(&blank), &[FormViolation::FormOnDiscussion]),
            (ThreadKind::Discussion, Some(&full), &[FormViolation::FormOnDiscussion]),
        ];
        for (kind, f, expected) in cases {
            assert_eq!(validate_case_form(f, kind), expected, "{kind:?} {f:?}");
        }
    }
}
