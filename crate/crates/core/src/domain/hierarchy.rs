use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Hospital, HospitalTier};
use crate::ids::HospitalId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyRule {
    DuplicateId,
    UnknownParent,
    /// The hospital lies on a referral cycle.
    Cycle,
    /// A public hospital whose chain does not end at a teaching hospital.
    ChainNotRootedAtTeaching,
    /// A private hospital with a referral parent or with hospitals referring to it.
    PrivateNotIsolated,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HierarchyViolation {
    pub hospital: HospitalId,
    pub rule: HierarchyRule,
}

/// Checks that the referral graph is a forest of in-trees rooted at teaching
/// hospitals, plus isolated private hospitals. Returns violations sorted by
/// hospital id; an empty list means the set is valid.
pub fn validate_hierarchy(hospitals: &[Hospital]) -> Vec<HierarchyViolation> {
    let mut out = BTreeSet::new();
    let mut by_id: BTreeMap<&HospitalId, &Hospital> = BTreeMap::new();
    for h in hospitals {
        if by_id.insert(&h.id, h).is_some() {
            out.insert(HierarchyViolation {
                hospital: h.id.clone(),
                rule: HierarchyRule::DuplicateId,
            });
        }
    }

    let mut has_children: BTreeSet<&HospitalId> = BTreeSet::new();
    for h in by_id.values() {
        if let Some(parent) = &h.referral_parent {
            has_children.insert(parent);
        }
    }

    let mut flag = |hospital: &HospitalId, rule| {
        out.insert(HierarchyViolation {
            hospital: hospital.clone(),
            rule,
        });
    };

    for h in by_id.values() {
        if let Some(parent) = &h.referral_parent {
            if !by_id.contains_key(parent) {
                flag(&h.id, HierarchyRule::UnknownParent);
            }
        }

        if h.tier == HospitalTier::Private {
            if h.referral_parent.is_some() || has_children.contains(&h.id) {
                flag(&h.id, HierarchyRule::PrivateNotIsolated);
            }
            continue;
        }

        match chain_end(&h.id, &by_id) {
            ChainEnd::Root(root) if by_id[root].tier == HospitalTier::Teaching => {}
            ChainEnd::Cycle { on_cycle: true } => {
                flag(&h.id, HierarchyRule::Cycle);
                flag(&h.id, HierarchyRule::ChainNotRootedAtTeaching);
            }
            _ => flag(&h.id, HierarchyRule::ChainNotRootedAtTeaching),
        }
    }
    out.into_iter().collect()
}

enum ChainEnd<'a> {
    Root(&'a HospitalId),
    Dangling,
    Cycle { on_cycle: bool },
}

fn chain_end<'a>(start: &'a HospitalId, by_id: &BTreeMap<&'a HospitalId, &'a Hospital>) -> ChainEnd<'a> {
    let mut seen = BTreeSet::new();
    let mut current = start;
    loop {
        if !seen.insert(current) {
            return ChainEnd::Cycle {
                on_cycle: current == start,
            };
        }
        let Some(h) = by_id.get(current) else {
            return ChainEnd::Dangling;
        };
        match &h.referral_parent {
            None => return ChainEnd::Root(current),
            Some(parent) => current = parent,
        }
    }
}

/// Hospitals above `start` on its referral chain, nearest first. Stops at a
/// root, an unknown parent or a repeated hospital.
pub fn referral_chain<'a>(
    start: &HospitalId,
    hospitals: &'a BTreeMap<HospitalId, Hospital>,
) -> Vec<&'a Hospital> {
    let mut chain = Vec::new();
    let mut seen = BTreeSet::from([start.clone()]);
    let mut next = hospitals.get(start).and_then(|h| h.referral_parent.as_ref());
    while let Some(id) = next {
        if !seen.insert(id.clone()) {
            break;
        }
        let Some(h) = hospitals.get(id) else { break };
        chain.push(h);
        next = h.referral_parent.as_ref();
    }
    chain
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hosp(id: &str, tier: HospitalTier, parent: Option<&str>) -> Hospital {
        Hospital {
            id: id.into(),
            name: id.to_uppercase(),
            tier,
            region: "Central".into(),
            referral_parent: parent.map(HospitalId::from),
            departments: BTreeSet::new(),
            country: None,
        }
    }

    fn rules_for(v: &[HierarchyViolation], id: &str) -> Vec<HierarchyRule> {
        v.iter().filter(|x| x.hospital.as_str() == id).map(|x| x.rule).collect()
    }

    #[test]
    fn single_teaching_root_is_valid() {
        assert!(validate_hierarchy(&[hosp("A", HospitalTier::Teaching, None)]).is_empty());
    }

    #[test]
    fn district_regional_teaching_chain_is_valid() {
        let set = [
            hosp("D", HospitalTier::District, Some("R")),
            hosp("R", HospitalTier::Regional, Some("A")),
            hosp("A", HospitalTier::Teaching, None),
        ];
        assert!(validate_hierarchy(&set).is_empty());
    }

    #[test]
    fn cycle_is_reported_for_each_member() {
        let set = [
            hosp("D", HospitalTier::District, Some("R")),
            hosp("R", HospitalTier::Regional, Some("D")),
        ];
        let v = validate_hierarchy(&set);
        assert!(rules_for(&v, "D").contains(&HierarchyRule::Cycle));
        assert!(rules_for(&v, "R").contains(&HierarchyRule::Cycle));
    }

    #[test]
    fn non_teaching_root_is_rejected() {
        let set = [
            hosp("C", HospitalTier::Clinic, Some("D")),
            hosp("D", HospitalTier::District, None),
        ];
        let v = validate_hierarchy(&set);
        assert_eq!(rules_for(&v, "C"), vec![HierarchyRule::ChainNotRootedAtTeaching]);
        assert_eq!(rules_for(&v, "D"), vec![HierarchyRule::ChainNotRootedAtTeaching]);
    }

    #[test]
    fn unknown_parent_and_private_rules() {
        let set = [
            hosp("D", HospitalTier::District, Some("missing")),
            hosp("P", HospitalTier::Private, None),
            hosp("Q", HospitalTier::Private, Some("A")),
            hosp("A", HospitalTier::Teaching, None),
        ];
        let v = validate_hierarchy(&set);
        assert_eq!(
            rules_for(&v, "D"),
            vec![HierarchyRule::UnknownParent, HierarchyRule::ChainNotRootedAtTeaching]
        );
        assert!(rules_for(&v, "P").is_empty());
        assert_eq!(rules_for(&v, "Q"), vec![HierarchyRule::PrivateNotIsolated]);
    }

    #[test]
    fn duplicate_ids_are_flagged() {
        let set = [
            hosp("A", HospitalTier::Teaching, None),
            hosp("A", HospitalTier::Teaching, None),
        ];
        assert_eq!(rules_for(&validate_hierarchy(&set), "A"), vec![HierarchyRule::DuplicateId]);
    }

    #[test]
    fn chain_walk_is_nearest_first() {
        let map: BTreeMap<_, _> = [
            hosp("D", HospitalTier::District, Some("R")),
            hosp("R", HospitalTier::Regional, Some("A")),
            hosp("A", HospitalTier::Teaching, None),
        ]
        .into_iter()
        .map(|h| (h.id.clone(), h))
        .collect();
        let ids: Vec<_> = referral_chain(&"D".into(), &map).iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["R", "A"]);
        assert!(referral_chain(&"A".into(), &map).is_empty());
    }
}
