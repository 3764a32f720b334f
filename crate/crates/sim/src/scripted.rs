//! Hand-written scenarios.

use std::collections::{BTreeMap, BTreeSet};

use medsync_core::domain::{
    AgeBand, AssignmentTarget, CaseForm, Contact, Doctor, Hospital, HospitalTier, Seniority, Sex,
    ThreadKind,
};
use medsync_core::event::UserRecord;
use medsync_core::{DoctorId, EventPayload, ServerId};

use crate::outage::{Outage, OutageTrace, DAY_MS, HOUR_MS, MINUTE_MS};
use crate::scenario::{Op, Probe, Scenario, SimParams, TimedOp, Topology, TraceSpec};

/// Two global servers and four hospital servers, as deployed.
pub const GLOBALS: [&str; 2] = ["global-us", "global-gh"];
pub const LOCALS: [&str; 4] = ["korle-bu", "komfo-anokye", "cape-coast", "ridge"];

fn doctor(id: &str, hospital: &str, specialty: Option<&str>) -> Doctor {
    Doctor {
        id: id.into(),
        display_name: format!("Dr {id}"),
        hospital: hospital.into(),
        specialties: specialty.into_iter().map(Into::into).collect(),
        country: "GH".into(),
        seniority: Seniority::Senior,
        contact: Contact {
            email: Some(format!("{id}@example.org")),
            phone: Some("+233240000000".into()),
        },
        is_admin: false,
    }
}

/// Deployment topology with a teaching hospital per server site and two
/// doctors homed on each local server (`<server>-a`, `<server>-b`).
pub fn deployment() -> (Topology, Vec<EventPayload>) {
    let mut topology = Topology::star(&GLOBALS, &LOCALS);
    let mut boot = Vec::new();
    boot.push(EventPayload::HospitalCreated(Hospital {
        id: "korle-bu".into(),
        name: "Korle Bu Teaching Hospital".into(),
        tier: HospitalTier::Teaching,
        region: "Greater Accra".into(),
        referral_parent: None,
        departments: ["internal_medicine", "pediatrics"].map(Into::into).into_iter().collect(),
        country: None,
    }));
    boot.push(EventPayload::HospitalCreated(Hospital {
        id: "komfo-anokye".into(),
        name: "Komfo Anokye Teaching Hospital".into(),
        tier: HospitalTier::Teaching,
        region: "Ashanti".into(),
        referral_parent: None,
        departments: BTreeSet::new(),
        country: None,
    }));
    for (id, name, region) in [
        ("cape-coast", "Cape Coast Regional Hospital", "Central"),
        ("ridge", "Ridge Regional Hospital", "Greater Accra"),
    ] {
        boot.push(EventPayload::HospitalCreated(Hospital {
            id: id.into(),
            name: name.into(),
            tier: HospitalTier::Regional,
            region: region.into(),
            referral_parent: Some("korle-bu".into()),
            departments: BTreeSet::new(),
            country: None,
        }));
    }
    let specialties = BTreeMap::from([("korle-bu", "pediatrics"), ("komfo-anokye", "internal_medicine")]);
    for spec in topology.servers.iter_mut() {
        if !LOCALS.contains(&spec.id.as_str()) {
            continue;
        }
        for suffix in ["a", "b"] {
            let id = format!("{}-{suffix}", spec.id);
            let specialty = (suffix == "a").then(|| specialties.get(spec.id.as_str()).copied()).flatten();
            boot.push(EventPayload::UserCreated(UserRecord {
                doctor: doctor(&id, spec.id.as_str(), specialty),
                credential: None,
            }));
            spec.homed_users.push(id.into());
        }
    }
    (topology, boot)
}

fn form(history: &str) -> CaseForm {
    CaseForm {
        age_band: AgeBand::Thirties,
        sex: Sex::Female,
        clinical_history: history.into(),
        specialization_requested: Some("pediatrics".into()),
        attachments: Vec::new(),
    }
}

pub const CAPE_COAST: &str = "cape-coast";
pub const PARTITION_START_MS: u64 = DAY_MS;
pub const PARTITION_END_MS: u64 = 8 * DAY_MS;

/// Cape Coast's uplink is down for seven days while both Cape Coast and
/// the rest of the network keep creating and answering cases.
pub fn cape_coast() -> Scenario {
    let (topology, bootstrap) = deployment();
    let trace = OutageTrace {
        horizon_ms: 10 * DAY_MS,
        links: BTreeMap::from([(
            ServerId::from(CAPE_COAST),
            vec![Outage {
                start_ms: PARTITION_START_MS,
                duration_ms: PARTITION_END_MS - PARTITION_START_MS,
            }],
        )]),
    };
    let mut workload = Vec::new();
    let op = |at_ms: u64, server: &str, op: Op| TimedOp {
        at_ms,
        server: server.into(),
        op,
    };
    for day in 1..8u64 {
        let t = day * DAY_MS + 2 * HOUR_MS;
        let cc = format!("cc-{day}");
        let kb = format!("kb-{day}");
        workload.push(op(
            t,
            CAPE_COAST,
            Op::CreateThread {
                thread: cc.as_str().into(),
                creator: "cape-coast-a".into(),
                kind: ThreadKind::Consultation,
                case_form: Some(form("neonatal jaundice, day 4")),
                assign_to: Some(AssignmentTarget::Doctor("korle-bu-a".into())),
            },
        ));
        workload.push(op(
            t + HOUR_MS,
            "korle-bu",
            Op::CreateThread {
                thread: kb.as_str().into(),
                creator: "korle-bu-b".into(),
                kind: ThreadKind::Consultation,
                case_form: Some(form("failure to thrive")),
                assign_to: Some(AssignmentTarget::Doctor("cape-coast-b".into())),
            },
        ));
        workload.push(op(
            t + 2 * HOUR_MS,
            CAPE_COAST,
            Op::PostMessage {
                thread: cc.as_str().into(),
                author: "cape-coast-a".into(),
                body: "bilirubin repeated, still rising".into(),
            },
        ));
        workload.push(op(
            t + 3 * HOUR_MS,
            "ridge",
            Op::SetColleague {
                from: "ridge-a".into(),
                to: DoctorId::from(if day % 2 == 0 { "cape-coast-a" } else { "korle-bu-a" }),
                listed: true,
            },
        ));
    }
    Scenario {
        topology,
        trace: TraceSpec::Explicit(trace),
        bootstrap,
        workload,
        probes: Vec::new(),
        params: SimParams {
            record_rounds: true,
            ..SimParams::default()
        },
        seed: 7,
        horizon_ms: Some(10 * DAY_MS),
    }
}

pub const STUB_THREAD: &str = "remote-case";
pub const STUB_CREATED_MS: u64 = 6 * HOUR_MS;

/// Cape Coast is cut off for two days. Korle Bu opens a case during the
/// cut; the stub channel carries a notice to Cape Coast, which is probed
/// before and after the link returns.
pub fn stub_visibility() -> Scenario {
    let (topology, bootstrap) = deployment();
    let trace = OutageTrace {
        horizon_ms: 3 * DAY_MS,
        links: BTreeMap::from([(
            ServerId::from(CAPE_COAST),
            vec![Outage {
                start_ms: HOUR_MS,
                duration_ms: 2 * DAY_MS,
            }],
        )]),
    };
    let creator = DoctorId::from("korle-bu-a");
    let workload = vec![TimedOp {
        at_ms: STUB_CREATED_MS,
        server: "korle-bu".into(),
        op: Op::CreateThread {
            thread: STUB_THREAD.into(),
            creator: creator.clone(),
            kind: ThreadKind::Consultation,
            case_form: Some(form("persistent fever after antimalarials")),
            assign_to: Some(AssignmentTarget::Doctor("cape-coast-a".into())),
        },
    }];
    let probe = |at_ms| Probe {
        at_ms,
        server: CAPE_COAST.into(),
        user: creator.clone(),
    };
    Scenario {
        topology,
        trace: TraceSpec::Explicit(trace),
        bootstrap,
        workload,
        probes: vec![
            probe(STUB_CREATED_MS - MINUTE_MS),
            probe(STUB_CREATED_MS + 10 * MINUTE_MS),
            probe(2 * DAY_MS + 2 * HOUR_MS + 10 * MINUTE_MS),
        ],
        params: SimParams {
            stub_channel: true,
            ..SimParams::default()
        },
        seed: 11,
        horizon_ms: Some(3 * DAY_MS),
    }
}
