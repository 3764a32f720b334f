//! Scenario description: topology, outages, workload.

use std::collections::{BTreeMap, BTreeSet};

use medsync_core::domain::{
    AgeBand, AssignmentTarget, CaseForm, Contact, Doctor, Group, GroupKind, Affiliation, Hospital,
    HospitalTier, Seniority, Sex, ThreadKind, ThreadStatus,
};
use medsync_core::event::UserRecord;
use medsync_core::{DoctorId, EventPayload, GroupId, ServerId, Specialty, ThreadId};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::outage::{OutageParams, OutageTrace, DAY_MS, HOUR_MS, MINUTE_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub id: ServerId,
    pub role: Role,
    #[serde(default)]
    pub homed_users: Vec<DoctorId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub servers: Vec<ServerSpec>,
    /// Symmetric peerings; either side may start a round.
    pub peers: Vec<(ServerId, ServerId)>,
}

impl Topology {
    /// Locals peer with every global; globals peer with each other.
    pub fn star(globals: &[&str], locals: &[&str]) -> Self {
        let spec = |id: &&str, role| ServerSpec {
            id: (*id).into(),
            role,
            homed_users: Vec::new(),
        };
        let mut peers = Vec::new();
        for (i, g) in globals.iter().enumerate() {
            for h in &globals[i + 1..] {
                peers.push(((*g).into(), (*h).into()));
            }
            for l in locals {
                peers.push(((*l).into(), (*g).into()));
            }
        }
        Self {
            servers: globals
                .iter()
                .map(|g| spec(g, Role::Global))
                .chain(locals.iter().map(|l| spec(l, Role::Local)))
                .collect(),
            peers,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &ServerId> {
        self.servers.iter().map(|s| &s.id)
    }

    pub fn peers_of<'a>(&'a self, id: &'a ServerId) -> impl Iterator<Item = &'a ServerId> + 'a {
        self.peers.iter().filter_map(move |(a, b)| {
            if a == id {
                Some(b)
            } else if b == id {
                Some(a)
            } else {
                None
            }
        })
    }
}

/// A user-level operation at one server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    CreateThread {
        thread: ThreadId,
        creator: DoctorId,
        kind: ThreadKind,
        #[serde(default)]
        case_form: Option<CaseForm>,
        #[serde(default)]
        assign_to: Option<AssignmentTarget>,
    },
    PostMessage {
        thread: ThreadId,
        author: DoctorId,
        body: String,
    },
    Assign {
        thread: ThreadId,
        actor: DoctorId,
        target: AssignmentTarget,
    },
    SetStatus {
        thread: ThreadId,
        actor: DoctorId,
        status: ThreadStatus,
    },
    SetColleague {
        from: DoctorId,
        to: DoctorId,
        listed: bool,
    },
    SetMembership {
        doctor: DoctorId,
        group: GroupId,
        member: bool,
    },
    /// Commits a raw payload.
    Commit { payload: EventPayload },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedOp {
    pub at_ms: u64,
    pub server: ServerId,
    #[serde(flatten)]
    pub op: Op,
}

/// Case-list snapshot request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub at_ms: u64,
    pub server: ServerId,
    pub user: DoctorId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSpec {
    Explicit(OutageTrace),
    Generated(OutageParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub sync_period_ms: u64,
    pub staleness_threshold_hours: u64,
    pub staleness_check_ms: u64,
    pub dispatch_tick_ms: u64,
    pub stub_channel: bool,
    pub stub_loss: f64,
    pub stub_latency_ms: u64,
    pub notification_loss: f64,
    /// Additionally push whole logs on this period, ignoring digests.
    pub full_resync_ms: Option<u64>,
    /// Upper bound on the quiescence phase after the horizon.
    pub quiescence_limit_ms: u64,
    /// Keep a record of every sync round.
    pub record_rounds: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            sync_period_ms: MINUTE_MS,
            staleness_threshold_hours: 24,
            staleness_check_ms: 5 * MINUTE_MS,
            dispatch_tick_ms: MINUTE_MS,
            stub_channel: false,
            stub_loss: 0.0,
            stub_latency_ms: MINUTE_MS,
            notification_loss: 0.0,
            full_resync_ms: None,
            quiescence_limit_ms: DAY_MS,
            record_rounds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub topology: Topology,
    pub trace: TraceSpec,
    /// Committed on the first server and copied to every server before
    /// time zero.
    #[serde(default)]
    pub bootstrap: Vec<EventPayload>,
    pub workload: Vec<TimedOp>,
    #[serde(default)]
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub params: SimParams,
    #[serde(default)]
    pub seed: u64,
    /// End of the scripted phase; defaults to the trace horizon.
    #[serde(default)]
    pub horizon_ms: Option<u64>,
}

const SPECIALTIES: [&str; 4] = ["internal_medicine", "pediatrics", "surgery", "obgyn"];

fn sample_doctor(id: &str, hospital: &str, specialties: &[&str]) -> Doctor {
    Doctor {
        id: id.into(),
        display_name: format!("Dr {}", id.to_uppercase()),
        hospital: hospital.into(),
        specialties: specialties.iter().map(|s| Specialty::from(*s)).collect(),
        country: "GH".into(),
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

fn case_form(rng: &mut ChaCha8Rng) -> CaseForm {
    CaseForm {
        age_band: AgeBand::from_age(rng.random_range(0..95)),
        sex: if rng.random_bool(0.5) { Sex::Female } else { Sex::Male },
        clinical_history: "fever and cough for two weeks".into(),
        specialization_requested: Some((*SPECIALTIES.choose(rng).expect("non-empty")).into()),
        attachments: Vec::new(),
    }
}

/// Sizes for [`random_scenario`].
#[derive(Debug, Clone, Copy)]
pub struct RandomShape {
    pub max_servers: usize,
    pub max_ops: usize,
    pub horizon_ms: u64,
}

impl Default for RandomShape {
    fn default() -> Self {
        Self {
            max_servers: 5,
            max_ops: 200,
            horizon_ms: 2 * DAY_MS,
        }
    }
}

/// A random scenario: 2..=max_servers servers (one or two global), one
/// teaching hospital with departments, one hospital and three doctors per
/// local server, a specialty group, and a mixed workload over the default
/// outage regime.
pub fn random_scenario(seed: u64, shape: RandomShape) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=shape.max_servers.max(2));
    let globals = if n >= 4 { 2 } else { 1 };
    let global_ids: Vec<String> = (0..globals).map(|i| format!("g{i}")).collect();
    let local_ids: Vec<String> = (0..n - globals).map(|i| format!("l{i}")).collect();
    let gs: Vec<&str> = global_ids.iter().map(String::as_str).collect();
    let ls: Vec<&str> = local_ids.iter().map(String::as_str).collect();
    let mut topology = Topology::star(&gs, &ls);

    let mut bootstrap = vec![EventPayload::HospitalCreated(Hospital {
        id: "teach".into(),
        name: "Teaching Hospital".into(),
        tier: HospitalTier::Teaching,
        region: "Greater Accra".into(),
        referral_parent: None,
        departments: SPECIALTIES.iter().map(|s| Specialty::from(*s)).collect(),
        country: None,
    })];
    let mut doctors: Vec<(DoctorId, usize)> = Vec::new();
    let homes: Vec<usize> = (0..topology.servers.len()).collect();
    for &s in &homes {
        let server = topology.servers[s].id.to_string();
        let hospital = if topology.servers[s].role == Role::Global {
            "teach".to_owned()
        } else {
            let h = format!("h-{server}");
            bootstrap.push(EventPayload::HospitalCreated(Hospital {
                id: h.as_str().into(),
                name: format!("Hospital {server}"),
                tier: HospitalTier::Regional,
                region: "Central".into(),
                referral_parent: Some("teach".into()),
                departments: BTreeSet::new(),
                country: None,
            }));
            h
        };
        for k in 0..3 {
            let id = format!("{server}-d{k}");
            let specs: Vec<&str> = if k == 0 {
                Vec::new()
            } else {
                vec![SPECIALTIES[(s + k) % SPECIALTIES.len()]]
            };
            bootstrap.push(EventPayload::UserCreated(UserRecord {
                doctor: sample_doctor(&id, &hospital, &specs),
                credential: None,
            }));
            topology.servers[s].homed_users.push(id.as_str().into());
            doctors.push((id.into(), s));
        }
    }
    bootstrap.push(EventPayload::GroupCreated(Group {
        id: "grp".into(),
        name: "Internal Medicine".into(),
        kind: GroupKind::Specialty,
        affiliation: Some(Affiliation::Specialty("internal_medicine".into())),
        members: doctors.iter().step_by(2).map(|(d, _)| d.clone()).collect(),
    }));

    let ops = rng.random_range(1..=shape.max_ops.max(1));
    let mut created: Vec<(ThreadId, DoctorId)> = Vec::new();
    let mut workload = Vec::with_capacity(ops);
    let mut times: Vec<u64> = (0..ops).map(|_| rng.random_range(0..shape.horizon_ms)).collect();
    times.sort_unstable();
    for (i, at_ms) in times.into_iter().enumerate() {
        let (me, s) = doctors.choose(&mut rng).expect("doctors").clone();
        let server = topology.servers[s].id.clone();
        let other = doctors.choose(&mut rng).expect("doctors").0.clone();
        let roll = rng.random_range(0..100);
        let op = if created.is_empty() || roll < 30 {
            let thread = ThreadId::new(format!("w{seed}-{i}"));
            created.push((thread.clone(), me.clone()));
            let consult = rng.random_bool(0.7);
            Op::CreateThread {
                thread,
                creator: me,
                kind: if consult {
                    ThreadKind::Consultation
                } else {
                    ThreadKind::Discussion
                },
                case_form: consult.then(|| case_form(&mut rng)),
                assign_to: Some(match rng.random_range(0..3) {
                    0 => AssignmentTarget::Group("grp".into()),
                    1 => AssignmentTarget::Department {
                        hospital: "teach".into(),
                        specialty: (*SPECIALTIES.choose(&mut rng).expect("non-empty")).into(),
                    },
                    _ => AssignmentTarget::Doctor(other),
                }),
            }
        } else {
            let (thread, creator) = created.choose(&mut rng).expect("threads").clone();
            match roll {
                30..=69 => Op::PostMessage {
                    thread,
                    author: if rng.random_bool(0.5) { creator } else { me },
                    body: format!("note {i}"),
                },
                70..=79 => Op::Assign {
                    thread,
                    actor: creator,
                    target: AssignmentTarget::Doctor(other),
                },
                80..=87 => Op::SetStatus {
                    thread,
                    actor: creator,
                    status: if rng.random_bool(0.5) {
                        ThreadStatus::Closed
                    } else {
                        ThreadStatus::Open
                    },
                },
                88..=95 => Op::SetColleague {
                    from: me,
                    to: other,
                    listed: rng.random_bool(0.7),
                },
                _ => Op::SetMembership {
                    doctor: me,
                    group: "grp".into(),
                    member: rng.random_bool(0.5),
                },
            }
        };
        // Thread-scoped ops run where the thread was created, so they are
        // usually known locally; the rest run at the actor's home.
        let server = match &op {
            Op::PostMessage { thread, .. } | Op::Assign { thread, .. } | Op::SetStatus { thread, .. }
                if rng.random_bool(0.8) =>
            {
                workload
                    .iter()
                    .find_map(|w: &TimedOp| match &w.op {
                        Op::CreateThread { thread: t, .. } if t == thread => Some(w.server.clone()),
                        _ => None,
                    })
                    .unwrap_or(server)
            }
            _ => server,
        };
        workload.push(TimedOp { at_ms, server, op });
    }

    Scenario {
        topology,
        trace: TraceSpec::Generated(OutageParams {
            horizon_ms: shape.horizon_ms,
            ..OutageParams::default()
        }),
        bootstrap,
        workload,
        probes: Vec::new(),
        params: SimParams {
            sync_period_ms: 5 * MINUTE_MS,
            quiescence_limit_ms: 12 * HOUR_MS,
            ..SimParams::default()
        },
        seed,
        horizon_ms: None,
    }
}

/// Doctors homed per server, as a lookup.
pub fn homes(topology: &Topology) -> BTreeMap<DoctorId, ServerId> {
    topology
        .servers
        .iter()
        .flat_map(|s| s.homed_users.iter().map(move |u| (u.clone(), s.id.clone())))
        .collect()
}
