//! Email/SMS notifications for locally homed users.
//!
//! Jobs are keyed by `(recipient, channel, source)`; re-applying an event
//! during sync finds the existing job and creates nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{is_other_for, is_primary_for, Doctor, Thread};
use crate::event::{Event, EventId, EventPayload};
use crate::ids::{DoctorId, ServerId};
use crate::replica::StalenessTransition;
use crate::state::State;
use crate::sync::Backoff;

pub const SMS_LIMIT: usize = 160;
pub const MAX_ATTEMPTS: u32 = 10;
pub const NOTIFY_BACKOFF: Backoff = Backoff {
    base_ms: 60_000,
    cap_ms: 3_600_000,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchScope {
    PrimaryOnly,
    PrimaryAndOther,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Email,
    Sms,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Email => "email",
            Self::Sms => "sms",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchPreference {
    pub doctor: DoctorId,
    pub scope: WatchScope,
    pub channels: BTreeSet<Channel>,
}

impl WatchPreference {
    /// Primary cases only, on every channel the doctor has an address for.
    pub fn default_for(doctor: &Doctor) -> Self {
        let mut channels = BTreeSet::new();
        if doctor.contact.email.is_some() {
            channels.insert(Channel::Email);
        }
        if doctor.contact.phone.is_some() {
            channels.insert(Channel::Sms);
        }
        Self {
            doctor: doctor.id.clone(),
            scope: WatchScope::PrimaryOnly,
            channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Primary,
    Other,
    Staleness,
}

/// Who should hear about `event`: doctors for whom the thread is primary,
/// plus those for whom it is other and who asked for other cases. The
/// author is never included. Non-thread events notify nobody.
pub fn recipients_for_event(
    event: &Event,
    state: &State,
    scope_of: impl Fn(&DoctorId) -> WatchScope,
) -> BTreeSet<(DoctorId, Reason)> {
    let mut out = BTreeSet::new();
    let relevant = matches!(
        event.payload,
        EventPayload::ThreadCreated(_) | EventPayload::MessageAdded(_) | EventPayload::AssignmentAdded(_)
    );
    let Some(thread) = event.payload.thread().and_then(|t| state.threads.get(t)) else {
        return out;
    };
    if !relevant {
        return out;
    }
    let author = event.payload.author();
    for doctor in state.doctors.values() {
        if Some(&doctor.id) == author {
            continue;
        }
        if is_primary_for(thread, doctor) {
            out.insert((doctor.id.clone(), Reason::Primary));
        } else if scope_of(&doctor.id) == WatchScope::PrimaryAndOther
            && is_other_for(thread, &doctor.id, &state.groups)
        {
            out.insert((doctor.id.clone(), Reason::Other));
        }
    }
    out
}

fn humanize(tag: &str) -> String {
    tag.replace('_', " ")
}

fn thread_phrase(thread: &Thread, state: &State) -> String {
    let spec = thread
        .specialization()
        .map(|s| format!("{} ", humanize(s.as_str())))
        .unwrap_or_default();
    let hospital = state
        .doctors
        .get(&thread.creator)
        .and_then(|d| state.hospitals.get(&d.hospital))
        .map_or("another site", |h| h.name.as_str());
    format!("{spec}{} from {hospital}", thread.kind.label())
}

const ACCESS_HINT: &str = "Sign in to your hospital server to view.";

fn fit_sms(text: String) -> String {
    if text.chars().count() <= SMS_LIMIT {
        return text;
    }
    let mut cut: String = text.chars().take(SMS_LIMIT - 3).collect();
    cut.push_str("...");
    cut
}

/// Notification text for an applied thread event. SMS text never carries
/// clinical history and is at most 160 characters; email adds the case
/// summary.
pub fn render(event: &Event, state: &State, channel: Channel) -> Option<String> {
    let thread = state.threads.get(event.payload.thread()?)?;
    let phrase = thread_phrase(thread, state);
    let headline = match &event.payload {
        EventPayload::ThreadCreated(_) => format!("New {phrase}."),
        EventPayload::MessageAdded(_) => format!("New reply on {phrase}."),
        EventPayload::AssignmentAdded(_) => format!("Case assigned: {phrase}."),
        _ => return None,
    };
    Some(match channel {
        Channel::Sms => fit_sms(format!("{headline} {ACCESS_HINT}")),
        Channel::Email => {
            let mut body = format!("{headline}\n\n");
            if let Some(form) = &thread.case_form {
                body.push_str(&format!(
                    "Patient: {}, age {}\nHistory: {}\n\n",
                    format!("{:?}", form.sex).to_lowercase(),
                    form.age_band.label(),
                    form.clinical_history
                ));
            }
            body.push_str(&format!("Thread {}. {ACCESS_HINT}\n", thread.id));
            body
        }
    })
}

pub fn render_staleness(t: &StalenessTransition, threshold_hours: u64, channel: Channel) -> String {
    let text = format!(
        "This server has not synchronized with {} for over {threshold_hours} h. Cases entered at other sites may be missing.",
        t.peer
    );
    match channel {
        Channel::Sms => fit_sms(text),
        Channel::Email => format!("{text}\n"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JobSource {
    Event { event: EventId },
    Staleness { peer: ServerId, at_ms: u64 },
}

impl fmt::Display for JobSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Event { event } => write!(f, "{event}"),
            Self::Staleness { peer, at_ms } => write!(f, "stale:{peer}@{at_ms}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobKey {
    pub recipient: DoctorId,
    pub channel: Channel,
    pub source: JobSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Sent,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationJob {
    pub id: String,
    pub key: JobKey,
    pub reason: Reason,
    pub address: Option<String>,
    pub body: String,
    pub state: JobState,
    pub attempts: u32,
    pub next_attempt_ms: u64,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("temporary delivery failure: {0}")]
    Retryable(String),
    #[error("permanent delivery failure: {0}")]
    Permanent(String),
}

pub trait Transport {
    fn send(&mut self, channel: Channel, address: &str, body: &str) -> Result<(), TransportError>;
}

/// One delivery attempt. A job that is not queued, or not yet due, is left
/// alone, so dispatching a sent job again never calls the transport.
pub fn dispatch<'a>(
    job: &'a mut NotificationJob,
    transport: &mut dyn Transport,
    now_ms: u64,
) -> &'a NotificationJob {
    if job.state != JobState::Queued || now_ms < job.next_attempt_ms {
        return job;
    }
    let Some(address) = job.address.clone() else {
        job.state = JobState::Failed;
        job.last_error = Some(format!("no {} address on file", job.key.channel));
        return job;
    };
    job.attempts += 1;
    match transport.send(job.key.channel, &address, &job.body) {
        Ok(()) => {
            job.state = JobState::Sent;
            job.last_error = None;
        }
        Err(TransportError::Permanent(e)) => {
            job.state = JobState::Failed;
            job.last_error = Some(e);
        }
        Err(TransportError::Retryable(e)) => {
            job.last_error = Some(e);
            if job.attempts >= MAX_ATTEMPTS {
                job.state = JobState::Failed;
            } else {
                job.next_attempt_ms = now_ms.saturating_add(NOTIFY_BACKOFF.delay_ms(job.attempts));
            }
        }
    }
    job
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DispatchReport {
    pub attempted: usize,
    pub sent: usize,
    pub failed: usize,
}

/// Per-server notification queue.
#[derive(Debug, Clone, Default)]
pub struct Dispatcher {
    homed: BTreeSet<DoctorId>,
    prefs: BTreeMap<DoctorId, WatchPreference>,
    staleness_threshold_hours: u64,
    jobs: BTreeMap<JobKey, NotificationJob>,
}

impl Dispatcher {
    pub fn new(homed: impl IntoIterator<Item = DoctorId>, staleness_threshold_hours: u64) -> Self {
        Self {
            homed: homed.into_iter().collect(),
            prefs: BTreeMap::new(),
            staleness_threshold_hours,
            jobs: BTreeMap::new(),
        }
    }

    pub fn set_preference(&mut self, pref: WatchPreference) {
        self.prefs.insert(pref.doctor.clone(), pref);
    }

    pub fn preference(&self, doctor: &Doctor) -> WatchPreference {
        self.prefs
            .get(&doctor.id)
            .cloned()
            .unwrap_or_else(|| WatchPreference::default_for(doctor))
    }

    pub fn is_homed(&self, doctor: &DoctorId) -> bool {
        self.homed.contains(doctor)
    }

    fn enqueue(&mut self, key: JobKey, reason: Reason, address: Option<String>, body: String, now_ms: u64) -> bool {
        if self.jobs.contains_key(&key) {
            return false;
        }
        let id = format!("{}/{}/{}", key.recipient, key.channel, key.source);
        self.jobs.insert(
            key.clone(),
            NotificationJob {
                id,
                key,
                reason,
                address,
                body,
                state: JobState::Queued,
                attempts: 0,
                next_attempt_ms: now_ms,
                last_error: None,
            },
        );
        true
    }

    /// Queues jobs for events that were just durably applied (committed or
    /// received). Returns how many new jobs were created.
    pub fn on_applied(&mut self, events: &[Event], state: &State, now_ms: u64) -> usize {
        let mut created = 0;
        for event in events {
            let recipients = recipients_for_event(event, state, |d| {
                self.prefs.get(d).map_or(WatchScope::PrimaryOnly, |p| p.scope)
            });
            for (recipient, reason) in recipients {
                if !self.homed.contains(&recipient) {
                    continue;
                }
                let Some(doctor) = state.doctors.get(&recipient) else {
                    continue;
                };
                for channel in self.preference(doctor).channels {
                    let Some(body) = render(event, state, channel) else {
                        continue;
                    };
                    let key = JobKey {
                        recipient: recipient.clone(),
                        channel,
                        source: JobSource::Event { event: event.id() },
                    };
                    created += usize::from(self.enqueue(key, reason, address(doctor, channel), body, now_ms));
                }
            }
        }
        created
    }

    /// Queues staleness alerts for every homed user on a raise.
    pub fn on_staleness(&mut self, transitions: &[StalenessTransition], state: &State, now_ms: u64) -> usize {
        let mut created = 0;
        for t in transitions.iter().filter(|t| t.stale) {
            let homed: Vec<&Doctor> = self.homed.iter().filter_map(|d| state.doctors.get(d)).collect();
            let mut planned = Vec::new();
            for doctor in homed {
                for channel in self.preference(doctor).channels {
                    planned.push((
                        JobKey {
                            recipient: doctor.id.clone(),
                            channel,
                            source: JobSource::Staleness {
                                peer: t.peer.clone(),
                                at_ms: t.at_ms,
                            },
                        },
                        address(doctor, channel),
                        render_staleness(t, self.staleness_threshold_hours, channel),
                    ));
                }
            }
            for (key, addr, body) in planned {
                created += usize::from(self.enqueue(key, Reason::Staleness, addr, body, now_ms));
            }
        }
        created
    }

    /// Attempts every job that is due.
    pub fn dispatch_due(&mut self, transport: &mut dyn Transport, now_ms: u64) -> DispatchReport {
        let mut report = DispatchReport::default();
        for job in self.jobs.values_mut() {
            if job.state != JobState::Queued || now_ms < job.next_attempt_ms {
                continue;
            }
            report.attempted += 1;
            match dispatch(job, transport, now_ms).state {
                JobState::Sent => report.sent += 1,
                JobState::Failed => {
                    tracing::warn!(job = %job.id, error = ?job.last_error, "notification failed");
                    report.failed += 1;
                }
                JobState::Queued => {}
            }
        }
        report
    }

    pub fn jobs(&self) -> impl Iterator<Item = &NotificationJob> {
        self.jobs.values()
    }

    pub fn failed(&self) -> impl Iterator<Item = &NotificationJob> {
        self.jobs.values().filter(|j| j.state == JobState::Failed)
    }

    pub fn pending(&self) -> usize {
        self.jobs.values().filter(|j| j.state == JobState::Queued).count()
    }
}

fn address(doctor: &Doctor, channel: Channel) -> Option<String> {
    match channel {
        Channel::Email => doctor.contact.email.clone(),
        Channel::Sms => doctor.contact.phone.clone(),
    }
}

/// Records every delivery.
#[derive(Debug, Clone, Default)]
pub struct MemoryTransport {
    pub delivered: Vec<(Channel, String, String)>,
}

impl Transport for MemoryTransport {
    fn send(&mut self, channel: Channel, address: &str, body: &str) -> Result<(), TransportError> {
        self.delivered.push((channel, address.to_owned(), body.to_owned()));
        Ok(())
    }
}

/// Fails each send with probability `loss` (retryably), seeded.
#[derive(Debug)]
pub struct LossyTransport<T> {
    pub inner: T,
    loss: f64,
    rng: ChaCha8Rng,
}

impl<T> LossyTransport<T> {
    pub fn new(inner: T, loss: f64, seed: u64) -> Self {
        Self {
            inner,
            loss: loss.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<T: Transport> Transport for LossyTransport<T> {
    fn send(&mut self, channel: Channel, address: &str, body: &str) -> Result<(), TransportError> {
        if self.rng.random_bool(self.loss) {
            return Err(TransportError::Retryable("injected loss".into()));
        }
        self.inner.send(channel, address, body)
    }
}

/// Blocks for a fixed delay before each delivery.
#[derive(Debug)]
pub struct LatencyTransport<T> {
    pub inner: T,
    pub delay: Duration,
}

impl<T: Transport> Transport for LatencyTransport<T> {
    fn send(&mut self, channel: Channel, address: &str, body: &str) -> Result<(), TransportError> {
        std::thread::sleep(self.delay);
        self.inner.send(channel, address, body)
    }
}
