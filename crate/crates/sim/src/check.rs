//! Post-run audits recomputed from the final logs.

use std::collections::{BTreeMap, BTreeSet};

use medsync_core::notify::{recipients_for_event, render, Channel, JobKey, JobSource, WatchScope};
use medsync_core::{materialize, Event, EventId, ServerId, VersionVector};
use serde::Serialize;

use crate::run::ScenarioResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServerView {
    pub digest: VersionVector,
    pub state_hash: String,
    /// Events some other server holds that this one lacks.
    pub missing: Vec<EventId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub servers: BTreeMap<ServerId, ServerView>,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (id, v) in &self.servers {
            if !v.missing.is_empty() {
                let names: Vec<String> = v.missing.iter().map(ToString::to_string).collect();
                writeln!(f, "{id} is missing {}", names.join(", "))?;
            }
        }
        Ok(())
    }
}

fn contiguous_digest(log: &[Event]) -> VersionVector {
    let mut seqs: BTreeMap<&ServerId, BTreeSet<u64>> = BTreeMap::new();
    for e in log {
        seqs.entry(&e.origin).or_default().insert(e.seq);
    }
    let mut vv = VersionVector::new();
    for (origin, set) in seqs {
        let top = (1..).take_while(|n| set.contains(n)).last().unwrap_or(0);
        if top > 0 {
            vv.advance(origin, top);
        }
    }
    vv
}

/// Recomputes each server's digest and canonical state hash from its log.
/// `Ok` iff all agree; otherwise names the events each server lacks.
pub fn check_convergence(result: &ScenarioResult) -> Result<(), Divergence> {
    let union: BTreeSet<EventId> = result.logs.values().flatten().map(Event::id).collect();
    let servers: BTreeMap<ServerId, ServerView> = result
        .logs
        .iter()
        .map(|(id, log)| {
            let have: BTreeSet<EventId> = log.iter().map(Event::id).collect();
            (
                id.clone(),
                ServerView {
                    digest: contiguous_digest(log),
                    state_hash: materialize(log).canonical_hash(),
                    missing: union.difference(&have).cloned().collect(),
                },
            )
        })
        .collect();
    let mut views = servers.values();
    let first = views.next();
    let agree = views.all(|v| {
        let f = first.expect("non-empty");
        v.digest == f.digest && v.state_hash == f.state_hash
    });
    if agree && servers.values().all(|v| v.missing.is_empty()) {
        Ok(())
    } else {
        Err(Divergence { servers })
    }
}

/// Fault injection: removes one event from one server's final log.
pub fn drop_event(result: &mut ScenarioResult, server: &ServerId, event: &EventId) -> bool {
    let Some(log) = result.logs.get_mut(server) else {
        return false;
    };
    let before = log.len();
    log.retain(|e| e.id() != *event);
    log.len() != before
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NotificationAudit {
    pub jobs: usize,
    pub distinct_keys: usize,
    /// Keys queued on more than one server.
    pub cross_server_duplicates: usize,
    /// Event jobs whose recipient is not homed on the queuing server.
    pub foreign_recipients: usize,
    /// Transport deliveries minus jobs marked sent.
    pub excess_deliveries: usize,
    /// Event-job keys the replay oracle expects but no server queued.
    pub missing: Vec<JobKey>,
    /// Event-job keys queued that the replay oracle does not expect.
    pub unexpected: Vec<JobKey>,
}

impl NotificationAudit {
    pub fn exactly_once(&self) -> bool {
        self.jobs == self.distinct_keys
            && self.cross_server_duplicates == 0
            && self.foreign_recipients == 0
            && self.excess_deliveries == 0
            && self.missing.is_empty()
            && self.unexpected.is_empty()
    }
}

/// Audits notification jobs. The oracle replays each server's apply
/// batches, materializing the log prefix from scratch after each batch,
/// and lists every `(recipient, channel, event)` a homed user qualifies
/// for. Users keep default preferences in simulation, so every channel
/// with an address applies.
pub fn audit_notifications(result: &ScenarioResult) -> NotificationAudit {
    let mut audit = NotificationAudit::default();
    let mut seen: BTreeMap<&JobKey, usize> = BTreeMap::new();
    for (server, keys) in &result.notification_keys {
        audit.jobs += keys.len();
        let homed: BTreeSet<_> = result.homed.get(server).into_iter().flatten().collect();
        for k in keys {
            *seen.entry(k).or_default() += 1;
            if matches!(k.source, JobSource::Event { .. }) && !homed.contains(&k.recipient) {
                audit.foreign_recipients += 1;
            }
        }
    }
    audit.distinct_keys = seen.len();
    audit.cross_server_duplicates = seen.values().filter(|&&n| n > 1).count();
    for stats in result.notifications.values() {
        audit.excess_deliveries += stats.deliveries.saturating_sub(stats.sent);
    }

    let mut expected: BTreeSet<JobKey> = BTreeSet::new();
    for (server, batches) in &result.apply_batches {
        let homed: BTreeSet<_> = result.homed.get(server).into_iter().flatten().collect();
        let log: BTreeMap<EventId, &Event> = result.logs[server].iter().map(|e| (e.id(), e)).collect();
        let mut prefix: Vec<&Event> = Vec::new();
        for batch in batches {
            prefix.extend(batch.iter().filter_map(|id| log.get(id).copied()));
            let state = materialize(prefix.iter().copied());
            for id in batch {
                let Some(event) = log.get(id) else { continue };
                for (recipient, _) in recipients_for_event(event, &state, |_| WatchScope::PrimaryOnly) {
                    if !homed.contains(&recipient) {
                        continue;
                    }
                    let doctor = &state.doctors[&recipient];
                    for (channel, addr) in [
                        (Channel::Email, &doctor.contact.email),
                        (Channel::Sms, &doctor.contact.phone),
                    ] {
                        if addr.is_some() && render(event, &state, channel).is_some() {
                            expected.insert(JobKey {
                                recipient: recipient.clone(),
                                channel,
                                source: JobSource::Event { event: id.clone() },
                            });
                        }
                    }
                }
            }
        }
    }
    let actual: BTreeSet<JobKey> = seen
        .keys()
        .filter(|k| matches!(k.source, JobSource::Event { .. }))
        .map(|k| (*k).clone())
        .collect();
    audit.missing = expected.difference(&actual).cloned().collect();
    audit.unexpected = actual.difference(&expected).cloned().collect();
    audit
}
