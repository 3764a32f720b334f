//! Many random scenarios, each checked for convergence and exactly-once
//! notification.

use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::check::{audit_notifications, check_convergence};
use crate::run::run_scenario;
use crate::scenario::{random_scenario, RandomShape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepReport {
    pub scenarios: usize,
    pub converged: usize,
    pub notification_exact: usize,
    pub events: u64,
    pub notification_jobs: usize,
    pub peer_calls_during_commits: u64,
    pub peer_calls_in_outage: u64,
    pub failures: Vec<SeedFailure>,
    #[serde(serialize_with = "as_secs")]
    pub elapsed: Duration,
}

fn as_secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl SweepReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty() && self.converged == self.scenarios && self.notification_exact == self.scenarios
    }
}

pub fn sweep(seeds: RangeInclusive<u64>, shape: &RandomShape) -> SweepReport {
    let started = Instant::now();
    let mut report = SweepReport::default();
    for seed in seeds {
        report.scenarios += 1;
        let scenario = random_scenario(seed, *shape);
        let result = match run_scenario(&scenario) {
            Ok(r) => r,
            Err(e) => {
                report.failures.push(SeedFailure {
                    seed,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        report.peer_calls_during_commits += result.commits.peer_calls_during_commits;
        report.peer_calls_in_outage += result.sync.peer_calls_in_outage;
        report.events += result.final_digests.values().map(|d| d.total()).max().unwrap_or(0);
        match check_convergence(&result) {
            Ok(()) if result.converged => report.converged += 1,
            Ok(()) => report.failures.push(SeedFailure {
                seed,
                reason: "did not converge before the quiescence limit".into(),
            }),
            Err(d) => report.failures.push(SeedFailure {
                seed,
                reason: d.to_string(),
            }),
        }
        let audit = audit_notifications(&result);
        report.notification_jobs += audit.jobs;
        if audit.exactly_once() {
            report.notification_exact += 1;
        } else {
            report.failures.push(SeedFailure {
                seed,
                reason: format!("notification audit: {audit:?}"),
            });
        }
    }
    report.elapsed = started.elapsed();
    report
}
