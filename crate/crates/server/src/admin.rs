//! Offline administration: writes straight to a server's event log. Run
//! these while that server is stopped; the events replicate once it
//! starts and syncs.

use std::path::Path;

use medsync_core::domain::{Doctor, Group, Hospital};
use medsync_core::event::UserRecord;
use medsync_core::fixture::{Fixture, FixtureError};
use medsync_core::replica::CommitError;
use medsync_core::{Event, EventPayload};

use crate::api::MIN_SECRET_LEN;
use crate::auth::{hash_secret, AuthError};
use crate::config::Config;
use crate::node::{open_replica, NodeError};

#[derive(Debug, thiserror::Error)]
pub enum AdminError {
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Commit(#[from] CommitError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("secret must be at least {MIN_SECRET_LEN} characters")]
    WeakSecret,
}

fn commit_all(config: &Config, now_ms: u64, payloads: Vec<EventPayload>) -> Result<Vec<Event>, AdminError> {
    let mut replica = open_replica(config, now_ms)?;
    payloads
        .into_iter()
        .map(|p| replica.commit(p, now_ms).map_err(AdminError::from))
        .collect()
}

pub fn create_user(config: &Config, doctor: Doctor, secret: &str, now_ms: u64) -> Result<Event, AdminError> {
    if secret.chars().count() < MIN_SECRET_LEN {
        return Err(AdminError::WeakSecret);
    }
    let payload = EventPayload::UserCreated(UserRecord {
        doctor,
        credential: Some(hash_secret(secret)?),
    });
    Ok(commit_all(config, now_ms, vec![payload])?.remove(0))
}

pub fn create_hospital(config: &Config, hospital: Hospital, now_ms: u64) -> Result<Event, AdminError> {
    Ok(commit_all(config, now_ms, vec![EventPayload::HospitalCreated(hospital)])?.remove(0))
}

pub fn create_group(config: &Config, group: Group, now_ms: u64) -> Result<Event, AdminError> {
    Ok(commit_all(config, now_ms, vec![EventPayload::GroupCreated(group)])?.remove(0))
}

/// Loads a fixture directory into the log, stopping at the first rejected
/// record. Fixture accounts carry no secret, so they cannot log in.
pub fn seed_fixture(config: &Config, dir: &Path, now_ms: u64) -> Result<usize, AdminError> {
    let fixture = Fixture::load(dir)?;
    Ok(commit_all(config, now_ms, fixture.seed_payloads())?.len())
}
