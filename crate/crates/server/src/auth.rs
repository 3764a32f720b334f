//! Account secrets and sessions.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use medsync_core::event::Credential;
use medsync_core::{DoctorId, State};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const SESSION_TTL_MS: u64 = 24 * 3_600_000;
pub const FAILURE_WINDOW_MS: u64 = 60_000;
pub const MAX_FAILURES: usize = 5;
const SCHEME: &str = "argon2id";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("unknown account or wrong secret")]
    BadCredentials,
    #[error("account {0} has no login secret")]
    Inactive(DoctorId),
    #[error("too many failed attempts; retry in {retry_after_ms} ms")]
    RateLimited { retry_after_ms: u64 },
    #[error("missing or unknown session token")]
    InvalidToken,
    #[error("session expired")]
    Expired,
    #[error("hashing failed: {0}")]
    Hash(String),
}

pub fn hash_secret(secret: &str) -> Result<Credential, AuthError> {
    let bytes: [u8; 16] = rand::rng().random();
    let salt = SaltString::encode_b64(&bytes).map_err(|e| AuthError::Hash(e.to_string()))?;
    let phc = Argon2::default()
        .hash_password(secret.as_bytes(), &salt)
        .map_err(|e| AuthError::Hash(e.to_string()))?;
    Ok(Credential {
        scheme: SCHEME.into(),
        verifier: phc.to_string(),
    })
}

pub fn verify_secret(credential: &Credential, secret: &str) -> bool {
    if credential.scheme != SCHEME {
        return false;
    }
    let Ok(parsed) = PasswordHash::new(&credential.verifier) else {
        return false;
    };
    Argon2::default()
        .verify_password(secret.as_bytes(), &parsed)
        .is_ok()
}

/// 256 random bits, hex encoded.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionToken(String);

impl SessionToken {
    fn generate() -> Self {
        let bytes: [u8; 32] = rand::rng().random();
        Self(bytes.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionToken(..)")
    }
}

impl From<&str> for SessionToken {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: SessionToken,
    pub doctor: DoctorId,
    pub issued_at_ms: u64,
    pub expires_at_ms: u64,
}

#[derive(Debug, Default)]
pub struct Sessions {
    live: HashMap<SessionToken, Session>,
    failures: HashMap<DoctorId, VecDeque<u64>>,
}

impl Sessions {
    fn recent_failures(&mut self, doctor: &DoctorId, now_ms: u64) -> &mut VecDeque<u64> {
        let q = self.failures.entry(doctor.clone()).or_default();
        while q.front().is_some_and(|&t| t + FAILURE_WINDOW_MS <= now_ms) {
            q.pop_front();
        }
        q
    }

    /// Refuses an attempt once the account has `MAX_FAILURES` failures
    /// inside the trailing window.
    pub fn check_rate(&mut self, doctor: &DoctorId, now_ms: u64) -> Result<(), AuthError> {
        let q = self.recent_failures(doctor, now_ms);
        match q.front() {
            Some(&oldest) if q.len() >= MAX_FAILURES => Err(AuthError::RateLimited {
                retry_after_ms: oldest + FAILURE_WINDOW_MS - now_ms,
            }),
            _ => Ok(()),
        }
    }

    pub fn record_failure(&mut self, doctor: &DoctorId, now_ms: u64) {
        self.recent_failures(doctor, now_ms).push_back(now_ms);
    }

    pub fn issue(&mut self, doctor: DoctorId, now_ms: u64) -> Session {
        self.failures.remove(&doctor);
        self.live.retain(|_, s| s.expires_at_ms > now_ms);
        let session = Session {
            token: SessionToken::generate(),
            doctor,
            issued_at_ms: now_ms,
            expires_at_ms: now_ms + SESSION_TTL_MS,
        };
        self.live.insert(session.token.clone(), session.clone());
        session
    }

    pub fn resolve(&mut self, token: &SessionToken, now_ms: u64) -> Result<Session, AuthError> {
        let session = self.live.get(token).ok_or(AuthError::InvalidToken)?;
        if session.expires_at_ms <= now_ms {
            self.live.remove(token);
            return Err(AuthError::Expired);
        }
        Ok(session.clone())
    }

    pub fn revoke(&mut self, token: &SessionToken) -> bool {
        self.live.remove(token).is_some()
    }
}

/// Looks up the stored verifier for `doctor`. Unknown accounts and wrong
/// secrets are indistinguishable to the caller.
pub fn credential_for(state: &State, doctor: &DoctorId) -> Result<Credential, AuthError> {
    if !state.doctors.contains_key(doctor) {
        return Err(AuthError::BadCredentials);
    }
    state
        .credentials
        .get(doctor)
        .cloned()
        .ok_or_else(|| AuthError::Inactive(doctor.clone()))
}
