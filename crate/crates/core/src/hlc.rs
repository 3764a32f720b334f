//! Hybrid logical clock.
//!
//! Stamps are totally ordered by `(physical_ms, logical, server_id)`. A clock
//! keeps the high-water mark of everything it has emitted or observed, and
//! every emitted stamp is strictly greater than that mark.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ids::ServerId;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HlcTimestamp {
    pub physical_ms: u64,
    pub logical: u32,
    pub server_id: ServerId,
}

impl HlcTimestamp {
    pub fn new(physical_ms: u64, logical: u32, server_id: impl Into<ServerId>) -> Self {
        Self {
            physical_ms,
            logical,
            server_id: server_id.into(),
        }
    }

    fn time_part(&self) -> (u64, u32) {
        (self.physical_ms, self.logical)
    }
}

impl Ord for HlcTimestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.physical_ms, self.logical, &self.server_id).cmp(&(
            other.physical_ms,
            other.logical,
            &other.server_id,
        ))
    }
}

impl PartialOrd for HlcTimestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for HlcTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.physical_ms, self.logical, self.server_id)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed HLC timestamp {0:?}, expected physical_ms:logical:server_id")]
pub struct ParseHlcError(String);

impl FromStr for HlcTimestamp {
    type Err = ParseHlcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseHlcError(s.to_owned());
        let mut parts = s.splitn(3, ':');
        let physical_ms = parts.next().and_then(|p| p.parse().ok()).ok_or_else(err)?;
        let logical = parts.next().and_then(|p| p.parse().ok()).ok_or_else(err)?;
        let server = parts.next().filter(|p| !p.is_empty()).ok_or_else(err)?;
        Ok(Self::new(physical_ms, logical, server))
    }
}

impl Serialize for HlcTimestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HlcTimestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-server clock. `now` stamps a local event, `observe` folds in a
/// remote stamp without emitting one.
#[derive(Debug, Clone)]
pub struct HybridClock {
    server_id: ServerId,
    high_water: Option<(u64, u32)>,
}

impl HybridClock {
    pub fn new(server_id: ServerId) -> Self {
        Self {
            server_id,
            high_water: None,
        }
    }

    pub fn server_id(&self) -> &ServerId {
        &self.server_id
    }

    /// Largest `(physical_ms, logical)` pair emitted or observed so far.
    pub fn high_water(&self) -> Option<(u64, u32)> {
        self.high_water
    }

    pub fn now(&mut self, wall_ms: u64) -> HlcTimestamp {
        let next = match self.high_water {
            None => (wall_ms, 0),
            Some((phys, _)) if wall_ms > phys => (wall_ms, 0),
            Some((phys, u32::MAX)) => (phys + 1, 0),
            Some((phys, logical)) => (phys, logical + 1),
        };
        self.high_water = Some(next);
        HlcTimestamp::new(next.0, next.1, self.server_id.clone())
    }

    pub fn observe(&mut self, stamp: &HlcTimestamp) {
        let seen = stamp.time_part();
        if self.high_water.is_none_or(|hw| seen > hw) {
            self.high_water = Some(seen);
        }
    }
}
