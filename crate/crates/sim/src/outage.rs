//! Link-outage traces.
//!
//! Each server has one uplink; two servers can talk only while both uplinks
//! are up.

use std::collections::BTreeMap;
use std::ops::Range;

use medsync_core::ServerId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MINUTE_MS: u64 = 60_000;
pub const HOUR_MS: u64 = 60 * MINUTE_MS;
pub const DAY_MS: u64 = 24 * HOUR_MS;
pub const WEEK_MS: u64 = 7 * DAY_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Outage {
    pub start_ms: u64,
    pub duration_ms: u64,
}

impl Outage {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_ms
    }

    fn overlaps(&self, other: &Outage) -> bool {
        self.start_ms < other.end_ms() && other.start_ms < self.end_ms()
    }
}

/// Generator parameters. Durations and gaps are drawn uniformly from the
/// half-open millisecond ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutageParams {
    /// Short outages per hour on average; scales the inter-arrival range.
    pub short_rate_per_hour: f64,
    pub long_rate_per_week: f64,
    pub horizon_ms: u64,
    pub short_duration_ms: (u64, u64),
    /// Inter-arrival at rate 1/h; divided by the rate.
    pub short_gap_ms: (u64, u64),
    pub long_duration_ms: (u64, u64),
}

impl Default for OutageParams {
    fn default() -> Self {
        Self {
            short_rate_per_hour: 1.0,
            long_rate_per_week: 3.0,
            horizon_ms: WEEK_MS,
            short_duration_ms: (MINUTE_MS, 4 * MINUTE_MS),
            short_gap_ms: (30 * MINUTE_MS, 90 * MINUTE_MS),
            long_duration_ms: (30 * MINUTE_MS, 90 * MINUTE_MS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OutageError {
    #[error("horizon {horizon_ms} ms is shorter than the longest short outage ({needed_ms} ms)")]
    HorizonTooSmall { horizon_ms: u64, needed_ms: u64 },
    #[error("rate {0} is negative or not finite")]
    InvalidRate(f64),
    #[error("empty or inverted range {0:?}")]
    InvalidRange((u64, u64)),
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (u64, u64)) -> u64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Outages for one link, sorted by start, non-overlapping, inside the
/// horizon. Long outages are spread one per equal slice of the horizon;
/// short outages that would overlap a long one are dropped.
pub fn generate_outage_trace(seed: u64, params: &OutageParams) -> Result<Vec<Outage>, OutageError> {
    for rate in [params.short_rate_per_hour, params.long_rate_per_week] {
        if !rate.is_finite() || rate < 0.0 {
            return Err(OutageError::InvalidRate(rate));
        }
    }
    for r in [params.short_duration_ms, params.short_gap_ms, params.long_duration_ms] {
        if r.0 > r.1 || r.1 == 0 {
            return Err(OutageError::InvalidRange(r));
        }
    }
    if params.short_rate_per_hour == 0.0 && params.long_rate_per_week == 0.0 {
        return Ok(Vec::new());
    }
    if params.horizon_ms < params.short_duration_ms.1 {
        return Err(OutageError::HorizonTooSmall {
            horizon_ms: params.horizon_ms,
            needed_ms: params.short_duration_ms.1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = params.horizon_ms;
    let mut long = Vec::new();
    let count = (params.long_rate_per_week * horizon as f64 / WEEK_MS as f64).round() as u64;
    if let Some(slice) = horizon.checked_div(count) {
        for i in 0..count {
            let duration = draw(&mut rng, params.long_duration_ms).min(slice);
            let lo = i * slice;
            let start = lo + draw(&mut rng, (0, slice - duration));
            long.push(Outage {
                start_ms: start,
                duration_ms: duration,
            });
        }
    }

    let mut out = long.clone();
    if params.short_rate_per_hour > 0.0 {
        let scale = |v: u64| (v as f64 / params.short_rate_per_hour) as u64;
        let gap = (scale(params.short_gap_ms.0), scale(params.short_gap_ms.1).max(1));
        let mut t = draw(&mut rng, gap);
        while t < horizon {
            let o = Outage {
                start_ms: t,
                duration_ms: draw(&mut rng, params.short_duration_ms),
            };
            if o.end_ms() <= horizon && !long.iter().any(|l| l.overlaps(&o)) {
                out.push(o);
            }
            t = o.end_ms() + draw(&mut rng, gap);
        }
    }
    out.sort();
    Ok(out)
}

/// Merges overlapping or touching intervals.
pub fn normalize(mut outages: Vec<Outage>) -> Vec<Outage> {
    outages.sort();
    let mut out: Vec<Outage> = Vec::with_capacity(outages.len());
    for o in outages {
        match out.last_mut() {
            Some(last) if o.start_ms <= last.end_ms() => {
                let end = last.end_ms().max(o.end_ms());
                last.duration_ms = end - last.start_ms;
            }
            _ => out.push(o),
        }
    }
    out
}

/// Per-link outage schedule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageTrace {
    pub horizon_ms: u64,
    pub links: BTreeMap<ServerId, Vec<Outage>>,
}

impl OutageTrace {
    /// One independent trace per link, seeded from `seed` and the link's
    /// position in `links`.
    pub fn generate<'a>(
        seed: u64,
        params: &OutageParams,
        links: impl IntoIterator<Item = &'a ServerId>,
    ) -> Result<Self, OutageError> {
        let mut trace = Self {
            horizon_ms: params.horizon_ms,
            links: BTreeMap::new(),
        };
        for (i, link) in links.into_iter().enumerate() {
            let sub = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            trace.links.insert(link.clone(), generate_outage_trace(sub, params)?);
        }
        Ok(trace)
    }

    pub fn normalized(mut self) -> Self {
        for list in self.links.values_mut() {
            *list = normalize(std::mem::take(list));
        }
        self
    }

    pub fn is_down(&self, link: &ServerId, at_ms: u64) -> bool {
        self.links
            .get(link)
            .is_some_and(|l| l.iter().any(|o| (o.start_ms..o.end_ms()).contains(&at_ms)))
    }

    /// Whether `at_ms` falls inside any outage on any of `links`.
    pub fn any_down<'a>(&self, links: impl IntoIterator<Item = &'a ServerId>, at_ms: u64) -> bool {
        links.into_iter().any(|l| self.is_down(l, at_ms))
    }

    pub fn windows(&self, link: &ServerId) -> impl Iterator<Item = Range<u64>> + '_ {
        self.links
            .get(link)
            .into_iter()
            .flatten()
            .map(|o| o.start_ms..o.end_ms())
    }

    /// End of the last outage on any link.
    pub fn last_end_ms(&self) -> u64 {
        self.links
            .values()
            .flatten()
            .map(Outage::end_ms)
            .max()
            .unwrap_or(0)
    }
}
