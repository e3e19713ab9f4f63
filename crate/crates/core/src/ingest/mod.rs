//! Raw-data ingestion: streaming trip parsing, ordered cleaning rules
//! with per-rule accounting, daily aggregation, and the epidemic /
//! vaccination / zone reference tables.

mod aggregate;
mod tables;
mod trips;

pub use aggregate::{
    aggregate_daily, daily_mean_distance, AggregateKey, DailyAggregates, DailyAggregator,
    GroupKey,
};
pub use tables::{
    parse_epidemic, parse_vaccination, parse_zones, EpidemicDaily, EpidemicSchema,
    VaccinationDaily, VaccinationSchema, ZoneInfo, ZoneSchema,
};
pub use trips::{
    clean_trips, parse_trips, CleaningReport, Cleaner, RawTrip, RowError, RowErrorKind,
    RowField, TripRecord, TripRow, TripSchema, TripStream, RULE_COUNT, RULE_DESCRIPTIONS,
};

use serde::Serialize;

/// Number of Chicago community areas; valid zone ids are `1..=77`.
pub const ZONE_COUNT: u32 = 77;

/// Validated community-area id. Constructible only through
/// [`ZoneId::new`], so a held value is always in range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ZoneId(u32);

impl ZoneId {
    pub fn new(id: u32) -> Option<Self> {
        (1..=ZONE_COUNT).contains(&id).then_some(ZoneId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for ZoneId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<i64> for ZoneId {
    type Error = ();

    fn try_from(v: i64) -> std::result::Result<Self, ()> {
        u32::try_from(v).ok().and_then(ZoneId::new).ok_or(())
    }
}
