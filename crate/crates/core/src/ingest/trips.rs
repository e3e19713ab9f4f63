//! Streaming trip ingestion and the six ordered cleaning rules.
//!
//! Parsing never buffers the file: the stream yields one row at a time,
//! either a raw trip or a per-row error for fields that are missing or
//! unreadable. Cleaning charges every discarded row to the *first* rule
//! it violates, so the report counts add up exactly to the input rows.

use super::ZoneId;
use crate::error::{Error, Result};
use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;

/// First and last trip years kept by the cleaning step.
pub const YEAR_MIN: i32 = 2018;
pub const YEAR_MAX: i32 = 2021;

/// Column-name mapping for trip files. Defaults match Chicago Data
/// Portal taxi exports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripSchema {
    pub start: String,
    pub end: String,
    pub seconds: String,
    pub miles: String,
    pub pickup: String,
    pub dropoff: String,
    pub fare: String,
}

impl Default for TripSchema {
    fn default() -> Self {
        TripSchema {
            start: "Trip Start Timestamp".into(),
            end: "Trip End Timestamp".into(),
            seconds: "Trip Seconds".into(),
            miles: "Trip Miles".into(),
            pickup: "Pickup Community Area".into(),
            dropoff: "Dropoff Community Area".into(),
            fare: "Trip Total".into(),
        }
    }
}

/// Field a row-level parse error points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowField {
    Start,
    End,
    Seconds,
    Miles,
}

impl std::fmt::Display for RowField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RowField::Start => "start",
            RowField::End => "end",
            RowField::Seconds => "seconds",
            RowField::Miles => "miles",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowErrorKind {
    Missing,
    Malformed,
}

/// A row that could not be turned into a [`RawTrip`]. These stay
/// in-band so cleaning can count them instead of aborting the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub field: RowField,
    pub kind: RowErrorKind,
    pub value: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            RowErrorKind::Missing => write!(f, "line {}: field {} is empty", self.line, self.field),
            RowErrorKind::Malformed => {
                write!(f, "line {}: field {} unreadable: {:?}", self.line, self.field, self.value)
            }
        }
    }
}

/// One parsed trip row before cleaning. Timestamps parsed; numeric and
/// zone fields stay optional so the cleaning rules can judge absence.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrip {
    pub line: u64,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub seconds: Option<f64>,
    pub miles: Option<f64>,
    pub pickup: Option<i64>,
    pub dropoff: Option<i64>,
    pub fare: Option<f64>,
}

/// A trip that passed every cleaning rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub duration_secs: f64,
    pub distance_miles: f64,
    pub pickup_zone: ZoneId,
    pub dropoff_zone: ZoneId,
    pub fare: Option<f64>,
}

pub type TripRow = std::result::Result<RawTrip, RowError>;

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%m/%d/%Y %I:%M:%S %p",
    "%m/%d/%Y %I:%M %p",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
];

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

/// Lenient numeric parse: tolerates thousands separators, requires a
/// finite result.
fn parse_number(s: &str) -> Option<f64> {
    let cleaned = if s.contains(',') { s.replace(',', "") } else { s.to_string() };
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Zone cells are integers in clean exports but sometimes carry a
/// trailing `.0`; anything else reads as absent.
fn parse_zone(s: &str) -> Option<i64> {
    if s.is_empty() {
        return None;
    }
    if let Ok(i) = s.parse::<i64>() {
        return Some(i);
    }
    s.parse::<f64>().ok().filter(|f| f.fract() == 0.0).map(|f| f as i64)
}

/// Streaming row iterator over one trip CSV.
pub struct TripStream<R: Read> {
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    idx: ColumnIndices,
}

struct ColumnIndices {
    start: usize,
    end: usize,
    seconds: usize,
    miles: usize,
    pickup: usize,
    dropoff: usize,
    fare: Option<usize>,
}

/// Opens a trip CSV for streaming. Fails fast when a mapped column is
/// missing from the header; the fare column alone is optional.
pub fn parse_trips<R: Read>(reader: R, schema: &TripSchema) -> Result<TripStream<R>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::SchemaError { column: name.to_string() })
    };
    let idx = ColumnIndices {
        start: require(&schema.start)?,
        end: require(&schema.end)?,
        seconds: require(&schema.seconds)?,
        miles: require(&schema.miles)?,
        pickup: require(&schema.pickup)?,
        dropoff: require(&schema.dropoff)?,
        fare: find(&schema.fare),
    };
    Ok(TripStream { reader, record: csv::StringRecord::new(), idx })
}

impl<R: Read> TripStream<R> {
    fn parse_record(&self) -> TripRow {
        let line = self.record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| self.record.get(i).unwrap_or("");

        let timestamp = |i: usize, field: RowField| {
            let s = cell(i);
            if s.is_empty() {
                return Err(RowError { line, field, kind: RowErrorKind::Missing, value: String::new() });
            }
            parse_timestamp(s).ok_or_else(|| RowError {
                line,
                field,
                kind: RowErrorKind::Malformed,
                value: s.to_string(),
            })
        };
        let number = |i: usize, field: RowField| {
            let s = cell(i);
            if s.is_empty() {
                return Ok(None);
            }
            parse_number(s).map(Some).ok_or_else(|| RowError {
                line,
                field,
                kind: RowErrorKind::Malformed,
                value: s.to_string(),
            })
        };

        let start = timestamp(self.idx.start, RowField::Start)?;
        let end = timestamp(self.idx.end, RowField::End)?;
        let seconds = number(self.idx.seconds, RowField::Seconds)?;
        let miles = number(self.idx.miles, RowField::Miles)?;
        let pickup = parse_zone(cell(self.idx.pickup));
        let dropoff = parse_zone(cell(self.idx.dropoff));
        // Fare is informational only: unreadable fares never sink a row.
        let fare = self.idx.fare.and_then(|i| parse_number(cell(i)));

        Ok(RawTrip { line, start, end, seconds, miles, pickup, dropoff, fare })
    }
}

impl<R: Read> Iterator for TripStream<R> {
    type Item = Result<TripRow>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.reader.read_record(&mut self.record) {
            Err(e) => Some(Err(e.into())),
            Ok(false) => None,
            Ok(true) => Some(Ok(self.parse_record())),
        }
    }
}

pub const RULE_COUNT: usize = 6;

/// The ordered cleaning rules. A row is charged to the first rule it
/// violates.
pub const RULE_DESCRIPTIONS: [&str; RULE_COUNT] = [
    "both timestamps present and readable",
    "trip years within the recorded range",
    "start strictly before end",
    "duration longer than 60 seconds",
    "distance longer than 0.5 miles",
    "pickup and dropoff zones present and valid",
];

/// Accounting of one cleaning pass: `rows_in` always equals `rows_out`
/// plus the sum of the per-rule rejections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_in: u64,
    pub rows_out: u64,
    pub rejected_per_rule: BTreeMap<u8, u64>,
}

impl CleaningReport {
    pub fn rejected(&self, rule: u8) -> u64 {
        self.rejected_per_rule.get(&rule).copied().unwrap_or(0)
    }

    pub fn total_rejected(&self) -> u64 {
        self.rejected_per_rule.values().sum()
    }

    /// Conservation identity over the pass.
    pub fn balanced(&self) -> bool {
        self.rows_in == self.rows_out + self.total_rejected()
    }
}

/// Applies the six rules row by row while tallying the report.
#[derive(Debug, Default)]
pub struct Cleaner {
    rows_in: u64,
    rows_out: u64,
    rejected: [u64; RULE_COUNT],
}

impl Cleaner {
    pub fn new() -> Self {
        Cleaner::default()
    }

    fn reject(&mut self, rule: usize) -> Option<TripRecord> {
        self.rejected[rule - 1] += 1;
        None
    }

    /// Judges one row: `Some` for survivors, `None` for rejects.
    pub fn judge(&mut self, row: TripRow) -> Option<TripRecord> {
        self.rows_in += 1;
        let raw = match row {
            // Unreadable fields map onto the rule that would have
            // inspected them: timestamps to rule 1, duration to rule 4,
            // distance to rule 5.
            Err(e) => {
                return match e.field {
                    RowField::Start | RowField::End => self.reject(1),
                    RowField::Seconds => self.reject(4),
                    RowField::Miles => self.reject(5),
                }
            }
            Ok(raw) => raw,
        };

        let years_ok = |y: i32| (YEAR_MIN..=YEAR_MAX).contains(&y);
        if !years_ok(raw.start.year()) || !years_ok(raw.end.year()) {
            return self.reject(2);
        }
        if raw.start >= raw.end {
            return self.reject(3);
        }
        // Recorded duration wins; otherwise fall back to end - start.
        let duration_secs = raw
            .seconds
            .unwrap_or_else(|| (raw.end - raw.start).num_seconds() as f64);
        if duration_secs <= 60.0 {
            return self.reject(4);
        }
        let distance_miles = match raw.miles {
            Some(m) if m > 0.5 => m,
            _ => return self.reject(5),
        };
        let zone = |v: Option<i64>| v.and_then(|z| ZoneId::try_from(z).ok());
        let (Some(pickup_zone), Some(dropoff_zone)) = (zone(raw.pickup), zone(raw.dropoff))
        else {
            return self.reject(6);
        };

        self.rows_out += 1;
        Some(TripRecord {
            start: raw.start,
            end: raw.end,
            duration_secs,
            distance_miles,
            pickup_zone,
            dropoff_zone,
            fare: raw.fare,
        })
    }

    pub fn report(&self) -> CleaningReport {
        let rejected_per_rule = (1..=RULE_COUNT as u8)
            .map(|r| (r, self.rejected[r as usize - 1]))
            .collect();
        CleaningReport { rows_in: self.rows_in, rows_out: self.rows_out, rejected_per_rule }
    }
}

/// Collecting convenience over [`Cleaner`] for in-memory inputs; large
/// files should drive the cleaner row by row instead.
pub fn clean_trips(
    rows: impl IntoIterator<Item = Result<TripRow>>,
) -> Result<(Vec<TripRecord>, CleaningReport)> {
    let mut cleaner = Cleaner::new();
    let mut kept = Vec::new();
    for row in rows {
        if let Some(record) = cleaner.judge(row?) {
            kept.push(record);
        }
    }
    Ok((kept, cleaner.report()))
}
