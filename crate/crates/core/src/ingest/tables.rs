//! Parsers for the small daily tables: epidemic counts, vaccination
//! counts, and the community-area (zone) reference table.
//!
//! Unlike trip ingestion these files are tiny, so errors are fatal and
//! carry exact line numbers. Rows may arrive in any order; output is
//! date-sorted (zones: id-sorted) with duplicates and cumulative
//! decreases rejected.

use super::ZoneId;
use crate::error::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::io::Read;

/// One day of city-wide epidemic counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpidemicDaily {
    pub date: NaiveDate,
    pub new_cases: u64,
    pub new_hospitalizations: u64,
    pub new_deaths: u64,
    pub cum_cases: u64,
    pub cum_hospitalizations: u64,
    pub cum_deaths: u64,
}

/// One day of city-wide vaccination counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaccinationDaily {
    pub date: NaiveDate,
    pub new_first: u64,
    pub new_second: u64,
    pub new_total: u64,
    pub cum_first: u64,
    pub cum_second: u64,
    pub cum_total: u64,
}

/// One community area from the zone reference table.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneInfo {
    pub id: ZoneId,
    pub name: String,
    pub population: u64,
    pub area_sq_mi: f64,
    /// Persons per square mile; computed from population and area when
    /// the file does not carry a density column.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpidemicSchema {
    pub date: String,
    pub new_cases: String,
    pub new_hospitalizations: String,
    pub new_deaths: String,
    pub cum_cases: String,
    pub cum_hospitalizations: String,
    pub cum_deaths: String,
}

impl Default for EpidemicSchema {
    fn default() -> Self {
        EpidemicSchema {
            date: "date".into(),
            new_cases: "new_cases".into(),
            new_hospitalizations: "new_hospitalizations".into(),
            new_deaths: "new_deaths".into(),
            cum_cases: "cum_cases".into(),
            cum_hospitalizations: "cum_hospitalizations".into(),
            cum_deaths: "cum_deaths".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaccinationSchema {
    pub date: String,
    pub new_first: String,
    pub new_second: String,
    pub new_total: String,
    pub cum_first: String,
    pub cum_second: String,
    pub cum_total: String,
}

impl Default for VaccinationSchema {
    fn default() -> Self {
        VaccinationSchema {
            date: "date".into(),
            new_first: "new_first".into(),
            new_second: "new_second".into(),
            new_total: "new_total".into(),
            cum_first: "cum_first".into(),
            cum_second: "cum_second".into(),
            cum_total: "cum_total".into(),
        }
    }
}

/// Column mapping for the zone table. The density column is optional:
/// when absent (or blank) density falls back to population / area.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneSchema {
    pub id: String,
    pub name: String,
    pub population: String,
    pub area_sq_mi: String,
    pub density: String,
}

impl Default for ZoneSchema {
    fn default() -> Self {
        ZoneSchema {
            id: "id".into(),
            name: "name".into(),
            population: "population".into(),
            area_sq_mi: "area_sq_mi".into(),
            density: "density".into(),
        }
    }
}

const DATE_FORMATS: [&str; 2] = ["%Y-%m-%d", "%m/%d/%Y"];

fn malformed(line: u64, column: &str, value: &str) -> Error {
    Error::MalformedRow { line, column: column.to_string(), value: value.to_string() }
}

fn parse_date(line: u64, column: &str, s: &str) -> Result<NaiveDate> {
    DATE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(s, fmt).ok())
        .ok_or_else(|| malformed(line, column, s))
}

/// Count cells must be non-negative integers; thousands separators and
/// a redundant `.0` are tolerated.
fn parse_count(line: u64, column: &str, s: &str) -> Result<u64> {
    let cleaned = if s.contains(',') { s.replace(',', "") } else { s.to_string() };
    if let Ok(v) = cleaned.parse::<u64>() {
        return Ok(v);
    }
    cleaned
        .parse::<f64>()
        .ok()
        .filter(|f| f.is_finite() && *f >= 0.0 && f.fract() == 0.0)
        .map(|f| f as u64)
        .ok_or_else(|| malformed(line, column, s))
}

fn parse_float(line: u64, column: &str, s: &str) -> Result<f64> {
    let cleaned = if s.contains(',') { s.replace(',', "") } else { s.to_string() };
    cleaned
        .parse::<f64>()
        .ok()
        .filter(|f| f.is_finite())
        .ok_or_else(|| malformed(line, column, s))
}

type NumberedRecords = Vec<(u64, csv::StringRecord)>;

/// Reads a whole small CSV into (line, record) pairs and resolves the
/// requested columns against the header.
fn read_table<R: Read, const N: usize>(
    reader: R,
    columns: [&str; N],
) -> Result<(NumberedRecords, [usize; N])> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; N];
    for (slot, name) in idx.iter_mut().zip(columns) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaError { column: name.to_string() })?;
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, record));
    }
    Ok((rows, idx))
}

fn sort_and_check_dates<T>(rows: &mut [T], date_of: impl Fn(&T) -> NaiveDate) -> Result<()> {
    rows.sort_by_key(|r| date_of(r));
    for pair in rows.windows(2) {
        if date_of(&pair[0]) == date_of(&pair[1]) {
            return Err(Error::DuplicateDate { date: date_of(&pair[1]) });
        }
    }
    Ok(())
}

/// Flags the first date where a cumulative column decreases.
fn check_monotone<T>(
    rows: &[T],
    date_of: impl Fn(&T) -> NaiveDate,
    value_of: impl Fn(&T) -> u64,
) -> Result<()> {
    for pair in rows.windows(2) {
        if value_of(&pair[1]) < value_of(&pair[0]) {
            return Err(Error::NonMonotoneCumulative { date: date_of(&pair[1]) });
        }
    }
    Ok(())
}

pub fn parse_epidemic<R: Read>(reader: R, schema: &EpidemicSchema) -> Result<Vec<EpidemicDaily>> {
    let columns = [
        schema.date.as_str(),
        schema.new_cases.as_str(),
        schema.new_hospitalizations.as_str(),
        schema.new_deaths.as_str(),
        schema.cum_cases.as_str(),
        schema.cum_hospitalizations.as_str(),
        schema.cum_deaths.as_str(),
    ];
    let (records, idx) = read_table(reader, columns)?;
    let mut rows = Vec::with_capacity(records.len());
    for (line, record) in &records {
        let cell = |i: usize| record.get(idx[i]).unwrap_or("");
        let count = |i: usize| parse_count(*line, columns[i], cell(i));
        rows.push(EpidemicDaily {
            date: parse_date(*line, columns[0], cell(0))?,
            new_cases: count(1)?,
            new_hospitalizations: count(2)?,
            new_deaths: count(3)?,
            cum_cases: count(4)?,
            cum_hospitalizations: count(5)?,
            cum_deaths: count(6)?,
        });
    }
    sort_and_check_dates(&mut rows, |r| r.date)?;
    check_monotone(&rows, |r| r.date, |r| r.cum_cases)?;
    check_monotone(&rows, |r| r.date, |r| r.cum_hospitalizations)?;
    check_monotone(&rows, |r| r.date, |r| r.cum_deaths)?;
    Ok(rows)
}

pub fn parse_vaccination<R: Read>(
    reader: R,
    schema: &VaccinationSchema,
) -> Result<Vec<VaccinationDaily>> {
    let columns = [
        schema.date.as_str(),
        schema.new_first.as_str(),
        schema.new_second.as_str(),
        schema.new_total.as_str(),
        schema.cum_first.as_str(),
        schema.cum_second.as_str(),
        schema.cum_total.as_str(),
    ];
    let (records, idx) = read_table(reader, columns)?;
    let mut rows = Vec::with_capacity(records.len());
    for (line, record) in &records {
        let cell = |i: usize| record.get(idx[i]).unwrap_or("");
        let count = |i: usize| parse_count(*line, columns[i], cell(i));
        rows.push(VaccinationDaily {
            date: parse_date(*line, columns[0], cell(0))?,
            new_first: count(1)?,
            new_second: count(2)?,
            new_total: count(3)?,
            cum_first: count(4)?,
            cum_second: count(5)?,
            cum_total: count(6)?,
        });
    }
    sort_and_check_dates(&mut rows, |r| r.date)?;
    check_monotone(&rows, |r| r.date, |r| r.cum_first)?;
    check_monotone(&rows, |r| r.date, |r| r.cum_second)?;
    check_monotone(&rows, |r| r.date, |r| r.cum_total)?;
    Ok(rows)
}

pub fn parse_zones<R: Read>(reader: R, schema: &ZoneSchema) -> Result<Vec<ZoneInfo>> {
    let columns = [
        schema.id.as_str(),
        schema.name.as_str(),
        schema.population.as_str(),
        schema.area_sq_mi.as_str(),
    ];
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(columns) {
        *slot = find(name).ok_or_else(|| Error::SchemaError { column: name.to_string() })?;
    }
    let density_idx = find(&schema.density);

    let mut zones: Vec<ZoneInfo> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| record.get(i).unwrap_or("");

        let raw_id = parse_count(line, columns[0], cell(idx[0]))?;
        let id = i64::try_from(raw_id)
            .ok()
            .and_then(|v| ZoneId::try_from(v).ok())
            .ok_or_else(|| malformed(line, columns[0], cell(idx[0])))?;
        let population = parse_count(line, columns[2], cell(idx[2]))?;
        let area_sq_mi = parse_float(line, columns[3], cell(idx[3]))?;
        if area_sq_mi <= 0.0 {
            return Err(malformed(line, columns[3], cell(idx[3])));
        }
        let density = match density_idx.and_then(|i| record.get(i)).filter(|s| !s.is_empty()) {
            Some(s) => parse_float(line, &schema.density, s)?,
            None => population as f64 / area_sq_mi,
        };
        zones.push(ZoneInfo {
            id,
            name: cell(idx[1]).to_string(),
            population,
            area_sq_mi,
            density,
        });
    }
    zones.sort_by_key(|z| z.id);
    for pair in zones.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(Error::DuplicateZone { zone: pair[1].id.get() });
        }
    }
    Ok(zones)
}
