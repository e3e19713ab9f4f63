//! Date-indexed daily series and the calendar/statistics operations the
//! analysis stages share: gap filling, trailing 7-day smoothing, window
//! restriction, z-score / min-max scaling and cumulative<->daily moves.

use crate::error::{Error, Result};
use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

/// Closed date interval used to split series into analysis windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisPeriod {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl AnalysisPeriod {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidPeriod { start, end });
        }
        Ok(AnalysisPeriod { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Number of calendar days covered, both endpoints included.
    pub fn num_days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

/// How a series was rescaled before a distance computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    ZScore,
    MinMax,
    None,
}

impl std::fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NormalizationMode::ZScore => "zscore",
            NormalizationMode::MinMax => "minmax",
            NormalizationMode::None => "none",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for NormalizationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zscore" => Ok(NormalizationMode::ZScore),
            "minmax" => Ok(NormalizationMode::MinMax),
            "none" => Ok(NormalizationMode::None),
            other => Err(format!("unknown normalization mode {other:?}")),
        }
    }
}

/// A daily series: strictly increasing dates paired with finite values.
/// Gaps are allowed until [`DateIndexedSeries::fill_missing_dates`] runs;
/// operations that need a gap-free calendar say so and reject gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct DateIndexedSeries {
    label: String,
    unit: Option<String>,
    entries: Vec<(NaiveDate, f64)>,
}

impl DateIndexedSeries {
    /// Builds a series, rejecting non-finite values and dates that are
    /// not strictly increasing.
    pub fn new(label: impl Into<String>, entries: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateDate { date: w[1].0 });
            }
            if w[0].0 > w[1].0 {
                return Err(Error::UnsortedDates { date: w[1].0 });
            }
        }
        if let Some(&(date, _)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::MalformedRow {
                line: 0,
                column: "value".into(),
                value: format!("non-finite value at {date}"),
            });
        }
        Ok(DateIndexedSeries { label: label.into(), unit: None, entries })
    }

    pub fn from_map(label: impl Into<String>, map: &BTreeMap<NaiveDate, f64>) -> Result<Self> {
        Self::new(label, map.iter().map(|(&d, &v)| (d, v)).collect())
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn relabeled(&self, label: impl Into<String>) -> Self {
        let mut s = self.clone();
        s.label = label.into();
        s
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn unit(&self) -> Option<&str> {
        self.unit.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(NaiveDate, f64)] {
        &self.entries
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.entries.iter().map(|&(d, _)| d)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|&(_, v)| v)
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.entries.first().map(|&(d, _)| d)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.entries.last().map(|&(d, _)| d)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.entries
            .binary_search_by_key(&date, |&(d, _)| d)
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// True when consecutive entries are exactly one day apart.
    pub fn is_contiguous(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| (w[1].0 - w[0].0).num_days() == 1)
    }

    fn require_contiguous(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !self.is_contiguous() {
            return Err(Error::NonContiguous);
        }
        Ok(())
    }

    /// Inserts `fill` on every calendar day between the first and last
    /// entry that has no value, producing a gap-free series.
    pub fn fill_missing_dates(&self, fill: f64) -> Result<Self> {
        if self.entries.is_empty() {
            return Err(Error::EmptyInput);
        }
        let first = self.entries[0].0;
        let last = self.entries[self.entries.len() - 1].0;
        let mut out = Vec::with_capacity((last - first).num_days() as usize + 1);
        let mut next = 0usize;
        let mut day = first;
        while day <= last {
            if next < self.entries.len() && self.entries[next].0 == day {
                out.push((day, self.entries[next].1));
                next += 1;
            } else {
                out.push((day, fill));
            }
            day = day + Days::new(1);
        }
        Ok(DateIndexedSeries { label: self.label.clone(), unit: self.unit.clone(), entries: out })
    }

    /// Trailing 7-day rolling mean. The first six days average only the
    /// days available so far, so output and input have equal length.
    pub fn rolling_mean_7(&self) -> Result<Self> {
        const WINDOW: usize = 7;
        self.require_contiguous()?;
        let mut out = Vec::with_capacity(self.entries.len());
        for (i, &(date, _)) in self.entries.iter().enumerate() {
            let lo = i + 1 - WINDOW.min(i + 1);
            let window = &self.entries[lo..=i];
            let mean = window.iter().map(|&(_, v)| v).sum::<f64>() / window.len() as f64;
            out.push((date, mean));
        }
        Ok(DateIndexedSeries {
            label: format!("{}_7d", self.label),
            unit: self.unit.clone(),
            entries: out,
        })
    }

    /// Keeps exactly the entries dated within `period` (inclusive).
    pub fn restrict(&self, period: &AnalysisPeriod) -> Result<Self> {
        let entries: Vec<_> = self
            .entries
            .iter()
            .copied()
            .filter(|&(d, _)| period.contains(d))
            .collect();
        if entries.is_empty() {
            return Err(Error::EmptyWindow);
        }
        Ok(DateIndexedSeries { label: self.label.clone(), unit: self.unit.clone(), entries })
    }

    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.values().sum::<f64>() / self.len() as f64)
    }

    /// Population standard deviation (divide by n).
    pub fn std_pop(&self) -> Option<f64> {
        let mean = self.mean()?;
        let var = self.values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.len() as f64;
        Some(var.sqrt())
    }

    fn is_constant(&self) -> bool {
        match self.entries.first() {
            None => true,
            Some(&(_, first)) => self.values().all(|v| v == first),
        }
    }

    /// Centers on the mean and divides by the population standard
    /// deviation. The label is kept; the unit is dropped.
    pub fn zscore(&self) -> Result<Self> {
        if self.len() < 2 {
            return Err(Error::TooShort { len: self.len(), min: 2 });
        }
        if self.is_constant() {
            return Err(Error::ZeroVariance);
        }
        let mean = self.mean().expect("non-empty");
        let std = self.std_pop().expect("non-empty");
        let entries = self.entries.iter().map(|&(d, v)| (d, (v - mean) / std)).collect();
        Ok(DateIndexedSeries { label: self.label.clone(), unit: None, entries })
    }

    /// Affine rescale onto [0, 1].
    pub fn minmax(&self) -> Result<Self> {
        if self.entries.is_empty() {
            return Err(Error::EmptyInput);
        }
        if self.is_constant() {
            return Err(Error::ZeroRange);
        }
        let min = self.values().fold(f64::INFINITY, f64::min);
        let max = self.values().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        let entries = self.entries.iter().map(|&(d, v)| (d, (v - min) / span)).collect();
        Ok(DateIndexedSeries { label: self.label.clone(), unit: None, entries })
    }

    pub fn normalized(&self, mode: NormalizationMode) -> Result<Self> {
        match mode {
            NormalizationMode::ZScore => self.zscore(),
            NormalizationMode::MinMax => self.minmax(),
            NormalizationMode::None => Ok(self.clone()),
        }
    }

    /// Running total of a gap-free daily series.
    pub fn cumulative(&self) -> Result<Self> {
        self.require_contiguous()?;
        let mut total = 0.0;
        let entries = self
            .entries
            .iter()
            .map(|&(d, v)| {
                total += v;
                (d, total)
            })
            .collect();
        Ok(DateIndexedSeries { label: self.label.clone(), unit: self.unit.clone(), entries })
    }

    /// Inverse of [`Self::cumulative`]: first entry keeps the opening
    /// total, later entries become day-over-day differences.
    pub fn daily_from_cumulative(&self) -> Result<Self> {
        self.require_contiguous()?;
        if let Some(w) = self.entries.windows(2).find(|w| w[1].1 < w[0].1) {
            return Err(Error::NonMonotoneCumulative { date: w[1].0 });
        }
        let mut prev = 0.0;
        let entries = self
            .entries
            .iter()
            .map(|&(d, v)| {
                let daily = v - prev;
                prev = v;
                (d, daily)
            })
            .collect();
        Ok(DateIndexedSeries { label: self.label.clone(), unit: self.unit.clone(), entries })
    }

    /// Summary statistics for report tables (population std).
    pub fn describe(&self) -> Option<SeriesSummary> {
        if self.entries.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = self.values().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(SeriesSummary {
            n,
            mean: self.mean()?,
            std: self.std_pop()?,
            min: sorted[0],
            median,
            max: sorted[n - 1],
        })
    }

    /// Writes `date,value` rows with ISO-8601 dates. Floats are printed
    /// with the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "date,value")?;
        for &(d, v) in &self.entries {
            writeln!(w, "{d},{v}")?;
        }
        Ok(())
    }

    /// Reads a `date,value` CSV produced by [`Self::write_csv`].
    pub fn read_csv<R: Read>(r: R, label: impl Into<String>) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        match lines.next() {
            Some(header) => {
                let header = header?;
                if header.trim() != "date,value" {
                    return Err(Error::SchemaError { column: "date,value".into() });
                }
            }
            None => return Err(Error::EmptyInput),
        }
        let mut entries = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let lineno = idx as u64 + 2;
            let (date, value) = line.split_once(',').ok_or_else(|| Error::MalformedRow {
                line: lineno,
                column: "value".into(),
                value: line.clone(),
            })?;
            let date: NaiveDate = date.parse().map_err(|_| Error::MalformedRow {
                line: lineno,
                column: "date".into(),
                value: date.to_string(),
            })?;
            let value: f64 = value.parse().map_err(|_| Error::MalformedRow {
                line: lineno,
                column: "value".into(),
                value: value.to_string(),
            })?;
            entries.push((date, value));
        }
        Self::new(label, entries)
    }

    /// JSON object `{label, unit, start_date, values}`; requires a
    /// gap-free series because only the start date is recorded.
    pub fn to_json(&self) -> Result<serde_json::Value> {
        self.require_contiguous()?;
        Ok(serde_json::json!({
            "label": self.label,
            "unit": self.unit,
            "start_date": self.entries[0].0,
            "values": self.values().collect::<Vec<f64>>(),
        }))
    }
}

/// Descriptive statistics of one series over one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Restricts both series to the dates they share, keeping pairing by
/// date. Errors with `EmptyWindow` when they share none.
pub fn align_common_dates(
    a: &DateIndexedSeries,
    b: &DateIndexedSeries,
) -> Result<(DateIndexedSeries, DateIndexedSeries)> {
    let mut out_a = Vec::new();
    let mut out_b = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.entries.len() && j < b.entries.len() {
        match a.entries[i].0.cmp(&b.entries[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out_a.push(a.entries[i]);
                out_b.push(b.entries[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if out_a.is_empty() {
        return Err(Error::EmptyWindow);
    }
    Ok((
        DateIndexedSeries { label: a.label.clone(), unit: a.unit.clone(), entries: out_a },
        DateIndexedSeries { label: b.label.clone(), unit: b.unit.clone(), entries: out_b },
    ))
}
