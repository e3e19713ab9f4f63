//! Error type shared by every analysis module in this crate.

use chrono::NaiveDate;
use std::fmt;

/// Unified error for parsing, series manipulation and the statistical
/// operations. Variants carry just enough context to point at the
/// offending row, date or column.
#[derive(Debug)]
pub enum Error {
    /// An operation received an empty series or record set.
    EmptyInput,
    /// A window/period restriction produced no overlap.
    EmptyWindow,
    /// Input shorter than the operation's minimum length.
    TooShort { len: usize, min: usize },
    /// A statistic that divides by a spread met a constant input.
    ZeroVariance,
    /// Min-max scaling met a constant input.
    ZeroRange,
    /// The operation needs a gap-free daily series.
    NonContiguous,
    /// A cumulative series decreased; the date is the first offender.
    NonMonotoneCumulative { date: NaiveDate },
    /// Two series were expected to share exactly the same dates.
    NotAligned,
    /// Period with start after end.
    InvalidPeriod { start: NaiveDate, end: NaiveDate },
    /// Regression input whose x values are all identical.
    DegenerateX,
    /// A trip references a zone missing from the zone table.
    ForeignZone { zone: u32 },
    /// The same date appeared twice in a daily table.
    DuplicateDate { date: NaiveDate },
    /// The same zone id appeared twice in the zone table.
    DuplicateZone { zone: u32 },
    /// Entries supplied out of calendar order.
    UnsortedDates { date: NaiveDate },
    /// A required column is absent from the header row.
    SchemaError { column: String },
    /// A cell failed to parse; `line` is 1-based and counts the header.
    MalformedRow { line: u64, column: String, value: String },
    Csv(csv::Error),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput => write!(f, "input is empty"),
            Error::EmptyWindow => write!(f, "restriction window contains no data"),
            Error::TooShort { len, min } => {
                write!(f, "input has {len} entries; at least {min} required")
            }
            Error::ZeroVariance => write!(f, "input has zero variance"),
            Error::ZeroRange => write!(f, "input has zero range (constant values)"),
            Error::NonContiguous => write!(f, "series has calendar gaps; fill missing dates first"),
            Error::NonMonotoneCumulative { date } => {
                write!(f, "cumulative series decreases at {date}")
            }
            Error::NotAligned => write!(f, "series do not share identical dates"),
            Error::InvalidPeriod { start, end } => {
                write!(f, "period start {start} is after end {end}")
            }
            Error::DegenerateX => write!(f, "regression x values are all identical"),
            Error::ForeignZone { zone } => {
                write!(f, "zone {zone} appears in trip data but not in the zone table")
            }
            Error::DuplicateDate { date } => write!(f, "duplicate date {date}"),
            Error::DuplicateZone { zone } => write!(f, "duplicate zone {zone} in zone table"),
            Error::UnsortedDates { date } => write!(f, "dates out of order at {date}"),
            Error::SchemaError { column } => write!(f, "missing required column {column:?}"),
            Error::MalformedRow { line, column, value } => {
                write!(f, "line {line}: cannot parse {column:?} from {value:?}")
            }
            Error::Csv(e) => write!(f, "csv: {e}"),
            Error::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Csv(e) => Some(e),
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
