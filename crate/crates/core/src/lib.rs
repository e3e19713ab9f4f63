//! Core library of the demand-pulse toolkit: date-indexed series,
//! trip/table ingestion with auditable cleaning, Pearson correlation
//! matrices, dynamic time warping, time-lagged cross-correlation, and
//! per-zone recovery metrics.
//!
//! Everything here is deterministic: given the same inputs, every
//! function returns bit-identical results regardless of thread count.

pub mod correlate;
pub mod dtw;
pub mod error;
pub mod ingest;
pub mod series;
pub mod spatial;
pub mod tlcc;

pub use error::{Error, Result};
pub use series::{AnalysisPeriod, DateIndexedSeries, NormalizationMode};
