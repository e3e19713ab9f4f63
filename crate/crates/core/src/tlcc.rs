//! Time-lagged cross-correlation over a symmetric offset sweep.
//!
//! At offset `l` the pairs are `(x[t-l], y[t])` over the surviving
//! overlap (truncation, no wrap-around), each side centered on its own
//! per-offset mean. A positive best offset therefore means x leads y;
//! a negative one means y leads x.

use crate::correlate::pearson_values;
use crate::error::{Error, Result};
use crate::series::DateIndexedSeries;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// Sign convention recorded in every profile and summary.
pub const CONVENTION: &str = "positive offset => x leads y";

fn aligned_values(
    x: &DateIndexedSeries,
    y: &DateIndexedSeries,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() || x.dates().ne(y.dates()) {
        return Err(Error::NotAligned);
    }
    if !x.is_contiguous() {
        return Err(Error::NonContiguous);
    }
    Ok((x.values().collect(), y.values().collect()))
}

fn tlcc_at_values(xs: &[f64], ys: &[f64], offset: i64) -> Result<f64> {
    let n = xs.len() as i64;
    let shift = offset.unsigned_abs() as usize;
    if n - offset.abs() < 3 {
        return Err(Error::TooShort { len: (n - offset.abs()).max(0) as usize, min: 3 });
    }
    // offset >= 0: y starts `offset` later; offset < 0: x starts later.
    let (xw, yw) = if offset >= 0 {
        (&xs[..xs.len() - shift], &ys[shift..])
    } else {
        (&xs[shift..], &ys[..ys.len() - shift])
    };
    pearson_values(xw, yw)
}

/// Correlation of `(x[t-offset], y[t])` pairs over the overlap the
/// offset leaves. Both series must share identical, gap-free dates.
pub fn tlcc_at(x: &DateIndexedSeries, y: &DateIndexedSeries, offset: i64) -> Result<f64> {
    let (xs, ys) = aligned_values(x, y)?;
    tlcc_at_values(&xs, &ys, offset)
}

/// One full offset sweep. `r[k]` corresponds to `offsets[k]`; cells
/// where the overlap is degenerate stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TlccProfile {
    pub offsets: Vec<i64>,
    pub r: Vec<Option<f64>>,
    pub best_offset: i64,
    pub best_r: f64,
    pub convention: String,
}

impl TlccProfile {
    /// `offset,r` rows; missing correlations leave the cell empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "offset,r")?;
        for (off, r) in self.offsets.iter().zip(&self.r) {
            match r {
                Some(v) => writeln!(w, "{off},{v}")?,
                None => writeln!(w, "{off},")?,
            }
        }
        Ok(())
    }

    pub fn r_at(&self, offset: i64) -> Option<f64> {
        let idx = self.offsets.iter().position(|&o| o == offset)?;
        self.r[idx]
    }

    pub fn summary(&self, x_label: &str, y_label: &str) -> TlccSummary {
        TlccSummary {
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            best_offset: self.best_offset,
            best_r: self.best_r,
            convention: CONVENTION.to_string(),
            verdict: interpret(self, x_label, y_label),
        }
    }
}

/// Lead/lag summary for one profile, ready for JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TlccSummary {
    pub x_label: String,
    pub y_label: String,
    pub best_offset: i64,
    pub best_r: f64,
    pub convention: String,
    pub verdict: String,
}

/// Sweeps offsets `-max_offset..=max_offset`. Requires enough data
/// that even the widest shift keeps a meaningful overlap. The best
/// offset maximizes r; exact ties resolve toward the smallest
/// absolute offset and then toward the negative one.
pub fn tlcc_sweep(
    x: &DateIndexedSeries,
    y: &DateIndexedSeries,
    max_offset: i64,
) -> Result<TlccProfile> {
    let (xs, ys) = aligned_values(x, y)?;
    let n = xs.len() as i64;
    if n <= max_offset + 3 {
        return Err(Error::TooShort { len: xs.len(), min: (max_offset + 4) as usize });
    }
    let offsets: Vec<i64> = (-max_offset..=max_offset).collect();
    let r: Vec<Option<f64>> = offsets
        .par_iter()
        .map(|&off| tlcc_at_values(&xs, &ys, off).ok())
        .collect();

    let (best_offset, best_r) = select_best(&offsets, &r).ok_or(Error::ZeroVariance)?;

    Ok(TlccProfile {
        offsets,
        r,
        best_offset,
        best_r,
        convention: CONVENTION.to_string(),
    })
}

/// Maximizes r; exact ties go to the smallest |offset|, and between the
/// two signs of the same magnitude to the negative one.
fn select_best(offsets: &[i64], r: &[Option<f64>]) -> Option<(i64, f64)> {
    let mut best: Option<(i64, f64)> = None;
    for (&off, r) in offsets.iter().zip(r) {
        let Some(r) = *r else { continue };
        let replace = match best {
            None => true,
            Some((boff, br)) => {
                r > br
                    || (r == br
                        && (off.abs() < boff.abs() || (off.abs() == boff.abs() && off < boff)))
            }
        };
        if replace {
            best = Some((off, r));
        }
    }
    best
}

/// Plain-language reading of a profile under the sign convention.
pub fn interpret(profile: &TlccProfile, x_label: &str, y_label: &str) -> String {
    let days = |n: i64| if n == 1 { "day".to_string() } else { "days".to_string() };
    match profile.best_offset {
        0 => format!("{x_label} and {y_label} are synchronous (best offset 0)"),
        l if l > 0 => format!("{x_label} leads {y_label} by {l} {}", days(l)),
        l => format!("{y_label} leads {x_label} by {} {}", -l, days(-l)),
    }
}
