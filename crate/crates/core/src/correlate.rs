//! Pearson correlation and the pairwise-complete correlation matrix.

use crate::error::{Error, Result};
use crate::series::{align_common_dates, AnalysisPeriod, DateIndexedSeries};
use rayon::prelude::*;
use std::io::Write;

/// Pearson correlation of two slices that are already paired index by
/// index. Two-pass: means first, then centered sums. The single-pass
/// `E[xy] - E[x]E[y]` form loses digits on offset-heavy data and is
/// deliberately not used.
pub fn pearson_values(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::NotAligned);
    }
    if xs.len() < 3 {
        return Err(Error::TooShort { len: xs.len(), min: 3 });
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::ZeroVariance);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of two series sharing exactly the same dates.
pub fn pearson(x: &DateIndexedSeries, y: &DateIndexedSeries) -> Result<f64> {
    if x.len() != y.len() || x.dates().ne(y.dates()) {
        return Err(Error::NotAligned);
    }
    let xs: Vec<f64> = x.values().collect();
    let ys: Vec<f64> = y.values().collect();
    pearson_values(&xs, &ys)
}

/// Symmetric correlation matrix over a list of series. Each cell uses
/// the dates that pair shares (pairwise-complete); cells whose window
/// is empty, too short or degenerate stay `None` instead of failing
/// the whole matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    labels: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
    windows: Vec<Vec<Option<AnalysisPeriod>>>,
}

impl CorrelationMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn window(&self, i: usize, j: usize) -> Option<AnalysisPeriod> {
        self.windows[i][j]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Square CSV table: first row/column carry labels, missing cells
    /// stay empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "label")?;
        for l in &self.labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for (i, l) in self.labels.iter().enumerate() {
            write!(w, "{l}")?;
            for j in 0..self.labels.len() {
                match self.values[i][j] {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "labels": self.labels,
            "values": self.values,
            "windows": self.windows,
        })
    }
}

pub fn correlation_matrix(series: &[DateIndexedSeries]) -> CorrelationMatrix {
    let n = series.len();
    let labels = series.iter().map(|s| s.label().to_string()).collect();
    let mut values = vec![vec![None; n]; n];
    let mut windows = vec![vec![None; n]; n];

    for (i, s) in series.iter().enumerate() {
        if !s.is_empty() {
            // Self-correlation is 1 by definition, including the
            // constant-series case Pearson itself rejects.
            values[i][i] = Some(1.0);
            windows[i][i] = Some(AnalysisPeriod {
                start: s.first_date().expect("non-empty"),
                end: s.last_date().expect("non-empty"),
            });
        }
    }

    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let cells: Vec<(usize, usize, Option<f64>, Option<AnalysisPeriod>)> = pairs
        .par_iter()
        .map(|&(i, j)| match align_common_dates(&series[i], &series[j]) {
            Ok((a, b)) => {
                let window = AnalysisPeriod {
                    start: a.first_date().expect("non-empty"),
                    end: a.last_date().expect("non-empty"),
                };
                (i, j, pearson(&a, &b).ok(), Some(window))
            }
            Err(_) => (i, j, None, None),
        })
        .collect();

    for (i, j, v, w) in cells {
        values[i][j] = v;
        values[j][i] = v;
        windows[i][j] = w;
        windows[j][i] = w;
    }

    CorrelationMatrix { labels, values, windows }
}
