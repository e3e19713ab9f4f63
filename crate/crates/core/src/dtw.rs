//! Dynamic time warping over daily series: full cost matrix, cumulative
//! DP, warping-path backtracking with a fixed tie-break, and the grouped
//! distance report comparing many series against one target.
//!
//! Recurrence: `D(i,j) = Dist(i,j) + min(D(i-1,j), D(i,j-1), D(i-1,j-1))`
//! with `D(1,1) = Dist(1,1)`. On ties the diagonal predecessor wins,
//! then `(i-1,j)`, then `(i,j-1)`, which pins down one canonical path.

use crate::error::{Error, Result};
use crate::series::{DateIndexedSeries, NormalizationMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Pointwise cost between two samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// `|q_i - c_j|` — the default.
    Absolute,
    /// `(q_i - c_j)^2` — sensitivity-check alternative.
    Squared,
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostKind::Absolute => "absolute",
            CostKind::Squared => "squared",
        })
    }
}

impl std::str::FromStr for CostKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "absolute" => Ok(CostKind::Absolute),
            "squared" => Ok(CostKind::Squared),
            other => Err(format!("unknown cost kind {other:?}")),
        }
    }
}

/// Dense row-major pointwise cost matrix; `rows` indexes the query,
/// `cols` the reference. Always at least 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_values(query: &[f64], reference: &[f64], kind: CostKind) -> Result<Self> {
        if query.is_empty() || reference.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut data = Vec::with_capacity(query.len() * reference.len());
        for &q in query {
            for &c in reference {
                let d = q - c;
                data.push(match kind {
                    CostKind::Absolute => d.abs(),
                    CostKind::Squared => d * d,
                });
            }
        }
        Ok(CostMatrix { rows: query.len(), cols: reference.len(), data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// 0-based cell access.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Alignment path in 1-based matrix coordinates, `(1,1)` to `(n,m)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WarpingPath(pub Vec<(usize, usize)>);

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks boundary, monotone unit steps and the length bounds
    /// `max(n,m) <= K <= n+m-1` for an `n x m` matrix.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        let k = self.0.len();
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        if self.0[0] != (1, 1) || self.0[k - 1] != (n, m) {
            return Err(Error::NotAligned);
        }
        if k < n.max(m) || k > n + m - 1 {
            return Err(Error::TooShort { len: k, min: n.max(m) });
        }
        for w in self.0.windows(2) {
            let (i0, j0) = w[0];
            let (i1, j1) = w[1];
            let (di, dj) = (i1.wrapping_sub(i0), j1.wrapping_sub(j0));
            if di > 1 || dj > 1 || (di == 0 && dj == 0) {
                return Err(Error::NotAligned);
            }
        }
        Ok(())
    }
}

/// Result of one DTW run. `distance` is the cumulative cost at `(n,m)`;
/// `normalization_mode` records how the inputs were rescaled first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtwResult {
    pub distance: f64,
    pub normalization_mode: NormalizationMode,
    pub path: WarpingPath,
}

/// Full DP with path recovery, O(n*m) time and memory.
pub fn dtw_distance(cost: &CostMatrix) -> DtwResult {
    let (n, m) = (cost.rows, cost.cols);
    let mut acc = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[j - 1],
                (_, 0) => acc[(i - 1) * m],
                _ => {
                    let diag = acc[(i - 1) * m + (j - 1)];
                    let up = acc[(i - 1) * m + j];
                    let left = acc[i * m + (j - 1)];
                    diag.min(up).min(left)
                }
            };
            acc[i * m + j] = cost.at(i, j) + best;
        }
    }

    // Backtrack from (n,m); on ties the order is diagonal, (i-1,j), (i,j-1).
    let mut path = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        path.push((i + 1, j + 1));
        if i == 0 && j == 0 {
            break;
        }
        let candidates = [
            (i > 0 && j > 0).then(|| (i - 1, j - 1)),
            (i > 0).then(|| (i - 1, j)),
            (j > 0).then(|| (i, j - 1)),
        ];
        let best = candidates
            .iter()
            .flatten()
            .map(|&(pi, pj)| acc[pi * m + pj])
            .fold(f64::INFINITY, f64::min);
        let (pi, pj) = candidates
            .into_iter()
            .flatten()
            .find(|&(pi, pj)| acc[pi * m + pj] == best)
            .expect("at least one predecessor");
        i = pi;
        j = pj;
    }
    path.reverse();

    DtwResult {
        distance: acc[n * m - 1],
        normalization_mode: NormalizationMode::None,
        path: WarpingPath(path),
    }
}

/// Distance without a path, keeping only two DP rows. Iterates over the
/// longer side so the live buffer is O(min(n, m)).
pub fn dtw_distance_only(cost: &CostMatrix) -> f64 {
    let (n, m) = (cost.rows, cost.cols);
    // Transposing the iteration when m > n keeps the row buffer short;
    // DTW distance itself is direction-symmetric.
    let transpose = m > n;
    let (outer, inner) = if transpose { (m, n) } else { (n, m) };
    let cell = |i: usize, j: usize| if transpose { cost.at(j, i) } else { cost.at(i, j) };

    let mut prev = vec![0.0f64; inner];
    let mut cur = vec![0.0f64; inner];
    for i in 0..outer {
        for j in 0..inner {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j - 1].min(prev[j]).min(cur[j - 1]),
            };
            cur[j] = cell(i, j) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[inner - 1]
}

/// Normalizes both series with `mode`, builds the cost matrix and runs
/// the full DP. Dates are ignored; only sample order matters.
pub fn dtw_between(
    query: &DateIndexedSeries,
    reference: &DateIndexedSeries,
    mode: NormalizationMode,
    kind: CostKind,
) -> Result<DtwResult> {
    let q = query.normalized(mode)?;
    let c = reference.normalized(mode)?;
    let qv: Vec<f64> = q.values().collect();
    let cv: Vec<f64> = c.values().collect();
    let cost = CostMatrix::from_values(&qv, &cv, kind)?;
    let mut result = dtw_distance(&cost);
    result.normalization_mode = mode;
    Ok(result)
}

/// Semantic grouping of the compared series for the report means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeriesGroup {
    #[serde(rename = "daily_new_epidemic")]
    DailyEpidemic,
    #[serde(rename = "cumulative_epidemic")]
    CumulativeEpidemic,
    #[serde(rename = "daily_new_vaccination")]
    DailyVaccination,
    #[serde(rename = "cumulative_vaccination")]
    CumulativeVaccination,
}

impl SeriesGroup {
    pub const ALL: [SeriesGroup; 4] = [
        SeriesGroup::DailyEpidemic,
        SeriesGroup::CumulativeEpidemic,
        SeriesGroup::DailyVaccination,
        SeriesGroup::CumulativeVaccination,
    ];
}

impl std::fmt::Display for SeriesGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeriesGroup::DailyEpidemic => "daily_new_epidemic",
            SeriesGroup::CumulativeEpidemic => "cumulative_epidemic",
            SeriesGroup::DailyVaccination => "daily_new_vaccination",
            SeriesGroup::CumulativeVaccination => "cumulative_vaccination",
        })
    }
}

/// One compared pair in the report.
#[derive(Debug, Clone)]
pub struct DtwReportRow {
    pub label: String,
    pub group: SeriesGroup,
    pub result: Option<DtwResult>,
    /// Why the distance is missing, when it is.
    pub note: Option<String>,
}

impl DtwReportRow {
    pub fn distance(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.distance)
    }
}

/// Grouped distance table: every series against one shared target.
#[derive(Debug, Clone)]
pub struct DtwReport {
    pub normalization: NormalizationMode,
    pub cost_kind: CostKind,
    pub rows: Vec<DtwReportRow>,
    /// Mean distance per group present in the input, in fixed group
    /// order; `None` when every pair in the group failed.
    pub group_means: Vec<(SeriesGroup, Option<f64>)>,
}

impl DtwReport {
    /// `label,distance,group` rows followed by one `mean(...)` row per
    /// group. Missing distances leave the cell empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "label,distance,group")?;
        for row in &self.rows {
            match row.distance() {
                Some(d) => writeln!(w, "{},{},{}", row.label, d, row.group)?,
                None => writeln!(w, "{},,{}", row.label, row.group)?,
            }
        }
        for (group, mean) in &self.group_means {
            match mean {
                Some(m) => writeln!(w, "mean({group}),{m},{group}")?,
                None => writeln!(w, "mean({group}),,{group}")?,
            }
        }
        Ok(())
    }

    pub fn mean_of(&self, group: SeriesGroup) -> Option<f64> {
        self.group_means.iter().find(|(g, _)| *g == group).and_then(|(_, m)| *m)
    }
}

/// Runs DTW between `target` and every entry, applying the same
/// normalization to both members of each pair. Per-pair failures
/// (constant series under z-score, empty inputs) become missing rows
/// with a note instead of aborting the report.
pub fn dtw_report(
    entries: &[(SeriesGroup, DateIndexedSeries)],
    target: &DateIndexedSeries,
    mode: NormalizationMode,
    kind: CostKind,
) -> DtwReport {
    let rows: Vec<DtwReportRow> = entries
        .par_iter()
        .map(|(group, series)| match dtw_between(series, target, mode, kind) {
            Ok(result) => DtwReportRow {
                label: series.label().to_string(),
                group: *group,
                result: Some(result),
                note: None,
            },
            Err(e) => DtwReportRow {
                label: series.label().to_string(),
                group: *group,
                result: None,
                note: Some(e.to_string()),
            },
        })
        .collect();

    let group_means = SeriesGroup::ALL
        .iter()
        .filter(|g| rows.iter().any(|r| r.group == **g))
        .map(|&g| {
            let ds: Vec<f64> = rows
                .iter()
                .filter(|r| r.group == g)
                .filter_map(|r| r.distance())
                .collect();
            let mean = if ds.is_empty() {
                None
            } else {
                Some(ds.iter().sum::<f64>() / ds.len() as f64)
            };
            (g, mean)
        })
        .collect();

    DtwReport { normalization: mode, cost_kind: kind, rows, group_means }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Days, NaiveDate};

    fn cost(q: &[f64], c: &[f64]) -> CostMatrix {
        CostMatrix::from_values(q, c, CostKind::Absolute).unwrap()
    }

    fn series(label: &str, values: &[f64]) -> DateIndexedSeries {
        let d0: NaiveDate = "2021-01-01".parse().unwrap();
        DateIndexedSeries::new(
            label,
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| (d0 + Days::new(i as u64), v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn worked_example_with_path() {
        let m = cost(&[0.0, 1.0, 2.0], &[0.0, 2.0]);
        assert_eq!(m.at(0, 0), 0.0);
        assert_eq!(m.at(0, 1), 2.0);
        assert_eq!(m.at(1, 0), 1.0);
        assert_eq!(m.at(1, 1), 1.0);
        assert_eq!(m.at(2, 0), 2.0);
        assert_eq!(m.at(2, 1), 0.0);
        let r = dtw_distance(&m);
        assert_eq!(r.distance, 1.0);
        assert_eq!(r.path.0, vec![(1, 1), (2, 1), (3, 2)]);
        r.path.validate(3, 2).unwrap();
    }

    #[test]
    fn identical_series_have_zero_distance_on_the_diagonal() {
        let q = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = dtw_distance(&cost(&q, &q));
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path.0.len(), 5);
        assert!(r.path.0.iter().enumerate().all(|(k, &(i, j))| i == k + 1 && j == k + 1));
    }

    #[test]
    fn single_cell_matrix() {
        let r = dtw_distance(&cost(&[5.0], &[3.0]));
        assert_eq!(r.distance, 2.0);
        assert_eq!(r.path.0, vec![(1, 1)]);
        r.path.validate(1, 1).unwrap();
    }

    #[test]
    fn all_zero_ties_resolve_to_the_diagonal() {
        let r = dtw_distance(&cost(&[7.0, 7.0, 7.0], &[7.0, 7.0, 7.0]));
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path.0, vec![(1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn squared_cost_changes_the_metric() {
        let abs = CostMatrix::from_values(&[0.0, 3.0], &[1.0], CostKind::Absolute).unwrap();
        let sq = CostMatrix::from_values(&[0.0, 3.0], &[1.0], CostKind::Squared).unwrap();
        assert_eq!(dtw_distance(&abs).distance, 3.0);
        assert_eq!(dtw_distance(&sq).distance, 5.0);
    }

    #[test]
    fn distance_only_matches_full_dp() {
        let cases: [(&[f64], &[f64]); 4] = [
            (&[0.0, 1.0, 2.0], &[0.0, 2.0]),
            (&[1.0, 3.0, 2.0, 8.0, 5.0], &[2.0, 2.0, 7.0]),
            (&[4.0], &[1.0, 2.0, 9.0, 4.0]),
            (&[1.0, 1.0, 1.0], &[1.0, 1.0]),
        ];
        for (q, c) in cases {
            let m = cost(q, c);
            assert_eq!(dtw_distance_only(&m), dtw_distance(&m).distance);
        }
    }

    #[test]
    fn path_cost_prefix_sums_never_decrease() {
        let m = cost(&[1.0, 9.0, 2.0, 8.0, 3.0], &[2.0, 2.0, 7.0, 1.0]);
        let r = dtw_distance(&m);
        let mut running = 0.0;
        let mut total = 0.0;
        for &(i, j) in &r.path.0 {
            let c = m.at(i - 1, j - 1);
            assert!(c >= 0.0);
            total += c;
            assert!(total >= running);
            running = total;
        }
        assert!((total - r.distance).abs() < 1e-9);
    }

    #[test]
    fn path_validation_rejects_bad_shapes() {
        assert!(WarpingPath(vec![(1, 1), (3, 2)]).validate(3, 2).is_err()); // jump
        assert!(WarpingPath(vec![(2, 1), (3, 2)]).validate(3, 2).is_err()); // bad start
        assert!(WarpingPath(vec![(1, 1), (2, 1)]).validate(3, 2).is_err()); // bad end
        assert!(WarpingPath(vec![(1, 1), (1, 1), (2, 2)]).validate(2, 2).is_err()); // stall
        // staircase path of maximal length n+m-1 is valid
        WarpingPath(vec![(1, 1), (2, 1), (2, 2), (3, 2)]).validate(3, 2).unwrap();
    }

    #[test]
    fn empty_inputs_are_rejected_at_cost_construction() {
        assert!(CostMatrix::from_values(&[], &[1.0], CostKind::Absolute).is_err());
        assert!(CostMatrix::from_values(&[1.0], &[], CostKind::Absolute).is_err());
    }

    #[test]
    fn dtw_between_records_normalization_and_propagates_errors() {
        let a = series("a", &[0.0, 1.0, 2.0, 3.0]);
        let b = series("b", &[0.0, 2.0, 4.0, 6.0]);
        let r = dtw_between(&a, &b, NormalizationMode::ZScore, CostKind::Absolute).unwrap();
        assert_eq!(r.normalization_mode, NormalizationMode::ZScore);
        assert!(r.distance.abs() < 1e-12); // same shape after z-scoring

        let flat = series("flat", &[5.0, 5.0, 5.0]);
        let e = dtw_between(&flat, &b, NormalizationMode::ZScore, CostKind::Absolute);
        assert!(matches!(e, Err(Error::ZeroVariance)));
    }

    #[test]
    fn report_groups_rows_and_averages_per_group() {
        let target = series("taxi", &[1.0, 2.0, 3.0, 4.0]);
        let entries = vec![
            (SeriesGroup::DailyEpidemic, series("cases", &[2.0, 4.0, 6.0, 8.0])),
            (SeriesGroup::DailyEpidemic, series("deaths", &[1.0, 2.0, 3.0, 4.0])),
            (SeriesGroup::CumulativeVaccination, series("flat", &[3.0, 3.0, 3.0, 3.0])),
        ];
        let report =
            dtw_report(&entries, &target, NormalizationMode::ZScore, CostKind::Absolute);
        assert_eq!(report.rows.len(), 3);
        let daily = report.mean_of(SeriesGroup::DailyEpidemic).unwrap();
        assert!(daily.abs() < 1e-12); // both match the target exactly after z-score
        assert!(report.mean_of(SeriesGroup::CumulativeVaccination).is_none());
        assert!(report.rows[2].note.is_some());

        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("label,distance,group\n"));
        assert!(text.contains("flat,,cumulative_vaccination"));
        assert!(text.contains("mean(daily_new_epidemic),"));
    }
}
