//! Per-zone recovery metrics: period trip totals per thousand
//! residents, the before/after linear fit, and travel-distance-change
//! classification.

use crate::error::{Error, Result};
use crate::ingest::{ZoneId, ZoneInfo};
use crate::series::{AnalysisPeriod, DateIndexedSeries};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// Distance-change significance threshold, in miles.
pub const DEFAULT_DISTANCE_THRESHOLD_MILES: f64 = 2.0;

/// One zone's activity over one analysis period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonePeriodMetrics {
    pub zone_id: ZoneId,
    pub period: String,
    pub total_trips: u64,
    /// 1000 · total_trips / population.
    pub trips_per_1000: f64,
    /// Trip-weighted mean distance over the period; `None` when the
    /// zone saw no trips.
    pub mean_distance: Option<f64>,
    pub active_days: u64,
}

/// All zones for one period, plus the zones that had to be skipped
/// because per-capita metrics are undefined for them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonePeriodTable {
    pub period: String,
    pub rows: Vec<ZonePeriodMetrics>,
    pub skipped_zero_population: Vec<u32>,
}

/// Period metrics for every zone in the zone table. Zones without
/// trips get explicit zero rows; zones with zero population are
/// skipped and flagged. A series keyed by a zone missing from the
/// table is a join error.
pub fn zone_period_metrics(
    counts: &BTreeMap<ZoneId, DateIndexedSeries>,
    mean_distances: &BTreeMap<ZoneId, DateIndexedSeries>,
    zones: &[ZoneInfo],
    period: AnalysisPeriod,
    period_label: &str,
) -> Result<ZonePeriodTable> {
    let known: BTreeMap<ZoneId, &ZoneInfo> = zones.iter().map(|z| (z.id, z)).collect();
    for key in counts.keys().chain(mean_distances.keys()) {
        if !known.contains_key(key) {
            return Err(Error::ForeignZone { zone: key.get() });
        }
    }

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for zone in zones {
        if zone.population == 0 {
            skipped.push(zone.id.get());
            continue;
        }
        let mut total: u64 = 0;
        let mut active_days: u64 = 0;
        let mut weighted_miles = 0.0;
        if let Some(series) = counts.get(&zone.id) {
            let distances = mean_distances.get(&zone.id);
            for &(date, count) in series.entries() {
                if !period.contains(date) || count <= 0.0 {
                    continue;
                }
                total += count as u64;
                active_days += 1;
                if let Some(mean) = distances.and_then(|s| s.get(date)) {
                    weighted_miles += count * mean;
                }
            }
        }
        let mean_distance = (total > 0).then(|| weighted_miles / total as f64);
        rows.push(ZonePeriodMetrics {
            zone_id: zone.id,
            period: period_label.to_string(),
            total_trips: total,
            trips_per_1000: 1000.0 * total as f64 / zone.population as f64,
            mean_distance,
            active_days,
        });
    }
    Ok(ZonePeriodTable {
        period: period_label.to_string(),
        rows,
        skipped_zero_population: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Ordinary least squares with a free intercept (the default).
    Intercept,
    /// Regression through the origin, for sensitivity runs.
    ThroughOrigin,
}

impl std::fmt::Display for FitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMode::Intercept => "intercept",
            FitMode::ThroughOrigin => "through_origin",
        })
    }
}

impl std::str::FromStr for FitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "intercept" => Ok(FitMode::Intercept),
            "through_origin" => Ok(FitMode::ThroughOrigin),
            other => Err(format!("unknown fit mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when the response has no spread, which leaves R²
    /// undefined.
    pub r_squared: Option<f64>,
    pub n_points: usize,
}

/// Least squares of y on x with a free intercept.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooShort { len: n, min: 2 });
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateX);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = (ss_tot > 0.0).then(|| (1.0 - ss_res / ss_tot).clamp(0.0, 1.0));
    Ok(LinearFit { slope, intercept, r_squared, n_points: n })
}

/// Least squares of y on x forced through the origin; R² is the
/// uncentered version (against Σy²).
pub fn ols_fit_through_origin(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooShort { len: n, min: 2 });
    }
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateX);
    }
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| p.1 * p.1).sum();
    let r_squared = (syy > 0.0).then(|| (1.0 - ss_res / syy).clamp(0.0, 1.0));
    Ok(LinearFit { slope, intercept: 0.0, r_squared, n_points: n })
}

pub fn fit(points: &[(f64, f64)], mode: FitMode) -> Result<LinearFit> {
    match mode {
        FitMode::Intercept => ols_fit(points),
        FitMode::ThroughOrigin => ols_fit_through_origin(points),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeClass {
    Increased,
    Decreased,
    NotSignificant,
    /// A period mean was missing, so no comparison is possible.
    Indeterminate,
}

impl std::fmt::Display for ChangeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChangeClass::Increased => "increased",
            ChangeClass::Decreased => "decreased",
            ChangeClass::NotSignificant => "not_significant",
            ChangeClass::Indeterminate => "indeterminate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceChange {
    pub zone_id: ZoneId,
    pub before_mean: Option<f64>,
    pub after_mean: Option<f64>,
    pub class: ChangeClass,
    pub threshold: f64,
}

/// Classifies a zone's travel-distance change between periods. A shift
/// of exactly the threshold is not significant (strict inequality).
pub fn classify_distance_change(
    zone_id: ZoneId,
    before_mean: Option<f64>,
    after_mean: Option<f64>,
    threshold: f64,
) -> DistanceChange {
    let class = match (before_mean, after_mean) {
        (Some(b), Some(a)) if a - b > threshold => ChangeClass::Increased,
        (Some(b), Some(a)) if b - a > threshold => ChangeClass::Decreased,
        (Some(_), Some(_)) => ChangeClass::NotSignificant,
        _ => ChangeClass::Indeterminate,
    };
    DistanceChange { zone_id, before_mean, after_mean, class, threshold }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `zone_id,period,total_trips,trips_per_1000,mean_distance` rows.
pub fn write_zone_metrics_csv<W: Write>(rows: &[ZonePeriodMetrics], mut w: W) -> Result<()> {
    writeln!(w, "zone_id,period,total_trips,trips_per_1000,mean_distance")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.zone_id,
            row.period,
            row.total_trips,
            row.trips_per_1000,
            fmt_opt(row.mean_distance)
        )?;
    }
    Ok(())
}

/// `zone_id,before_mean,after_mean,class,threshold` rows.
pub fn write_distance_change_csv<W: Write>(rows: &[DistanceChange], mut w: W) -> Result<()> {
    writeln!(w, "zone_id,before_mean,after_mean,class,threshold")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.zone_id,
            fmt_opt(row.before_mean),
            fmt_opt(row.after_mean),
            row.class,
            row.threshold
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, d).unwrap()
    }

    fn zid(z: u32) -> ZoneId {
        ZoneId::new(z).unwrap()
    }

    fn zone(id: u32, population: u64) -> ZoneInfo {
        ZoneInfo {
            id: zid(id),
            name: format!("Zone {id}"),
            population,
            area_sq_mi: 1.0,
            density: population as f64,
        }
    }

    fn series(label: &str, entries: &[(u32, f64)]) -> DateIndexedSeries {
        let entries: Vec<_> = entries.iter().map(|&(d, v)| (day(d), v)).collect();
        DateIndexedSeries::new(label, entries).unwrap()
    }

    fn january() -> AnalysisPeriod {
        AnalysisPeriod::new(day(1), day(31)).unwrap()
    }

    #[test]
    fn per_capita_volume_and_weighted_distance() {
        // the February day lands outside the period and must not count
        let entries = vec![
            (day(1), 1.0),
            (day(2), 3.0),
            (day(3), 0.0),
            (NaiveDate::from_ymd_opt(2021, 2, 1).unwrap(), 4000.0),
        ];
        let counts =
            BTreeMap::from([(zid(8), DateIndexedSeries::new("c", entries).unwrap())]);
        let distances = BTreeMap::from([(zid(8), series("d", &[(1, 3.0), (2, 5.0)]))]);
        let zones = [zone(8, 25_000)];
        let table =
            zone_period_metrics(&counts, &distances, &zones, january(), "after").unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.total_trips, 4);
        assert_eq!(row.active_days, 2);
        // (1·3.0 + 3·5.0) / 4
        assert_eq!(row.mean_distance, Some(4.5));
        // spec arithmetic at larger scale: 5000 trips / 25000 residents = 200
        assert_eq!(1000.0 * 5000.0 / 25_000.0, 200.0);
        assert_eq!(row.trips_per_1000, 1000.0 * 4.0 / 25_000.0);
    }

    #[test]
    fn zone_without_trips_gets_a_zero_row() {
        let counts = BTreeMap::new();
        let distances = BTreeMap::new();
        let zones = [zone(8, 1000)];
        let table = zone_period_metrics(&counts, &distances, &zones, january(), "before").unwrap();
        let row = &table.rows[0];
        assert_eq!(row.total_trips, 0);
        assert_eq!(row.trips_per_1000, 0.0);
        assert_eq!(row.mean_distance, None);
        assert_eq!(row.active_days, 0);
    }

    #[test]
    fn zero_population_zone_is_skipped_and_flagged() {
        let counts = BTreeMap::from([(zid(8), series("c", &[(1, 5.0)]))]);
        let zones = [zone(8, 0), zone(32, 100)];
        let table =
            zone_period_metrics(&counts, &BTreeMap::new(), &zones, january(), "after").unwrap();
        assert_eq!(table.skipped_zero_population, vec![8]);
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].zone_id, zid(32));
    }

    #[test]
    fn series_for_unknown_zone_is_a_join_error() {
        let counts = BTreeMap::from([(zid(9), series("c", &[(1, 5.0)]))]);
        let zones = [zone(8, 1000)];
        match zone_period_metrics(&counts, &BTreeMap::new(), &zones, january(), "after") {
            Err(Error::ForeignZone { zone }) => assert_eq!(zone, 9),
            other => panic!("expected ForeignZone, got {other:?}"),
        }
    }

    #[test]
    fn exact_line_is_recovered_exactly() {
        let points: Vec<(f64, f64)> =
            (0..10).map(|i| (i as f64, 0.5 * i as f64 + 1.0)).collect();
        let fit = ols_fit(&points).unwrap();
        assert_eq!(fit.slope, 0.5);
        assert_eq!(fit.intercept, 1.0);
        assert_eq!(fit.r_squared, Some(1.0));
        assert_eq!(fit.n_points, 10);
    }

    #[test]
    fn two_points_always_fit_perfectly() {
        let fit = ols_fit(&[(1.0, 3.0), (4.0, 11.0)]).unwrap();
        assert!((fit.slope - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(fit.r_squared, Some(1.0));
    }

    #[test]
    fn flat_response_keeps_slope_but_drops_r_squared() {
        let fit = ols_fit(&[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.intercept, 5.0);
        assert_eq!(fit.r_squared, None);
    }

    #[test]
    fn identical_x_values_are_degenerate() {
        assert!(matches!(
            ols_fit(&[(2.0, 1.0), (2.0, 3.0)]),
            Err(Error::DegenerateX)
        ));
        assert!(matches!(ols_fit(&[(1.0, 2.0)]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn scaling_y_scales_slope_and_intercept_only() {
        let points = [(1.0, 2.3), (2.0, 2.9), (3.0, 4.1), (4.0, 4.2), (5.0, 5.9)];
        let scaled: Vec<_> = points.iter().map(|&(x, y)| (x, 3.0 * y)).collect();
        let base = ols_fit(&points).unwrap();
        let big = ols_fit(&scaled).unwrap();
        assert!((big.slope - 3.0 * base.slope).abs() < 1e-9);
        assert!((big.intercept - 3.0 * base.intercept).abs() < 1e-9);
        assert!((big.r_squared.unwrap() - base.r_squared.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn through_origin_fit_on_proportional_data() {
        let points: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let fit = ols_fit_through_origin(&points).unwrap();
        assert_eq!(fit.slope, 2.0);
        assert_eq!(fit.intercept, 0.0);
        assert_eq!(fit.r_squared, Some(1.0));
        // same data through the dispatcher
        assert_eq!(fit, super::fit(&points, FitMode::ThroughOrigin).unwrap());
    }

    #[test]
    fn distance_change_classes_follow_the_threshold() {
        let classify = |b, a| {
            classify_distance_change(zid(8), Some(b), Some(a), DEFAULT_DISTANCE_THRESHOLD_MILES)
                .class
        };
        assert_eq!(classify(5.0, 8.0), ChangeClass::Increased);
        assert_eq!(classify(6.0, 5.0), ChangeClass::NotSignificant);
        assert_eq!(classify(10.0, 7.5), ChangeClass::Decreased);
        // exactly the threshold is not significant
        assert_eq!(classify(10.0, 12.0), ChangeClass::NotSignificant);
        assert_eq!(classify(12.0, 10.0), ChangeClass::NotSignificant);
    }

    #[test]
    fn swapping_periods_mirrors_the_class() {
        let pairs = [(5.0, 8.0), (6.0, 5.0), (10.0, 7.5), (3.0, 5.0)];
        for (b, a) in pairs {
            let fwd = classify_distance_change(zid(8), Some(b), Some(a), 2.0).class;
            let rev = classify_distance_change(zid(8), Some(a), Some(b), 2.0).class;
            let expected = match fwd {
                ChangeClass::Increased => ChangeClass::Decreased,
                ChangeClass::Decreased => ChangeClass::Increased,
                other => other,
            };
            assert_eq!(rev, expected);
        }
    }

    #[test]
    fn missing_mean_is_indeterminate() {
        let change = classify_distance_change(zid(8), None, Some(3.0), 2.0);
        assert_eq!(change.class, ChangeClass::Indeterminate);
        let change = classify_distance_change(zid(8), Some(3.0), None, 2.0);
        assert_eq!(change.class, ChangeClass::Indeterminate);
    }

    #[test]
    fn csv_layouts() {
        let rows = vec![ZonePeriodMetrics {
            zone_id: zid(8),
            period: "before".into(),
            total_trips: 4,
            trips_per_1000: 0.16,
            mean_distance: None,
            active_days: 2,
        }];
        let mut buf = Vec::new();
        write_zone_metrics_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "zone_id,period,total_trips,trips_per_1000,mean_distance\n8,before,4,0.16,\n"
        );

        let changes = vec![classify_distance_change(zid(8), Some(3.0), Some(6.0), 2.0)];
        let mut buf = Vec::new();
        write_distance_change_csv(&changes, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "zone_id,before_mean,after_mean,class,threshold\n8,3,6,increased,2\n"
        );
    }
}
