//! The six pipeline stages. Each one reads either raw inputs or the
//! intermediates of an earlier stage, writes its outputs under the
//! configured directory, and returns counters for the run manifest.
//!
//! `run_all` executes the stages through the same functions the
//! subcommands use, so a full run and a stage-by-stage run produce
//! byte-identical files.

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::RunManifest;
use chrono::NaiveDate;
use demand_pulse_core::correlate::correlation_matrix;
use demand_pulse_core::dtw::{dtw_report, SeriesGroup};
use demand_pulse_core::ingest::{
    parse_epidemic, parse_trips, parse_vaccination, parse_zones, Cleaner, DailyAggregator,
    EpidemicDaily, EpidemicSchema, GroupKey, VaccinationDaily, VaccinationSchema, ZoneId,
    ZoneInfo, ZoneSchema, RULE_COUNT, RULE_DESCRIPTIONS,
};
use demand_pulse_core::spatial::{
    classify_distance_change, fit, write_distance_change_csv, write_zone_metrics_csv,
    zone_period_metrics, ChangeClass, DistanceChange,
};
use demand_pulse_core::tlcc::{tlcc_sweep, CONVENTION};
use demand_pulse_core::{AnalysisPeriod, DateIndexedSeries};
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub type StageCounts = BTreeMap<String, u64>;

/// The thirteen city-wide series every analysis stage works with, in
/// fixed order: taxi demand first, then epidemic, then vaccination.
pub const SERIES_LABELS: [&str; 13] = [
    "taxi_trips",
    "new_cases",
    "new_hospitalizations",
    "new_deaths",
    "cum_cases",
    "cum_hospitalizations",
    "cum_deaths",
    "new_first_dose",
    "new_second_dose",
    "new_total_dose",
    "cum_first_dose",
    "cum_second_dose",
    "cum_total_dose",
];

/// Vaccination series compared against taxi demand in the lead/lag
/// sweep.
const TLCC_X_LABELS: [&str; 3] = ["cum_first_dose", "cum_second_dose", "cum_total_dose"];

/// Paths of everything the pipeline writes under the output directory.
pub struct OutLayout {
    root: PathBuf,
}

impl OutLayout {
    pub fn new(root: &Path) -> Self {
        OutLayout { root: root.to_path_buf() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn cleaning_report(&self) -> PathBuf {
        self.root.join("ingest").join("cleaning_report.json")
    }

    pub fn daily_counts(&self) -> PathBuf {
        self.root.join("ingest").join("daily_trip_counts.csv")
    }

    pub fn daily_miles(&self) -> PathBuf {
        self.root.join("ingest").join("daily_trip_miles.csv")
    }

    pub fn epidemic(&self) -> PathBuf {
        self.root.join("ingest").join("epidemic.csv")
    }

    pub fn vaccination(&self) -> PathBuf {
        self.root.join("ingest").join("vaccination.csv")
    }

    pub fn zones(&self) -> PathBuf {
        self.root.join("ingest").join("zones.csv")
    }

    pub fn matrix_csv(&self) -> PathBuf {
        self.root.join("correlate").join("matrix.csv")
    }

    pub fn matrix_json(&self) -> PathBuf {
        self.root.join("correlate").join("matrix.json")
    }

    pub fn dtw_csv(&self) -> PathBuf {
        self.root.join("dtw").join("report.csv")
    }

    pub fn dtw_json(&self) -> PathBuf {
        self.root.join("dtw").join("report.json")
    }

    pub fn dtw_pair(&self, label: &str) -> PathBuf {
        self.root.join("dtw").join("pairs").join(format!("{label}.json"))
    }

    pub fn tlcc_profile(&self, label: &str) -> PathBuf {
        self.root.join("tlcc").join(format!("{label}.csv"))
    }

    pub fn tlcc_summaries(&self) -> PathBuf {
        self.root.join("tlcc").join("summaries.json")
    }

    pub fn zone_metrics(&self) -> PathBuf {
        self.root.join("spatial").join("zone_metrics.csv")
    }

    pub fn distance_change(&self) -> PathBuf {
        self.root.join("spatial").join("distance_change.csv")
    }

    pub fn fit_json(&self) -> PathBuf {
        self.root.join("spatial").join("fit.json")
    }

    pub fn spatial_summary(&self) -> PathBuf {
        self.root.join("spatial").join("summary.json")
    }

    pub fn bundle(&self) -> PathBuf {
        self.root.join("report").join("bundle.json")
    }

    pub fn descriptive_stats(&self) -> PathBuf {
        self.root.join("report").join("descriptive_stats.csv")
    }

    pub fn series_csv(&self, label: &str) -> PathBuf {
        self.root.join("report").join("series").join(format!("{label}.csv"))
    }
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let fail = |e: std::io::Error| {
        CliError::Internal(format!("cannot write {}: {e}", path.display()))
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(fail)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(fail)?);
    body(&mut w).map_err(fail)?;
    w.flush().map_err(fail)
}

fn write_json_file(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, |w| w.write_all(text.as_bytes()))
}

fn open_input(stage: &'static str, name: &str, path: &Path) -> Result<BufReader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Stage {
        stage,
        message: format!("cannot open {name} input {}: {e}", path.display()),
    })?;
    Ok(BufReader::with_capacity(256 * 1024, file))
}

/// Opens a file an earlier stage should have written.
fn open_intermediate(
    stage: &'static str,
    producer: &str,
    path: &Path,
) -> Result<BufReader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Stage {
        stage,
        message: format!(
            "cannot read {} ({e}); run the `{producer}` stage first",
            path.display()
        ),
    })?;
    Ok(BufReader::new(file))
}

/// A CSV field, quoted only when it needs to be.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn period_json(period: &AnalysisPeriod) -> serde_json::Value {
    json!({ "start": period.start, "end": period.end })
}

// ---------------------------------------------------------------------------
// ingest

pub fn stage_ingest(cfg: &PipelineConfig) -> Result<StageCounts, CliError> {
    const STAGE: &str = "ingest";
    let layout = OutLayout::new(cfg.out_dir());

    let trips = open_input(STAGE, "trips", &cfg.inputs.trips)?;
    let stream =
        parse_trips(trips, &cfg.schema.trips).map_err(|e| CliError::stage(STAGE, e))?;
    let mut cleaner = Cleaner::new();
    let mut aggregator = DailyAggregator::new(false);
    for row in stream {
        let row = row.map_err(|e| CliError::stage(STAGE, e))?;
        if let Some(trip) = cleaner.judge(row) {
            aggregator.observe(&trip);
        }
    }
    let report = cleaner.report();
    let aggregates = aggregator.finish();

    let epidemic = parse_epidemic(
        open_input(STAGE, "epidemic", &cfg.inputs.epidemic)?,
        &cfg.schema.epidemic,
    )
    .map_err(|e| CliError::stage(STAGE, e))?;
    let vaccination = parse_vaccination(
        open_input(STAGE, "vaccination", &cfg.inputs.vaccination)?,
        &cfg.schema.vaccination,
    )
    .map_err(|e| CliError::stage(STAGE, e))?;
    let zones = parse_zones(open_input(STAGE, "zones", &cfg.inputs.zones)?, &cfg.schema.zones)
        .map_err(|e| CliError::stage(STAGE, e))?;

    let rules: BTreeMap<u8, &str> =
        (1..=RULE_COUNT as u8).zip(RULE_DESCRIPTIONS).collect();
    write_json_file(
        &layout.cleaning_report(),
        &json!({
            "rows_in": report.rows_in,
            "rows_out": report.rows_out,
            "rejected_per_rule": report.rejected_per_rule,
            "rules": rules,
        }),
    )?;
    write_long_series_csv(&layout.daily_counts(), &aggregates.counts)?;
    write_long_series_csv(&layout.daily_miles(), &aggregates.mean_distance)?;
    write_epidemic_csv(&layout.epidemic(), &epidemic)?;
    write_vaccination_csv(&layout.vaccination(), &vaccination)?;
    write_zones_csv(&layout.zones(), &zones)?;

    println!(
        "ingest: {} rows in, {} kept, {} rejected; {} zones in the reference table",
        report.rows_in,
        report.rows_out,
        report.total_rejected(),
        zones.len()
    );
    Ok(StageCounts::from([
        ("rows_in".to_string(), report.rows_in),
        ("rows_out".to_string(), report.rows_out),
        ("rows_rejected".to_string(), report.total_rejected()),
        ("aggregate_groups".to_string(), aggregates.counts.len() as u64),
        ("epidemic_days".to_string(), epidemic.len() as u64),
        ("vaccination_days".to_string(), vaccination.len() as u64),
        ("zones".to_string(), zones.len() as u64),
    ]))
}

/// Long-format series table: `date,key,value`, grouped by key and
/// date-sorted within each group.
fn write_long_series_csv(
    path: &Path,
    map: &BTreeMap<GroupKey, DateIndexedSeries>,
) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(w, "date,key,value")?;
        for (key, series) in map {
            for &(date, value) in series.entries() {
                writeln!(w, "{date},{key},{value}")?;
            }
        }
        Ok(())
    })
}

fn write_epidemic_csv(path: &Path, rows: &[EpidemicDaily]) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(
            w,
            "date,new_cases,new_hospitalizations,new_deaths,cum_cases,cum_hospitalizations,cum_deaths"
        )?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.date,
                r.new_cases,
                r.new_hospitalizations,
                r.new_deaths,
                r.cum_cases,
                r.cum_hospitalizations,
                r.cum_deaths
            )?;
        }
        Ok(())
    })
}

fn write_vaccination_csv(path: &Path, rows: &[VaccinationDaily]) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(w, "date,new_first,new_second,new_total,cum_first,cum_second,cum_total")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.date, r.new_first, r.new_second, r.new_total, r.cum_first, r.cum_second,
                r.cum_total
            )?;
        }
        Ok(())
    })
}

fn write_zones_csv(path: &Path, rows: &[ZoneInfo]) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(w, "id,name,population,area_sq_mi,density")?;
        for z in rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                z.id,
                csv_field(&z.name),
                z.population,
                z.area_sq_mi,
                z.density
            )?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// reading intermediates back

/// Reads a long-format `date,key,value` table back into per-group
/// series.
fn read_long_series_csv(
    stage: &'static str,
    path: &Path,
    label_of: fn(&GroupKey) -> String,
    unit: &str,
) -> Result<BTreeMap<GroupKey, DateIndexedSeries>, CliError> {
    let bad = |line: usize, what: &str| CliError::Stage {
        stage,
        message: format!("{}:{line}: {what}", path.display()),
    };
    let reader = open_intermediate(stage, "ingest", path)?;
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(header))) if header == "date,key,value" => {}
        Some((_, Ok(header))) => {
            return Err(bad(1, &format!("unexpected header {header:?}")))
        }
        Some((_, Err(e))) => return Err(CliError::Internal(e.to_string())),
        None => return Err(bad(1, "empty file")),
    }
    let mut grouped: BTreeMap<GroupKey, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| CliError::Internal(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut cells = line.split(',');
        let (date, key, value) = match (cells.next(), cells.next(), cells.next(), cells.next()) {
            (Some(d), Some(k), Some(v), None) => (d, k, v),
            _ => return Err(bad(lineno, "expected exactly three columns")),
        };
        let date: NaiveDate =
            date.parse().map_err(|_| bad(lineno, &format!("bad date {date:?}")))?;
        let key = parse_group_key(key).ok_or_else(|| bad(lineno, &format!("bad key {key:?}")))?;
        let value: f64 =
            value.parse().map_err(|_| bad(lineno, &format!("bad value {value:?}")))?;
        grouped.entry(key).or_default().push((date, value));
    }
    let mut out = BTreeMap::new();
    for (key, entries) in grouped {
        let series = DateIndexedSeries::new(label_of(&key), entries)
            .map_err(|e| CliError::stage(stage, e))?
            .with_unit(unit);
        out.insert(key, series);
    }
    Ok(out)
}

fn parse_group_key(s: &str) -> Option<GroupKey> {
    let zone = |z: &str| z.parse::<i64>().ok().and_then(|v| ZoneId::try_from(v).ok());
    if s == "city" {
        Some(GroupKey::City)
    } else if let Some((a, b)) = s.split_once('-') {
        Some(GroupKey::OdPair(zone(a)?, zone(b)?))
    } else {
        Some(GroupKey::Zone(zone(s)?))
    }
}

/// Loads the thirteen analysis series from the ingest intermediates,
/// in [`SERIES_LABELS`] order.
fn load_analysis_series(
    stage: &'static str,
    layout: &OutLayout,
) -> Result<Vec<DateIndexedSeries>, CliError> {
    let counts = read_long_series_csv(
        stage,
        &layout.daily_counts(),
        GroupKey::count_label,
        "trips/day",
    )?;
    let taxi = counts.get(&GroupKey::City).cloned().ok_or_else(|| CliError::Stage {
        stage,
        message: format!("{} has no city-wide series", layout.daily_counts().display()),
    })?;

    let epidemic = parse_epidemic(
        open_intermediate(stage, "ingest", &layout.epidemic())?,
        &EpidemicSchema::default(),
    )
    .map_err(|e| CliError::stage(stage, e))?;
    let vaccination = parse_vaccination(
        open_intermediate(stage, "ingest", &layout.vaccination())?,
        &VaccinationSchema::default(),
    )
    .map_err(|e| CliError::stage(stage, e))?;

    let mut out = vec![taxi];
    let epi = |label: &str, value: fn(&EpidemicDaily) -> u64| {
        DateIndexedSeries::new(
            label,
            epidemic.iter().map(|r| (r.date, value(r) as f64)).collect::<Vec<_>>(),
        )
    };
    let vax = |label: &str, value: fn(&VaccinationDaily) -> u64| {
        DateIndexedSeries::new(
            label,
            vaccination.iter().map(|r| (r.date, value(r) as f64)).collect::<Vec<_>>(),
        )
    };
    let built: [demand_pulse_core::Result<DateIndexedSeries>; 12] = [
        epi("new_cases", |r| r.new_cases),
        epi("new_hospitalizations", |r| r.new_hospitalizations),
        epi("new_deaths", |r| r.new_deaths),
        epi("cum_cases", |r| r.cum_cases),
        epi("cum_hospitalizations", |r| r.cum_hospitalizations),
        epi("cum_deaths", |r| r.cum_deaths),
        vax("new_first_dose", |r| r.new_first),
        vax("new_second_dose", |r| r.new_second),
        vax("new_total_dose", |r| r.new_total),
        vax("cum_first_dose", |r| r.cum_first),
        vax("cum_second_dose", |r| r.cum_second),
        vax("cum_total_dose", |r| r.cum_total),
    ];
    for series in built {
        out.push(series.map_err(|e| CliError::stage(stage, e))?);
    }
    debug_assert_eq!(out.len(), SERIES_LABELS.len());
    Ok(out)
}

/// Shared preprocessing: optional trailing 7-day smoothing, then
/// restriction to the analysis window. The label survives untouched.
fn prepare_series(
    stage: &'static str,
    series: &DateIndexedSeries,
    smoothing: bool,
    period: &AnalysisPeriod,
) -> Result<DateIndexedSeries, CliError> {
    let wrap = |e: demand_pulse_core::Error| CliError::Stage {
        stage,
        message: format!("{}: {e}", series.label()),
    };
    let smoothed = if smoothing {
        series.rolling_mean_7().map_err(wrap)?.relabeled(series.label())
    } else {
        series.clone()
    };
    smoothed.restrict(period).map_err(wrap)
}

fn prepare_all(
    stage: &'static str,
    cfg: &PipelineConfig,
    layout: &OutLayout,
) -> Result<Vec<DateIndexedSeries>, CliError> {
    let period = cfg.periods.after();
    load_analysis_series(stage, layout)?
        .iter()
        .map(|s| prepare_series(stage, s, cfg.analysis.smoothing, &period))
        .collect()
}

// ---------------------------------------------------------------------------
// correlate

pub fn stage_correlate(cfg: &PipelineConfig) -> Result<StageCounts, CliError> {
    const STAGE: &str = "correlate";
    let layout = OutLayout::new(cfg.out_dir());
    let series = prepare_all(STAGE, cfg, &layout)?;
    let matrix = correlation_matrix(&series);

    let mut defined = 0u64;
    for i in 0..matrix.len() {
        for j in 0..matrix.len() {
            if matrix.value(i, j).is_some() {
                defined += 1;
            }
        }
    }

    write_file(&layout.matrix_csv(), |w| matrix.write_csv(w))?;
    let mut value = matrix.to_json();
    value["period"] = period_json(&cfg.periods.after());
    value["smoothing"] = json!(cfg.analysis.smoothing);
    write_json_file(&layout.matrix_json(), &value)?;

    let total = (matrix.len() * matrix.len()) as u64;
    println!("correlate: {} series, {defined}/{total} cells defined", matrix.len());
    Ok(StageCounts::from([
        ("series".to_string(), matrix.len() as u64),
        ("defined_cells".to_string(), defined),
    ]))
}

// ---------------------------------------------------------------------------
// dtw

pub fn stage_dtw(cfg: &PipelineConfig) -> Result<StageCounts, CliError> {
    const STAGE: &str = "dtw";
    let layout = OutLayout::new(cfg.out_dir());
    let series = prepare_all(STAGE, cfg, &layout)?;
    let target = series[0].clone();

    const GROUPS: [SeriesGroup; 12] = [
        SeriesGroup::DailyEpidemic,
        SeriesGroup::DailyEpidemic,
        SeriesGroup::DailyEpidemic,
        SeriesGroup::CumulativeEpidemic,
        SeriesGroup::CumulativeEpidemic,
        SeriesGroup::CumulativeEpidemic,
        SeriesGroup::DailyVaccination,
        SeriesGroup::DailyVaccination,
        SeriesGroup::DailyVaccination,
        SeriesGroup::CumulativeVaccination,
        SeriesGroup::CumulativeVaccination,
        SeriesGroup::CumulativeVaccination,
    ];
    let entries: Vec<(SeriesGroup, DateIndexedSeries)> =
        GROUPS.into_iter().zip(series.into_iter().skip(1)).collect();

    let report = dtw_report(&entries, &target, cfg.analysis.normalization, cfg.analysis.dtw_cost);

    write_file(&layout.dtw_csv(), |w| report.write_csv(w))?;
    let group_means: BTreeMap<String, Option<f64>> =
        report.group_means.iter().map(|(g, m)| (g.to_string(), *m)).collect();
    let rows: Vec<serde_json::Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "label": r.label,
                "group": r.group,
                "distance": r.distance(),
                "path_length": r.result.as_ref().map(|res| res.path.len()),
                "note": r.note,
            })
        })
        .collect();
    write_json_file(
        &layout.dtw_json(),
        &json!({
            "target": target.label(),
            "normalization": report.normalization,
            "cost": report.cost_kind,
            "period": period_json(&cfg.periods.after()),
            "rows": rows,
            "group_means": group_means,
        }),
    )?;

    let mut computed = 0u64;
    for row in &report.rows {
        let Some(result) = &row.result else { continue };
        computed += 1;
        write_json_file(
            &layout.dtw_pair(&row.label),
            &json!({
                "label": row.label,
                "group": row.group,
                "normalization": report.normalization,
                "cost": report.cost_kind,
                "distance": result.distance,
                "path": result.path,
            }),
        )?;
    }

    println!("dtw: {computed}/{} pairs against {}", report.rows.len(), target.label());
    Ok(StageCounts::from([
        ("pairs".to_string(), report.rows.len() as u64),
        ("computed".to_string(), computed),
    ]))
}

// ---------------------------------------------------------------------------
// tlcc

pub fn stage_tlcc(cfg: &PipelineConfig) -> Result<StageCounts, CliError> {
    const STAGE: &str = "tlcc";
    let layout = OutLayout::new(cfg.out_dir());
    let series = prepare_all(STAGE, cfg, &layout)?;
    let max_offset = cfg.analysis.max_offset;
    let taxi = &series[0];

    let mut summaries = Vec::new();
    for label in TLCC_X_LABELS {
        let x = series
            .iter()
            .find(|s| s.label() == label)
            .expect("canonical series order");
        let profile = tlcc_sweep(x, taxi, max_offset).map_err(|e| CliError::Stage {
            stage: STAGE,
            message: format!("{label} vs {}: {e}", taxi.label()),
        })?;
        write_file(&layout.tlcc_profile(label), |w| profile.write_csv(w))?;
        summaries.push(profile.summary(label, taxi.label()));
    }

    write_json_file(
        &layout.tlcc_summaries(),
        &json!({
            "y": taxi.label(),
            "max_offset": max_offset,
            "convention": CONVENTION,
            "summaries": summaries,
        }),
    )?;

    println!(
        "tlcc: {} sweeps over offsets -{max_offset}..={max_offset}",
        summaries.len()
    );
    Ok(StageCounts::from([
        ("sweeps".to_string(), summaries.len() as u64),
        ("offsets_per_sweep".to_string(), (2 * max_offset + 1) as u64),
    ]))
}

// ---------------------------------------------------------------------------
// spatial

pub fn stage_spatial(cfg: &PipelineConfig) -> Result<StageCounts, CliError> {
    const STAGE: &str = "spatial";
    let layout = OutLayout::new(cfg.out_dir());

    let counts = read_long_series_csv(
        STAGE,
        &layout.daily_counts(),
        GroupKey::count_label,
        "trips/day",
    )?;
    let miles =
        read_long_series_csv(STAGE, &layout.daily_miles(), GroupKey::distance_label, "miles")?;
    let zones = parse_zones(
        open_intermediate(STAGE, "ingest", &layout.zones())?,
        &ZoneSchema::default(),
    )
    .map_err(|e| CliError::stage(STAGE, e))?;

    let only_zones = |map: &BTreeMap<GroupKey, DateIndexedSeries>| {
        map.iter()
            .filter_map(|(k, s)| match k {
                GroupKey::Zone(z) => Some((*z, s.clone())),
                _ => None,
            })
            .collect::<BTreeMap<ZoneId, DateIndexedSeries>>()
    };
    let zone_counts = only_zones(&counts);
    let zone_miles = only_zones(&miles);

    let table = |period: AnalysisPeriod, label: &str| {
        zone_period_metrics(&zone_counts, &zone_miles, &zones, period, label)
            .map_err(|e| CliError::stage(STAGE, e))
    };
    let before = table(cfg.periods.before(), "before")?;
    let after = table(cfg.periods.after(), "after")?;

    let mut stacked = before.rows.clone();
    stacked.extend(after.rows.iter().cloned());
    write_file(&layout.zone_metrics(), |w| {
        write_zone_metrics_csv(&stacked, w).map_err(std::io::Error::other)
    })?;

    // Per-capita demand in the two windows, paired by zone.
    let points: Vec<(f64, f64)> = before
        .rows
        .iter()
        .zip(&after.rows)
        .map(|(b, a)| {
            debug_assert_eq!(b.zone_id, a.zone_id);
            (b.trips_per_1000, a.trips_per_1000)
        })
        .collect();
    let mode = cfg.analysis.fit_mode;
    let linear = fit(&points, mode).map_err(|e| CliError::Stage {
        stage: STAGE,
        message: format!("per-capita fit: {e}"),
    })?;
    let fit_value = json!({
        "mode": mode,
        "x": "trips_per_1000_before",
        "y": "trips_per_1000_after",
        "slope": linear.slope,
        "intercept": linear.intercept,
        "r_squared": linear.r_squared,
        "n_points": linear.n_points,
    });
    write_json_file(&layout.fit_json(), &fit_value)?;

    let threshold = cfg.analysis.distance_threshold_miles;
    let changes: Vec<DistanceChange> = before
        .rows
        .iter()
        .zip(&after.rows)
        .map(|(b, a)| {
            classify_distance_change(b.zone_id, b.mean_distance, a.mean_distance, threshold)
        })
        .collect();
    write_file(&layout.distance_change(), |w| {
        write_distance_change_csv(&changes, w).map_err(std::io::Error::other)
    })?;

    let mut class_counts: BTreeMap<&str, u64> = [
        ("increased", 0),
        ("decreased", 0),
        ("not_significant", 0),
        ("indeterminate", 0),
    ]
    .into();
    for change in &changes {
        let key = match change.class {
            ChangeClass::Increased => "increased",
            ChangeClass::Decreased => "decreased",
            ChangeClass::NotSignificant => "not_significant",
            ChangeClass::Indeterminate => "indeterminate",
        };
        *class_counts.get_mut(key).expect("all classes present") += 1;
    }

    write_json_file(
        &layout.spatial_summary(),
        &json!({
            "periods": {
                "before": period_json(&cfg.periods.before()),
                "after": period_json(&cfg.periods.after()),
            },
            "threshold_miles": threshold,
            "before": before,
            "after": after,
            "fit": fit_value,
            "changes": changes,
            "class_counts": class_counts,
            "skipped_zero_population": before.skipped_zero_population,
        }),
    )?;

    println!(
        "spatial: {} zone rows, fit over {} zones ({} skipped for zero population)",
        stacked.len(),
        linear.n_points,
        before.skipped_zero_population.len()
    );
    Ok(StageCounts::from([
        ("zone_rows".to_string(), stacked.len() as u64),
        ("fit_points".to_string(), linear.n_points as u64),
        (
            "skipped_zero_population".to_string(),
            before.skipped_zero_population.len() as u64,
        ),
    ]))
}

// ---------------------------------------------------------------------------
// report

pub fn stage_report(cfg: &PipelineConfig) -> Result<StageCounts, CliError> {
    const STAGE: &str = "report";
    let layout = OutLayout::new(cfg.out_dir());

    let read_json = |producer: &'static str, path: PathBuf| -> Result<serde_json::Value, CliError> {
        let reader = open_intermediate(STAGE, producer, &path)?;
        serde_json::from_reader(reader).map_err(|e| CliError::Stage {
            stage: STAGE,
            message: format!("{} is not valid JSON: {e}", path.display()),
        })
    };
    let bundle = json!({
        "cleaning": read_json("ingest", layout.cleaning_report())?,
        "correlation": read_json("correlate", layout.matrix_json())?,
        "dtw": read_json("dtw", layout.dtw_json())?,
        "tlcc": read_json("tlcc", layout.tlcc_summaries())?,
        "spatial": read_json("spatial", layout.spatial_summary())?,
    });
    write_json_file(&layout.bundle(), &bundle)?;

    // Descriptive statistics of the raw series in each window, and the
    // processed (smoothed, full-range) series themselves.
    let series = load_analysis_series(STAGE, &layout)?;
    let periods = [("before", cfg.periods.before()), ("after", cfg.periods.after())];
    let mut stat_rows = 0u64;
    write_file(&layout.descriptive_stats(), |w| {
        writeln!(w, "label,period,n,mean,std,min,median,max")?;
        for s in &series {
            for (label, period) in &periods {
                let Ok(window) = s.restrict(period) else { continue };
                let Some(d) = window.describe() else { continue };
                writeln!(
                    w,
                    "{},{label},{},{},{},{},{},{}",
                    s.label(),
                    d.n,
                    d.mean,
                    d.std,
                    d.min,
                    d.median,
                    d.max
                )?;
                stat_rows += 1;
            }
        }
        Ok(())
    })?;

    let mut series_files = 0u64;
    for s in &series {
        let processed = if cfg.analysis.smoothing {
            s.rolling_mean_7()
                .map_err(|e| CliError::Stage {
                    stage: STAGE,
                    message: format!("{}: {e}", s.label()),
                })?
                .relabeled(s.label())
        } else {
            s.clone()
        };
        write_file(&layout.series_csv(processed.label()), |w| processed.write_csv(w))?;
        series_files += 1;
    }

    println!("report: bundle, {stat_rows} stat rows, {series_files} series files");
    Ok(StageCounts::from([
        ("stat_rows".to_string(), stat_rows),
        ("series_files".to_string(), series_files),
    ]))
}

// ---------------------------------------------------------------------------
// run

/// Runs every stage in order and records the run manifest.
pub fn run_all(cfg: &PipelineConfig, config_path: &Path) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let mut stages = BTreeMap::new();
    stages.insert("ingest".to_string(), stage_ingest(cfg)?);
    stages.insert("correlate".to_string(), stage_correlate(cfg)?);
    stages.insert("dtw".to_string(), stage_dtw(cfg)?);
    stages.insert("tlcc".to_string(), stage_tlcc(cfg)?);
    stages.insert("spatial".to_string(), stage_spatial(cfg)?);
    stages.insert("report".to_string(), stage_report(cfg)?);

    let manifest = RunManifest::new(
        config_path,
        cfg,
        stages,
        rayon::current_num_threads(),
        started.elapsed().as_millis() as u64,
    )?;
    let layout = OutLayout::new(cfg.out_dir());
    write_json_file(&layout.manifest(), &manifest)?;
    println!("run complete: {}", layout.manifest().display());
    Ok(())
}
