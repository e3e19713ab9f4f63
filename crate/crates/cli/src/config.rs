//! Declarative pipeline configuration, loaded from a TOML file.
//!
//! Relative input paths and the output directory resolve against the
//! directory containing the config file, so a study folder can be
//! moved around as a unit.

use crate::error::CliError;
use chrono::NaiveDate;
use demand_pulse_core::dtw::CostKind;
use demand_pulse_core::ingest::{EpidemicSchema, TripSchema, VaccinationSchema, ZoneSchema};
use demand_pulse_core::spatial::FitMode;
use demand_pulse_core::series::AnalysisPeriod;
use demand_pulse_core::NormalizationMode;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub schema: Schemas,
    #[serde(default)]
    pub periods: Periods,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub trips: PathBuf,
    pub epidemic: PathBuf,
    pub vaccination: PathBuf,
    pub zones: PathBuf,
}

/// Column-name mappings; every field defaults to the source portal's
/// own column names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schemas {
    pub trips: TripSchema,
    pub epidemic: EpidemicSchema,
    pub vaccination: VaccinationSchema,
    pub zones: ZoneSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Periods {
    pub before_start: NaiveDate,
    pub before_end: NaiveDate,
    pub after_start: NaiveDate,
    pub after_end: NaiveDate,
}

impl Default for Periods {
    /// The study's published windows: vaccination began 2020-12-15.
    fn default() -> Self {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        Periods {
            before_start: d(2020, 3, 9),
            before_end: d(2020, 12, 15),
            after_start: d(2020, 12, 16),
            after_end: d(2021, 5, 31),
        }
    }
}

impl Periods {
    pub fn before(&self) -> AnalysisPeriod {
        AnalysisPeriod::new(self.before_start, self.before_end)
            .expect("validated at load time")
    }

    pub fn after(&self) -> AnalysisPeriod {
        AnalysisPeriod::new(self.after_start, self.after_end).expect("validated at load time")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    /// Apply a trailing 7-day rolling mean before analysis.
    pub smoothing: bool,
    /// Normalization applied to both series before DTW.
    pub normalization: NormalizationMode,
    /// Pointwise cost used by DTW.
    pub dtw_cost: CostKind,
    /// Maximum lead/lag (days) swept by the cross-correlation stage.
    pub max_offset: i64,
    /// Travel-distance change significance threshold, in miles.
    pub distance_threshold_miles: f64,
    /// Linear model for the before/after per-capita fit.
    pub fit_mode: FitMode,
}

impl Default for Analysis {
    fn default() -> Self {
        Analysis {
            smoothing: true,
            normalization: NormalizationMode::ZScore,
            dtw_cost: CostKind::Absolute,
            max_offset: 30,
            distance_threshold_miles:
                demand_pulse_core::spatial::DEFAULT_DISTANCE_THRESHOLD_MILES,
            fit_mode: FitMode::Intercept,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: PathBuf::from("out") }
    }
}

impl PipelineConfig {
    /// Loads, resolves paths, and validates. Input files must already
    /// exist; nothing is created here.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for input in [
            &mut cfg.inputs.trips,
            &mut cfg.inputs.epidemic,
            &mut cfg.inputs.vaccination,
            &mut cfg.inputs.zones,
        ] {
            if input.is_relative() {
                *input = base.join(&input);
            }
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.periods;
        for (name, start, end) in [
            ("before", p.before_start, p.before_end),
            ("after", p.after_start, p.after_end),
        ] {
            if start > end {
                return Err(CliError::Config(format!(
                    "{name} period starts {start}, after its end {end}"
                )));
            }
        }
        if self.analysis.max_offset < 1 {
            return Err(CliError::Config(format!(
                "max_offset must be at least 1, got {}",
                self.analysis.max_offset
            )));
        }
        let threshold = self.analysis.distance_threshold_miles;
        if !threshold.is_finite() || threshold <= 0.0 {
            return Err(CliError::Config(format!(
                "distance_threshold_miles must be positive, got {threshold}"
            )));
        }
        for (name, path) in [
            ("trips", &self.inputs.trips),
            ("epidemic", &self.inputs.epidemic),
            ("vaccination", &self.inputs.vaccination),
            ("zones", &self.inputs.zones),
        ] {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "{name} input file not found: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        &self.output.dir
    }
}
