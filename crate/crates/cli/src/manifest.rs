//! Run manifest: enough provenance to tell whether two runs saw the
//! same inputs and settings. Everything except the `environment`
//! section is a pure function of inputs + config.

use crate::config::PipelineConfig;
use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: ToolInfo,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, InputDigest>,
    pub settings: Settings,
    /// Per-stage counters (rows read, series written, ...).
    pub stages: BTreeMap<String, BTreeMap<String, u64>>,
    /// Machine-dependent facts; excluded from reproducibility checks.
    pub environment: Environment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Echo of every knob that can change the numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Settings {
    pub before_start: String,
    pub before_end: String,
    pub after_start: String,
    pub after_end: String,
    pub smoothing: bool,
    pub normalization: String,
    pub dtw_cost: String,
    pub max_offset: i64,
    pub distance_threshold_miles: f64,
    pub fit_mode: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub threads: usize,
    pub elapsed_ms: u64,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let mut file = std::fs::File::open(path).map_err(|e| {
        CliError::Internal(format!("cannot hash {}: {e}", path.display()))
    })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex(&hasher.finalize()), total))
}

pub fn sha256_bytes(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

fn hex(digest: &[u8]) -> String {
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

impl RunManifest {
    pub fn new(
        config_path: &Path,
        cfg: &PipelineConfig,
        stages: BTreeMap<String, BTreeMap<String, u64>>,
        threads: usize,
        elapsed_ms: u64,
    ) -> Result<Self, CliError> {
        let config_text = std::fs::read(config_path)?;
        let mut inputs = BTreeMap::new();
        for (name, path) in [
            ("trips", &cfg.inputs.trips),
            ("epidemic", &cfg.inputs.epidemic),
            ("vaccination", &cfg.inputs.vaccination),
            ("zones", &cfg.inputs.zones),
        ] {
            let (sha256, bytes) = sha256_file(path)?;
            inputs.insert(
                name.to_string(),
                InputDigest { path: path.display().to_string(), sha256, bytes },
            );
        }
        let a = &cfg.analysis;
        let p = &cfg.periods;
        Ok(RunManifest {
            tool: ToolInfo {
                name: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config_sha256: sha256_bytes(&config_text),
            inputs,
            settings: Settings {
                before_start: p.before_start.to_string(),
                before_end: p.before_end.to_string(),
                after_start: p.after_start.to_string(),
                after_end: p.after_end.to_string(),
                smoothing: a.smoothing,
                normalization: a.normalization.to_string(),
                dtw_cost: a.dtw_cost.to_string(),
                max_offset: a.max_offset,
                distance_threshold_miles: a.distance_threshold_miles,
                fit_mode: a.fit_mode.to_string(),
            },
            stages,
            environment: Environment { threads, elapsed_ms },
        })
    }
}
