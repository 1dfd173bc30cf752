//! Writing a scenario's artifact set: trajectory CSVs, `metrics.json`,
//! an optional `sweep.csv` table and `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spherebot_core::RobotParams;

use crate::error::{CliError, CliResult};
use crate::runner::{execute, RunRecord};
use crate::scenario::{Scenario, Summary};

pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario: String,
    pub summary: Summary,
    pub params: RobotParams,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub tool_version: String,
    /// SHA-256 of the fully expanded scenario JSON.
    pub config_hash: String,
    pub created_unix: u64,
    pub determinism: String,
    pub files: Vec<FileEntry>,
    pub failed_runs: Vec<String>,
}

pub fn config_hash(scn: &Scenario) -> String {
    let bytes = serde_json::to_vec(scn).expect("scenario serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<FileEntry> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(FileEntry {
        name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(bytes)),
    })
}

fn sweep_table(runs: &[RunRecord]) -> String {
    let mut out = String::from(
        "label,beta_deg,speed,amp_pred,amp_meas,freq_pred,freq_meas,radius_pred,radius_meas,prec_pred,prec_meas\n",
    );
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
    for r in runs {
        if let Some(c) = &r.circle {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{:e},{},{},{:e},{:e}\n",
                r.label,
                r.initial.beta_deg,
                r.initial.speed,
                c.predicted.amplitude_rad,
                c.measured.amplitude_rad,
                c.predicted.frequency_rad_s,
                c.measured.frequency_rad_s,
                opt(c.predicted.radius_m),
                opt(c.measured.radius_m),
                c.precession_at_mean_theta,
                c.measured.precession_mean_rad_s,
            ));
        }
    }
    out
}

/// Where a scenario's artifacts go under `out`.
pub fn scenario_dir(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

/// Runs every run of an expanded scenario sequentially and writes its
/// artifacts. Failed runs are recorded; the call then reports them as an
/// error after everything has been written.
pub fn run_scenario(scn: &Scenario, out: &Path) -> CliResult<ScenarioMetrics> {
    scn.validate()?;
    let dir = scenario_dir(out, &scn.name);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut files = vec![];
    let mut runs = vec![];
    for spec in &scn.runs {
        let mut outcome = execute(scn, spec);
        if let (true, Some(traj)) = (spec.write_trajectory, &outcome.trajectory) {
            let name = format!("{}.csv", spec.label);
            let mut buf = vec![];
            traj.write_csv(&mut buf)?;
            files.push(write(&dir.join(&name), &buf)?);
            outcome.record.trajectory_file = Some(name);
        }
        runs.push(outcome.record);
    }
    let metrics = ScenarioMetrics { scenario: scn.name.clone(), summary: scn.summary, params: scn.params, runs };
    files.push(write(&dir.join(METRICS_FILE), &serde_json::to_vec_pretty(&metrics)?)?);
    if scn.summary == Summary::Sweep {
        files.push(write(&dir.join(SWEEP_FILE), sweep_table(&metrics.runs).as_bytes())?);
    }
    let failed: Vec<&RunRecord> = metrics.runs.iter().filter(|r| !r.ok).collect();
    let manifest = Manifest {
        scenario: scn.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash(scn),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        determinism: "no randomness; data files are a pure function of config_hash and reproduce byte for byte".into(),
        files,
        failed_runs: failed.iter().map(|r| r.label.clone()).collect(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| CliError::io(&path, e))?;
    if let Some(first) = failed.first() {
        return Err(CliError::RunsFailed {
            scenario: scn.name.clone(),
            count: failed.len(),
            first: format!("{}: {}", first.label, first.error.as_deref().unwrap_or("unknown error")),
            numerical: failed.iter().any(|r| r.numerical),
        });
    }
    Ok(metrics)
}

pub fn read_metrics(dir: &Path) -> CliResult<ScenarioMetrics> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(|_| CliError::Incomplete {
        dir: dir.display().to_string(),
        reason: format!("missing {METRICS_FILE}"),
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|_| CliError::Incomplete {
        dir: dir.display().to_string(),
        reason: format!("missing {MANIFEST_FILE}"),
    })?;
    Ok(serde_json::from_str(&text)?)
}
