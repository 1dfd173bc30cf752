//! Turns artifact sets into pass/fail verdicts with measured-vs-predicted
//! tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{read_manifest, read_metrics, ScenarioMetrics, METRICS_FILE};
use crate::error::{CliError, CliResult};
use crate::runner::RunRecord;
use crate::scenario::Summary;

pub const REPORT_FILE: &str = "report.json";

pub const DRIFT_BOUND: f64 = 1e-6;
pub const AMPLITUDE_TOL: f64 = 0.10;
pub const FREQUENCY_TOL: f64 = 0.05;
pub const RADIUS_TOL_FAST: f64 = 0.10;
pub const RADIUS_TOL_SLOW: f64 = 0.15;
/// |ψ̇| at and above which the tighter radius tolerance applies, rad/s.
pub const FAST_SPEED: f64 = 5.0;
pub const PRECESSION_TOL: f64 = 0.10;
pub const WOBBLY_AMPLITUDE_TOL: f64 = 0.15;
pub const WOBBLE_REDUCTION: f64 = 0.05;
pub const BLEND_RADIUS_TOL: f64 = 0.10;
pub const SETTLED_THETA_DEG: f64 = 0.2;
pub const SETTLED_PHI_DOT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub quantity: String,
    pub predicted: Option<f64>,
    pub measured: Option<f64>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub summary: Summary,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub table: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub passed: usize,
    pub failed: usize,
    pub scenarios: Vec<ScenarioReport>,
}

fn rel(measured: f64, predicted: f64) -> f64 {
    (measured - predicted).abs() / predicted.abs()
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), pass, detail: detail.into() }
}

fn row(label: &str, quantity: &str, predicted: Option<f64>, measured: Option<f64>) -> TableRow {
    let rel_error = match (predicted, measured) {
        (Some(p), Some(m)) if p != 0.0 => Some(rel(m, p)),
        _ => None,
    };
    TableRow { label: label.into(), quantity: quantity.into(), predicted, measured, rel_error }
}

fn runs_ok(m: &ScenarioMetrics) -> Check {
    let failed: Vec<String> =
        m.runs.iter().filter(|r| !r.ok).map(|r| format!("{}: {}", r.label, r.error.as_deref().unwrap_or("?"))).collect();
    check("all runs completed", failed.is_empty(), if failed.is_empty() { "ok".into() } else { failed.join("; ") })
}

fn circle_rows(r: &RunRecord, table: &mut Vec<TableRow>) {
    if let Some(c) = &r.circle {
        table.push(row(&r.label, "amplitude_rad", Some(c.predicted.amplitude_rad), Some(c.measured.amplitude_rad)));
        table.push(row(&r.label, "frequency_rad_s", Some(c.predicted.frequency_rad_s), Some(c.measured.frequency_rad_s)));
        table.push(row(&r.label, "radius_m", c.predicted.radius_m, c.measured.radius_m));
        table.push(row(&r.label, "precession_rad_s", Some(c.precession_at_mean_theta), Some(c.measured.precession_mean_rad_s)));
    }
}

fn circle_checks(m: &ScenarioMetrics, checks: &mut Vec<Check>, table: &mut Vec<TableRow>) {
    for r in &m.runs {
        circle_rows(r, table);
        let Some(c) = &r.circle else {
            checks.push(check(format!("{} measured", r.label), false, r.analysis_error.clone().unwrap_or_else(|| "no measurement".into())));
            continue;
        };
        let a = rel(c.measured.amplitude_rad, c.predicted.amplitude_rad);
        checks.push(check(format!("{} amplitude", r.label), a < AMPLITUDE_TOL, format!("{:.2}% (tol {}%)", 100.0 * a, 100.0 * AMPLITUDE_TOL)));
        let f = rel(c.measured.frequency_rad_s, c.predicted.frequency_rad_s);
        checks.push(check(format!("{} frequency", r.label), f < FREQUENCY_TOL, format!("{:.2}% (tol {}%)", 100.0 * f, 100.0 * FREQUENCY_TOL)));
        if let (Some(p), Some(mm)) = (c.predicted.radius_m, c.measured.radius_m) {
            let tol = if r.initial.speed.abs() >= FAST_SPEED { RADIUS_TOL_FAST } else { RADIUS_TOL_SLOW };
            let e = rel(mm, p);
            checks.push(check(format!("{} radius", r.label), e < tol, format!("{:.2}% (tol {}%)", 100.0 * e, 100.0 * tol)));
        }
        let p = rel(c.measured.precession_mean_rad_s, c.precession_at_mean_theta);
        checks.push(check(format!("{} precession", r.label), p < PRECESSION_TOL, format!("{:.2}% (tol {}%)", 100.0 * p, 100.0 * PRECESSION_TOL)));
    }
}

fn drift_check(m: &ScenarioMetrics) -> Check {
    let worst = m.runs.iter().filter_map(|r| r.max_constraint_residual).fold(0.0, f64::max);
    check("constraint residual", worst < DRIFT_BOUND, format!("max {worst:.3e} m/s (bound {DRIFT_BOUND:e})"))
}

fn by_blend(m: &ScenarioMetrics, blend: (f64, f64)) -> Option<&RunRecord> {
    m.runs.iter().find(|r| r.blend == Some(blend))
}

fn ordering_checks(m: &ScenarioMetrics, checks: &mut Vec<Check>, table: &mut Vec<TableRow>) {
    let control = |b| by_blend(m, b).and_then(|r| r.control.as_ref().map(|c| (r, c)));
    let Some((wr, wobbly)) = control((0.0, 1.0)) else {
        checks.push(check("wobbly reference", false, "(0,1) run missing or unanalysed"));
        return;
    };
    table.push(row(&wr.label, "amplitude_rad", Some(wobbly.predicted_amplitude), wobbly.amplitude));
    let amp_ok = wobbly.amplitude.is_some_and(|a| rel(a, wobbly.predicted_amplitude) <= WOBBLY_AMPLITUDE_TOL);
    checks.push(check(
        "(0,1) wobbles at the predicted amplitude",
        amp_ok,
        format!("{:?} vs {:.4} (tol {}%)", wobbly.amplitude, wobbly.predicted_amplitude, 100.0 * WOBBLY_AMPLITUDE_TOL),
    ));
    for (blend, radius_rule) in [((1.0, 0.0), "radius exceeds (0,1)"), ((0.9, 0.1), "radius within 10% of (0,1)")] {
        let name = format!("({},{})", blend.0, blend.1);
        match control(blend) {
            Some((r, c)) => {
                table.push(row(&r.label, "fitted_radius_m", Some(wobbly.fitted_radius), Some(c.fitted_radius)));
                table.push(row(&r.label, "p2p_theta_dot", Some(wobbly.p2p_theta_dot), Some(c.p2p_theta_dot)));
                let reduced = c.p2p_theta_dot < WOBBLE_REDUCTION * wobbly.p2p_theta_dot;
                checks.push(check(
                    format!("{name} removes wobble"),
                    reduced,
                    format!("p2p θ̇ {:.3e} vs {:.3e}", c.p2p_theta_dot, wobbly.p2p_theta_dot),
                ));
                let radius_ok = if blend.0 == 1.0 {
                    c.fitted_radius > wobbly.fitted_radius
                } else {
                    rel(c.fitted_radius, wobbly.fitted_radius) <= BLEND_RADIUS_TOL
                };
                checks.push(check(
                    format!("{name} {radius_rule}"),
                    radius_ok,
                    format!("{:.4} m vs {:.4} m", c.fitted_radius, wobbly.fitted_radius),
                ));
            }
            None => {
                let why = by_blend(m, blend).and_then(|r| r.error.clone()).unwrap_or_else(|| "run missing".into());
                checks.push(check(format!("{name} run"), false, why));
            }
        }
    }
}

fn turn_checks(m: &ScenarioMetrics, checks: &mut Vec<Check>) {
    let turn = |b| by_blend(m, b).and_then(|r| r.turn.as_ref());
    match turn((0.9, 0.1)) {
        Some(t) => {
            checks.push(check(
                "wobble-free turn settles upright",
                t.max_abs_theta_deg <= SETTLED_THETA_DEG && t.max_abs_phi_dot <= SETTLED_PHI_DOT,
                format!("max|θ| {:.4}°, max|φ̇| {:.5} rad/s", t.max_abs_theta_deg, t.max_abs_phi_dot),
            ));
            if let (Some(w), Some(f)) = (turn((0.0, 1.0)).and_then(|t| t.arc_p2p_theta_dot), t.arc_p2p_theta_dot) {
                checks.push(check("arc wobble reduced", f < WOBBLE_REDUCTION * w, format!("p2p θ̇ {f:.3e} vs {w:.3e}")));
            }
        }
        None => checks.push(check("wobble-free turn", false, "run failed or missing")),
    }
}

fn trend_checks(m: &ScenarioMetrics, checks: &mut Vec<Check>, table: &mut Vec<TableRow>) {
    for (tag, blend) in [("wobble-free", (0.9, 0.1)), ("wobbly", (0.0, 1.0))] {
        let group: Vec<&RunRecord> = m.runs.iter().filter(|r| r.blend == Some(blend)).collect();
        let mut rows: Vec<_> = group.iter().filter_map(|r| r.turn.as_ref().and_then(|t| t.metrics).map(|t| (r, t))).collect();
        if rows.len() < 2 || rows.len() != group.len() {
            checks.push(check(format!("{tag} trends"), false, format!("{} of {} runs analysed", rows.len(), group.len())));
            continue;
        }
        rows.sort_by(|a, b| a.1.beta_des.total_cmp(&b.1.beta_des));
        for (r, t) in &rows {
            table.push(row(&r.label, "heading_deflection_deg", None, Some(t.heading_deflection.to_degrees())));
            table.push(row(&r.label, "radius_error_pct", None, Some(t.radius_error_pct)));
        }
        let up = rows.windows(2).all(|w| w[1].1.heading_deflection > w[0].1.heading_deflection);
        let down = rows.windows(2).all(|w| w[1].1.radius_error_pct < w[0].1.radius_error_pct);
        checks.push(check(format!("{tag} deflection increases with β"), up, "strict monotonicity over β_des"));
        checks.push(check(format!("{tag} radius error decreases with β"), down, "strict monotonicity over β_des"));
    }
}

pub fn evaluate(m: &ScenarioMetrics) -> ScenarioReport {
    let mut checks = vec![runs_ok(m)];
    let mut table = vec![];
    match m.summary {
        Summary::Paths => checks.push(drift_check(m)),
        Summary::Circle => {
            checks.push(drift_check(m));
            circle_checks(m, &mut checks, &mut table);
        }
        Summary::Sweep => {
            for r in &m.runs {
                circle_rows(r, &mut table);
            }
            let freq: Vec<&TableRow> = table.iter().filter(|t| t.quantity == "frequency_rad_s").collect();
            let worst = freq.iter().filter_map(|t| t.rel_error).fold(0.0, f64::max);
            checks.push(check(
                "frequency within tolerance across the sweep",
                !freq.is_empty() && worst < FREQUENCY_TOL,
                format!("worst {:.2}% over {} runs", 100.0 * worst, freq.len()),
            ));
        }
        Summary::Ordering => ordering_checks(m, &mut checks, &mut table),
        Summary::Turn => turn_checks(m, &mut checks),
        Summary::TurnTrends => trend_checks(m, &mut checks, &mut table),
        Summary::Custom => {}
    }
    ScenarioReport {
        scenario: m.scenario.clone(),
        summary: m.summary,
        pass: checks.iter().all(|c| c.pass),
        checks,
        table,
    }
}

fn verify_files(dir: &Path) -> CliResult<()> {
    let manifest = read_manifest(dir)?;
    for f in &manifest.files {
        let path = dir.join(&f.name);
        let bytes = fs::read(&path).map_err(|_| CliError::Incomplete {
            dir: dir.display().to_string(),
            reason: format!("missing {}", f.name),
        })?;
        if hex::encode(Sha256::digest(&bytes)) != f.sha256 {
            return Err(CliError::Incomplete {
                dir: dir.display().to_string(),
                reason: format!("{} does not match its manifest hash", f.name),
            });
        }
    }
    Ok(())
}

/// Reports on every scenario directory under `out` and writes `report.json`.
pub fn summarize(out: &Path) -> CliResult<Report> {
    let entries = fs::read_dir(out).map_err(|e| CliError::io(out, e))?;
    let mut dirs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && (p.join(METRICS_FILE).exists() || p.join(crate::artifacts::MANIFEST_FILE).exists()))
        .collect();
    if dirs.is_empty() {
        return Err(CliError::Incomplete { dir: out.display().to_string(), reason: "no scenario artifacts found".into() });
    }
    dirs.sort();
    let mut scenarios = vec![];
    for dir in dirs {
        verify_files(&dir)?;
        scenarios.push(evaluate(&read_metrics(&dir)?));
    }
    let passed = scenarios.iter().filter(|s| s.pass).count();
    let report = Report { passed, failed: scenarios.len() - passed, scenarios };
    let path = out.join(REPORT_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}
