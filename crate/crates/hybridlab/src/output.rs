//! CSV and JSON outputs.
//!
//! Every file is written to a temporary file in its destination directory
//! and then renamed into place, so readers never see a partial file. CSV
//! output is RFC 4180 with `.` as the decimal separator; numbers use the
//! shortest representation that round-trips, which keeps reruns
//! byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hybridlab_core::experiments::{ExperimentReport, Tolerances};
use hybridlab_core::measure::EmpiricalMeasure;
use hybridlab_core::simulate::Trajectory;
use hybridlab_core::ModePath;
use serde::Serialize;

use crate::config::Provenance;
use crate::error::LabError;

/// Name of the provenance file written next to every set of outputs.
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const VERDICT_FILE: &str = "verdict.json";

/// Write `bytes` to `path` through a temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    let wrap = |source| LabError::Write { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(wrap)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, LabError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| LabError::Csv(e.into_error().into()))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Report table: scenario, suite, quantity, parameter, value, tolerance.
pub fn report_csv(report: &ExperimentReport) -> Result<Vec<u8>, LabError> {
    csv_bytes(
        &header(&["scenario", "suite", "quantity", "parameter", "value", "tolerance"]),
        report.rows.iter().map(|r| {
            vec![
                report.scenario.clone(),
                report.suite.name().to_string(),
                r.quantity.clone(),
                r.parameter.clone(),
                num(r.value),
                r.tolerance.map(num).unwrap_or_default(),
            ]
        }),
    )
}

/// States on the integration grid: t, u_1..u_n, mode.
pub fn trajectory_csv(tr: &Trajectory) -> Result<Vec<u8>, LabError> {
    let mut names = vec!["t".to_string()];
    names.extend((1..=tr.dim()).map(|c| format!("u_{c}")));
    names.push("mode".to_string());
    let modes = tr.mode_path();
    let mut rows = Vec::with_capacity(tr.len());
    for (i, &t) in tr.times().iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(tr.state(i).iter().map(|&v| num(v)));
        row.push(modes.mode_at(t)?.label().to_string());
        rows.push(row);
    }
    csv_bytes(&names, rows)
}

/// Mode changes: the start time with the initial mode, then one row per jump.
pub fn mode_path_csv(path: &ModePath) -> Result<Vec<u8>, LabError> {
    let times = std::iter::once(path.start_time()).chain(path.jump_times().iter().copied());
    csv_bytes(&header(&["t", "mode"]), times.zip(path.modes()).map(|(t, m)| vec![num(t), m.label().to_string()]))
}

/// Atom table: weight, mode, and the segment samples from oldest to newest.
/// Multi-dimensional samples get one column per component.
pub fn measure_csv(mu: &EmpiricalMeasure) -> Result<Vec<u8>, LabError> {
    let mut names = header(&["weight", "mode"]);
    if let Some(first) = mu.atoms().first() {
        for q in 0..first.points() {
            if first.dim() == 1 {
                names.push(format!("s_{q}"));
            } else {
                names.extend((1..=first.dim()).map(|c| format!("s_{q}_{c}")));
            }
        }
    }
    csv_bytes(
        &names,
        mu.atoms().iter().zip(mu.weights()).map(|(a, &w)| {
            let mut row = vec![num(w), a.mode().label().to_string()];
            row.extend(a.values().iter().map(|&v| num(v)));
            row
        }),
    )
}

#[derive(Serialize)]
struct RowOut<'a> {
    quantity: &'a str,
    parameter: &'a str,
    value: f64,
    tolerance: Option<f64>,
}

#[derive(Serialize)]
struct VerdictOut<'a> {
    criterion: &'a str,
    passed: bool,
    value: f64,
    threshold: f64,
    rule: &'a str,
    binding: bool,
}

#[derive(Serialize)]
struct SuiteOut<'a> {
    suite: &'static str,
    passed: bool,
    failure: Option<&'a str>,
    verdicts: Vec<VerdictOut<'a>>,
    rows: Vec<RowOut<'a>>,
    seeds: Vec<(&'a str, u64)>,
}

#[derive(Serialize)]
struct TolerancesOut<'a> {
    eps_stat: Option<f64>,
    exceedance_eta: &'a [f64],
    final_exceedance: f64,
    delay_limit_factor: f64,
}

#[derive(Serialize)]
struct VerdictFile<'a> {
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical runs.
    generated_at_unix: u64,
    scenario: &'a str,
    passed: bool,
    provenance: &'a Provenance,
    tolerances: TolerancesOut<'a>,
    suites: Vec<SuiteOut<'a>>,
}

/// The summary document. `generated_at_unix` is set by the caller so tests
/// can pin it.
pub fn verdict_json(
    provenance: &Provenance,
    tolerances: &Tolerances,
    reports: &[ExperimentReport],
    generated_at_unix: u64,
) -> Result<Vec<u8>, LabError> {
    let doc = VerdictFile {
        generated_at_unix,
        scenario: &provenance.scenario,
        passed: reports.iter().all(ExperimentReport::passed),
        provenance,
        tolerances: TolerancesOut {
            eps_stat: tolerances.eps_stat,
            exceedance_eta: &tolerances.exceedance_eta,
            final_exceedance: tolerances.final_exceedance,
            delay_limit_factor: tolerances.delay_limit_factor,
        },
        suites: reports
            .iter()
            .map(|r| SuiteOut {
                suite: r.suite.name(),
                passed: r.passed(),
                failure: r.failure.as_deref(),
                verdicts: r
                    .verdicts
                    .iter()
                    .map(|v| VerdictOut {
                        criterion: &v.criterion,
                        passed: v.passed,
                        value: v.value,
                        threshold: v.threshold,
                        rule: &v.rule,
                        binding: v.binding,
                    })
                    .collect(),
                rows: r
                    .rows
                    .iter()
                    .map(|row| RowOut {
                        quantity: &row.quantity,
                        parameter: &row.parameter,
                        value: row.value,
                        tolerance: row.tolerance,
                    })
                    .collect(),
                seeds: r.seeds.iter().map(|(l, s)| (l.as_str(), *s)).collect(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn provenance_json(provenance: &Provenance) -> Result<Vec<u8>, LabError> {
    let mut bytes = serde_json::to_vec_pretty(provenance)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Directory receiving the outputs of one scenario.
pub fn scenario_dir(out: &Path, scenario: &str) -> PathBuf {
    out.join(scenario)
}

/// Write `<out>/<scenario>/<suite>.csv` for each report, `verdict.json` and
/// the provenance sidecar. Returns the paths written.
pub fn write_suite_outputs(
    out: &Path,
    provenance: &Provenance,
    tolerances: &Tolerances,
    reports: &[ExperimentReport],
) -> Result<Vec<PathBuf>, LabError> {
    let dir = scenario_dir(out, &provenance.scenario);
    let mut written = Vec::new();
    for r in reports {
        let path = dir.join(format!("{}.csv", r.suite.name()));
        atomic_write(&path, &report_csv(r)?)?;
        written.push(path);
    }
    let path = dir.join(VERDICT_FILE);
    atomic_write(&path, &verdict_json(provenance, tolerances, reports, now_unix())?)?;
    written.push(path);
    let path = dir.join(PROVENANCE_FILE);
    atomic_write(&path, &provenance_json(provenance)?)?;
    written.push(path);
    Ok(written)
}
