//! Report files written after all runs finish.
//!
//! | file                | one row per                                                                    |
//! |---------------------|--------------------------------------------------------------------------------|
//! | `runs.csv`          | run and time step: `run, n, x.., u.., w.., sigma_active, tau_active, v_norm, deviation` |
//! | `sweep.csv`         | swept `τ_max`: `tau_max, tau_inf, delta_sigma_inf, max_deviation, v_bound, v_observed, status` |
//! | `bounds.csv`        | finished run: `seed, tau_max, tau_inf, delta_sigma_inf, w_sup, v_bound, v_observed, satisfied` |
//! | `switches.csv`      | actuator switch: `run, sigma, stamp, tau`                                      |
//! | `ledger.csv`        | run and ledger time: `run, k, u.., xtilde..`                                   |
//! | `consistency.jsonl` | run: the consistency report as a JSON object                                  |
//! | `summary.txt`       | human-readable overview, the only file with timing                             |
//!
//! The final row of each run in `runs.csv` holds `x(N)` and leaves the input and
//! disturbance columns empty. Floats use Rust's shortest round-trip formatting,
//! so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::RunRecord;
use super::sweep::{linear_fit, SweepRow};
use crate::compensation::Violation;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportPaths {
    pub runs: PathBuf,
    pub sweep: PathBuf,
    pub bounds: PathBuf,
    pub switches: PathBuf,
    pub ledger: PathBuf,
    pub consistency: PathBuf,
    pub summary: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            runs: dir.join("runs.csv"),
            sweep: dir.join("sweep.csv"),
            bounds: dir.join("bounds.csv"),
            switches: dir.join("switches.csv"),
            ledger: dir.join("ledger.csv"),
            consistency: dir.join("consistency.jsonl"),
            summary: dir.join("summary.txt"),
        }
    }

    /// Every file whose bytes depend only on the scenarios.
    pub fn deterministic_files(&self) -> [&Path; 6] {
        [
            &self.runs,
            &self.sweep,
            &self.bounds,
            &self.switches,
            &self.ledger,
            &self.consistency,
        ]
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

fn padded(values: Option<&nalgebra::DVector<f64>>, width: usize) -> impl Iterator<Item = String> + '_ {
    (0..width).map(move |i| values.and_then(|v| v.get(i)).map_or_else(String::new, |x| num(*x)))
}

fn dims(records: &[RunRecord]) -> (usize, usize) {
    let nx = records.iter().map(|r| r.trajectory.states[0].len()).max().unwrap_or(4);
    let nu = records
        .iter()
        .filter_map(|r| r.trajectory.inputs.first().map(|u| u.len()))
        .max()
        .unwrap_or(2);
    (nx, nu)
}

fn runs_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let (nx, nu) = dims(records);
    let mut header = vec!["run".to_string(), "n".to_string()];
    header.extend(numbered("x", nx));
    header.extend(numbered("u", nu));
    header.extend(numbered("w", nx));
    header.extend(["sigma_active", "tau_active", "v_norm", "deviation"].map(String::from));
    let mut rows = Vec::new();
    for (run, r) in records.iter().enumerate() {
        let by_stamp: BTreeMap<usize, (usize, usize)> =
            r.switches.iter().map(|s| (s.stamp, (s.sigma, s.tau))).collect();
        for (n, x) in r.trajectory.states.iter().enumerate() {
            let mut row = vec![run.to_string(), n.to_string()];
            row.extend(padded(Some(x), nx));
            row.extend(padded(r.trajectory.input_at(n), nu));
            let w = (n < r.simulated_steps()).then(|| &r.disturbances[n].entries);
            row.extend(padded(w, nx));
            let active = r.active_stamps.get(n).copied().flatten().and_then(|s| by_stamp.get(&s));
            row.push(opt(active.map(|a| a.0)));
            row.push(opt(active.map(|a| a.1)));
            row.push(opt(r.v.norm_at(n).map(num)));
            row.push(num(r.deviation[n]));
            rows.push(row);
        }
    }
    csv_bytes(&header, rows)
}

fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let header = [
        "tau_max",
        "tau_inf",
        "delta_sigma_inf",
        "max_deviation",
        "v_bound",
        "v_observed",
        "status",
    ]
    .map(String::from);
    csv_bytes(
        &header,
        rows.iter().map(|r| {
            vec![
                r.tau_max.to_string(),
                r.tau_inf.to_string(),
                r.delta_sigma_inf.to_string(),
                num(r.max_deviation),
                opt(r.v_bound.map(num)),
                opt(r.v_observed.map(num)),
                r.status.to_string(),
            ]
        }),
    )
}

fn bounds_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let header = [
        "seed",
        "tau_max",
        "tau_inf",
        "delta_sigma_inf",
        "w_sup",
        "v_bound",
        "v_observed",
        "satisfied",
    ]
    .map(String::from);
    csv_bytes(
        &header,
        records.iter().filter_map(|r| {
            let b = r.bound.as_ref()?;
            Some(vec![
                r.scenario.seed.to_string(),
                r.scenario.tau_max.to_string(),
                b.tau_inf.to_string(),
                b.delta_sigma_inf.to_string(),
                num(b.w_sup),
                num(b.v_bound),
                num(b.v_observed),
                b.satisfied.to_string(),
            ])
        }),
    )
}

fn switches_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let header = ["run", "sigma", "stamp", "tau"].map(String::from);
    csv_bytes(
        &header,
        records.iter().enumerate().flat_map(|(run, r)| {
            r.switches
                .iter()
                .map(move |s| vec![run.to_string(), s.sigma.to_string(), s.stamp.to_string(), s.tau.to_string()])
        }),
    )
}

fn ledger_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let (nx, nu) = dims(records);
    let mut header = vec!["run".to_string(), "k".to_string()];
    header.extend(numbered("u", nu));
    header.extend(numbered("xtilde", nx));
    let mut rows = Vec::new();
    for (run, r) in records.iter().enumerate() {
        for (k, u) in r.ledger.utilde() {
            let mut row = vec![run.to_string(), k.to_string()];
            row.extend(padded(Some(u), nu));
            row.extend(padded(r.ledger.prediction(*k), nx));
            rows.push(row);
        }
    }
    csv_bytes(&header, rows)
}

#[derive(Serialize)]
struct ConsistencyLine<'a> {
    run: usize,
    name: &'a str,
    status: &'a str,
    checked_inputs: usize,
    checked_switch_inputs: usize,
    consistent: bool,
    violations: &'a [Violation],
}

fn consistency_jsonl(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (run, r) in records.iter().enumerate() {
        let line = ConsistencyLine {
            run,
            name: &r.scenario.name,
            status: r.status.as_str(),
            checked_inputs: r.consistency.checked_inputs,
            checked_switch_inputs: r.consistency.checked_switch_inputs,
            consistent: r.consistency.is_consistent(),
            violations: &r.consistency.violations,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::Config(format!("json: {e}")))?;
        out.push(b'\n');
    }
    Ok(out)
}

fn summary_text(records: &[RunRecord], sweep: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "runs: {}", records.len());
    for (run, r) in records.iter().enumerate() {
        let _ = writeln!(
            s,
            "[{run}] {} seed={} tau_max={} status={} steps={} max_deviation={:.6} consistent={} wall_time={:.3}s",
            r.scenario.name,
            r.scenario.seed,
            r.scenario.tau_max,
            r.status,
            r.simulated_steps(),
            r.max_deviation,
            r.consistency.is_consistent(),
            r.wall_time.as_secs_f64()
        );
        if let Some(b) = &r.bound {
            let _ = writeln!(
                s,
                "      tau_inf={} delta_sigma_inf={} w_sup={:.6} v_observed={:.6e} v_bound={:.6e} satisfied={}",
                b.tau_inf, b.delta_sigma_inf, b.w_sup, b.v_observed, b.v_bound, b.satisfied
            );
        }
        if let Some(msg) = &r.failure {
            let _ = writeln!(s, "      failure: {msg}");
        }
        if r.solver.solves > 0 {
            let _ = writeln!(
                s,
                "      solver: solves={} not_converged={} max_iterations={}",
                r.solver.solves, r.solver.not_converged, r.solver.max_iterations
            );
        }
    }
    if !sweep.is_empty() {
        let pts: Vec<(f64, f64)> = sweep.iter().map(|r| (r.tau_max as f64, r.max_deviation)).collect();
        let _ = writeln!(s, "sweep points: {}", sweep.len());
        if let Some(fit) = linear_fit(&pts) {
            let _ = writeln!(
                s,
                "max deviation ~ {:.6} + {:.6} * tau_max (R^2 = {:.4})",
                fit.intercept, fit.slope, fit.r_squared
            );
        }
    }
    s
}

/// Writes every report file into `dir` (created if missing).
pub fn emit_report(dir: impl AsRef<Path>, records: &[RunRecord], sweep: &[SweepRow]) -> Result<ReportPaths> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ReportPaths::in_dir(dir);
    write_file(&paths.runs, &runs_csv(records)?)?;
    write_file(&paths.sweep, &sweep_csv(sweep)?)?;
    write_file(&paths.bounds, &bounds_csv(records)?)?;
    write_file(&paths.switches, &switches_csv(records)?)?;
    write_file(&paths.ledger, &ledger_csv(records)?)?;
    write_file(&paths.consistency, &consistency_jsonl(records)?)?;
    write_file(&paths.summary, summary_text(records, sweep).as_bytes())?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_scenario, Scenario};

    fn lines(path: &Path) -> usize {
        fs::read_to_string(path).unwrap().lines().count()
    }

    #[test]
    fn empty_report_has_only_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = emit_report(dir.path(), &[], &[]).unwrap();
        for f in [&p.runs, &p.sweep, &p.bounds, &p.switches, &p.ledger] {
            assert_eq!(lines(f), 1, "{}", f.display());
        }
        assert_eq!(lines(&p.consistency), 0);
        let head = fs::read_to_string(&p.runs).unwrap();
        assert!(head.starts_with("run,n,x1,x2,x3,x4,u1,u2,w1,w2,w3,w4,sigma_active"));
    }

    #[test]
    fn one_run_has_steps_plus_one_rows() {
        let mut s = Scenario::integrator_static(1);
        s.steps = 25;
        let r = run_scenario(&s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = emit_report(dir.path(), &[r], &[]).unwrap();
        assert_eq!(lines(&p.runs), 1 + 26);
        assert_eq!(lines(&p.bounds), 2);
    }

    #[test]
    fn unwritable_directory_reports_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_report(blocker.join("sub"), &[], &[]).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
