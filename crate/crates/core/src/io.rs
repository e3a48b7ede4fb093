//! CSV and text serialization of trajectories and reports.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! every value reads back bit-for-bit and identical runs give identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimates::{CheckResult, EstimateReport};
use crate::experiments::{OrderReport, StabilityReport, SweepReport};
use crate::stepper::{Diagnostics, Trajectory};

/// Scientific notation with 17 significant digits; parses back exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(fmt_f64)
        .collect::<Vec<_>>()
        .join(",")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn trajectory_csv(tr: &Trajectory) -> String {
    let mut out = String::from("t,");
    out.push_str(&Diagnostics::COLUMNS.join(","));
    out.push('\n');
    for (t, d) in tr.times.iter().zip(&tr.diagnostics) {
        let _ = writeln!(out, "{},{}", fmt_f64(*t), join(d.values()));
    }
    out
}

/// `t` followed by the diagnostics columns, one row per step.
pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    write_file(path, &trajectory_csv(tr))
}

pub fn snapshots_csv(tr: &Trajectory) -> String {
    let mut out = String::from("time,x,u,phi\n");
    let xs = tr.grid.centers();
    for s in &tr.snapshots {
        for ((x, u), phi) in xs.iter().zip(s.u.iter()).zip(s.phi.iter()) {
            let _ = writeln!(out, "{}", join([s.time, *x, *u, *phi]));
        }
    }
    out
}

/// One row per cell per recorded snapshot: `time,x,u,phi`.
pub fn write_snapshots_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    write_file(path, &snapshots_csv(tr))
}

/// A snapshot read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRecord {
    pub time: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
}

pub fn parse_snapshots_csv(text: &str) -> Result<Vec<SnapshotRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some("time,x,u,phi") {
        return Err(Error::invalid(
            "snapshot csv",
            "expected header time,x,u,phi",
        ));
    }
    let mut out: Vec<SnapshotRecord> = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid("snapshot csv", format!("line {}: {e}", i + 2)))?;
        let [time, x, u, phi] = vals[..] else {
            return Err(Error::invalid(
                "snapshot csv",
                format!("line {}: expected 4 columns", i + 2),
            ));
        };
        match out.last_mut() {
            Some(rec) if rec.time == time && rec.x.last().is_some_and(|&last| x > last) => {
                rec.x.push(x);
                rec.u.push(u);
                rec.phi.push(phi);
            }
            _ => out.push(SnapshotRecord {
                time,
                x: vec![x],
                u: vec![u],
                phi: vec![phi],
            }),
        }
    }
    Ok(out)
}

pub fn read_snapshots_csv(path: &Path) -> Result<Vec<SnapshotRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshots_csv(&text)
}

pub fn checks_csv(checks: &[CheckResult]) -> String {
    let mut out = String::from("check,law,passed,worst_margin,time_of_worst,tolerance\n");
    for c in checks {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.name,
            c.law,
            c.passed,
            join([c.worst_margin, c.time_of_worst, c.tolerance])
        );
    }
    out
}

/// One row per check.
pub fn write_estimate_report(path: &Path, report: &EstimateReport) -> Result<()> {
    write_file(path, &checks_csv(&report.checks))
}

pub fn write_checks_csv(path: &Path, checks: &[CheckResult]) -> Result<()> {
    write_file(path, &checks_csv(checks))
}

pub fn sweep_csv(r: &SweepReport) -> String {
    let mut out = String::from("law,delta,time,error,floor,above_floor,rate,monotone\n");
    for (k, &d) in r.deltas.iter().enumerate() {
        for (j, &t) in r.times.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.law,
                join([d, t, r.errors[k][j], r.floor]),
                d > r.floor,
                fmt_f64(r.rates[j]),
                r.monotone[j]
            );
        }
    }
    out
}

/// One row per (delta, time) pair.
pub fn write_sweep_report(path: &Path, r: &SweepReport) -> Result<()> {
    write_file(path, &sweep_csv(r))
}

pub fn order_csv(r: &OrderReport) -> String {
    let mut out = String::from("law,n,h,dt,coupled_error,elliptic_error\n");
    for (k, &n) in r.resolutions.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.law,
            n,
            join([
                2.0 / n as f64,
                r.dts[k],
                r.coupled_errors[k],
                r.elliptic_errors[k]
            ])
        );
    }
    out
}

/// One row per resolution.
pub fn write_order_report(path: &Path, r: &OrderReport) -> Result<()> {
    write_file(path, &order_csv(r))
}

pub fn stability_csv(r: &StabilityReport) -> String {
    let mut out = String::from("law,eta,s0,s_end,linear_response,envelope_excess\n");
    for (k, &eta) in r.etas.iter().enumerate() {
        let s = &r.separations[k];
        let _ = writeln!(
            out,
            "{},{}",
            r.law,
            join([
                eta,
                s[0],
                s[s.len() - 1],
                r.linear_response[k],
                r.envelope_excess[k]
            ])
        );
    }
    out
}

pub fn stability_series_csv(r: &StabilityReport) -> String {
    let mut out = String::from("t");
    for eta in &r.etas {
        let _ = write!(out, ",s_{}", fmt_f64(*eta));
    }
    out.push('\n');
    for (j, &t) in r.times.iter().enumerate() {
        let row = std::iter::once(t).chain(r.separations.iter().map(|s| s[j]));
        let _ = writeln!(out, "{}", join(row));
    }
    out
}

/// Per-eta summary and the separation time series.
pub fn write_stability_report(summary: &Path, series: &Path, r: &StabilityReport) -> Result<()> {
    write_file(summary, &stability_csv(r))?;
    write_file(series, &stability_series_csv(r))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

fn sci_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn render_checks(checks: &[CheckResult]) -> String {
    let mut out = String::new();
    for c in checks {
        let _ = writeln!(
            out,
            "{:<5} {:<22} {:<10} margin {:>12.4e} at t = {:<10.4} tol {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.law,
            c.worst_margin,
            c.time_of_worst,
            c.tolerance
        );
    }
    out
}

pub fn render_sweep(r: &SweepReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "delta sweep ({}), numerical floor h max|phi|/2 = {:.3e}",
        r.law, r.floor
    );
    let _ = write!(out, "{:>10}", "delta");
    for t in &r.times {
        let _ = write!(out, "  {:>12}", format!("t={t}"));
    }
    out.push('\n');
    for (k, d) in r.deltas.iter().enumerate() {
        let _ = write!(out, "{d:>10.1e}");
        for e in &r.errors[k] {
            let _ = write!(out, "  {e:>12.4e}");
        }
        out.push('\n');
    }
    for (j, t) in r.times.iter().enumerate() {
        let _ = writeln!(
            out,
            "t = {t}: fitted p = {:.3}, strictly decreasing above floor: {}",
            r.rates[j], r.monotone[j]
        );
    }
    if !r.diverged.is_empty() {
        let _ = writeln!(out, "diverged runs: {:?}", r.diverged);
    }
    if let Some(rich) = &r.richardson {
        let _ = writeln!(
            out,
            "reference spatial error |u_n - u_2n|: {}",
            sci_list(rich)
        );
    }
    let _ = writeln!(
        out,
        "no rate in delta is predicted; p describes this scheme and grid only"
    );
    out
}

pub fn render_order(r: &OrderReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "manufactured solution study ({}), t = {}",
        r.law, r.t_end
    );
    for (k, n) in r.resolutions.iter().enumerate() {
        let _ = writeln!(
            out,
            "n = {n:>5}  dt = {:.3e}  coupled {:.4e}  elliptic {:.4e}",
            r.dts[k], r.coupled_errors[k], r.elliptic_errors[k]
        );
    }
    let _ = writeln!(
        out,
        "coupled order {:.3} (R^2 {:.4}), elliptic order {:.3} (R^2 {:.4}), monotone: {}",
        r.coupled_order, r.coupled_r2, r.elliptic_order, r.elliptic_r2, r.monotone
    );
    out
}

pub fn render_stability(r: &StabilityReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "L1 stability ({}), fitted rate C = {:.4}",
        r.law, r.rate
    );
    for (k, eta) in r.etas.iter().enumerate() {
        let _ = writeln!(
            out,
            "eta = {eta:.1e}: s(T)/eta = {:.4e}, envelope excess {:.3e}",
            r.linear_response[k], r.envelope_excess[k]
        );
    }
    let _ = writeln!(
        out,
        "linearity deviations: {}",
        sci_list(&r.linearity_deviation)
    );
    if let Some(change) = r.refinement_change() {
        let _ = writeln!(out, "rate change under refinement: {:.2}%", 100.0 * change);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::{InitialCondition, Params, ReproductionLaw};
    use crate::stepper::{run, StepControl};

    fn short_run() -> Trajectory {
        let g = Grid::new(16).unwrap();
        let p = Params::new(0.1, 0.5, 1.0, ReproductionLaw::Bistable { a: 0.25 }).unwrap();
        let sc = StepControl::new(0.9, 1e-2, 0.05).unwrap();
        let ic = InitialCondition::RandomFourier {
            seed: 4,
            modes: 5,
            baseline: 0.5,
        };
        run(&ic, &p, &sc, &g, 2).unwrap()
    }

    #[test]
    fn floats_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            0.0,
        ] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let mut tr = short_run();
        tr.times.clear();
        tr.diagnostics.clear();
        tr.snapshots.clear();
        let csv = trajectory_csv(&tr);
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 17);
        assert_eq!(snapshots_csv(&tr), "time,x,u,phi\n");
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let tr = short_run();
        let back = parse_snapshots_csv(&snapshots_csv(&tr)).unwrap();
        assert_eq!(back.len(), tr.snapshots.len());
        for (rec, s) in back.iter().zip(&tr.snapshots) {
            assert_eq!(rec.time, s.time);
            assert_eq!(rec.x, tr.grid.centers());
            assert_eq!(rec.u[..], s.u[..]);
            assert_eq!(rec.phi[..], s.phi[..]);
        }
    }

    #[test]
    fn trajectory_rows_match_steps() {
        let tr = short_run();
        assert_eq!(trajectory_csv(&tr).lines().count(), tr.times.len() + 1);
    }

    #[test]
    fn sweep_rows_are_deltas_times_times() {
        let r = SweepReport {
            law: "bistable".into(),
            deltas: vec![0.1, 0.01, 0.001],
            times: vec![0.5, 1.0],
            errors: vec![vec![0.3, 0.2], vec![0.1, 0.05], vec![0.01, 0.02]],
            floor: 1e-4,
            rates: vec![0.7, 0.5],
            monotone: vec![true, true],
            diverged: vec![],
            richardson: None,
        };
        assert_eq!(sweep_csv(&r).lines().count(), 1 + 3 * 2);
    }
}
