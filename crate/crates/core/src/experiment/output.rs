use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::plot::{line_chart, Series};
use super::run::{AggregateReport, RunRecord};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `t, mass_outside_H, mass_outside_KL, T_d_t, M_T, regret_est, bound_term3`.
pub fn diagnostics_csv(record: &RunRecord) -> String {
    let mut out = String::from("t,mass_outside_H,mass_outside_KL,T_d_t,M_T,regret_est,bound_term3\n");
    for d in &record.diagnostics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.t,
            d.mass_outside_h,
            d.mass_outside_kl,
            opt(d.t_d),
            opt(d.m_t),
            d.regret_est,
            opt(d.bound_term3)
        );
    }
    out
}

/// One row per posterior update, followed by the posterior weights.
pub fn run_csv(record: &RunRecord) -> String {
    let n_h = record.hypotheses.len();
    let mut out = String::from(
        "t,observed_g,observed_J,sampled_h,selected_g,entropy,mass_true,mass_outside_H,mass_outside_KL,T_d_t,M_T,regret_est,bound_term3",
    );
    for h in 0..n_h {
        let _ = write!(out, ",p{h}");
    }
    out.push('\n');
    for (row, d) in record.rows.iter().zip(&record.diagnostics[1..]) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.t,
            row.observed_g,
            row.observed_cost,
            row.sampled_h,
            row.selected_g,
            row.entropy,
            opt(d.mass_true),
            d.mass_outside_h,
            d.mass_outside_kl,
            opt(d.t_d),
            opt(d.m_t),
            d.regret_est,
            opt(d.bound_term3)
        );
        for w in &row.weights {
            let _ = write!(out, ",{w}");
        }
        out.push('\n');
    }
    out
}

/// Writes `run.json`, `run.csv`, `diagnostics.csv`, `summary.json`,
/// `grid.json` and `hypotheses.json`.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        f(&path)?;
        written.push(path);
        Ok(())
    };
    put("run.json", &|p| write_json(p, record))?;
    put("summary.json", &|p| write_json(p, &record.summary))?;
    put("grid.json", &|p| write_json(p, &record.grid))?;
    put("hypotheses.json", &|p| write_json(p, &record.hypotheses))?;
    put("run.csv", &|p| Ok(fs::write(p, run_csv(record))?))?;
    put("diagnostics.csv", &|p| Ok(fs::write(p, diagnostics_csv(record))?))?;
    Ok(written)
}

pub fn read_run(path: &Path) -> Result<RunRecord> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_aggregate(report: &AggregateReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = dir.join("aggregate.json");
    write_json(&json, report)?;
    let mut csv = String::from("t,regret_mean,regret_std,mass_outside_mean\n");
    for (t, ((m, s), o)) in report.regret_mean.iter().zip(&report.regret_std).zip(&report.mass_outside_mean).enumerate()
    {
        let _ = writeln!(csv, "{t},{m},{s},{o}");
    }
    let csv_path = dir.join("aggregate.csv");
    fs::write(&csv_path, csv)?;
    Ok(vec![json, csv_path])
}

fn figure(dir: &Path, stem: &str, header: &str, series: &[Series], svg: String) -> Result<Vec<PathBuf>> {
    let mut csv = format!("series,{header}\n");
    for s in series {
        for (x, y) in &s.points {
            let _ = writeln!(csv, "{},{x},{y}", s.name);
        }
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    let svg_path = dir.join(format!("{stem}.svg"));
    fs::write(&csv_path, csv)?;
    fs::write(&svg_path, svg)?;
    Ok(vec![csv_path, svg_path])
}

/// Per-figure CSV data and SVG charts. Only the cost chart is drawn when
/// the record carries no diagnostics beyond the prior.
pub fn emit_plots(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let cost = vec![Series {
        name: "observed_J".into(),
        points: record.rows.iter().map(|r| (r.t as f64, r.observed_cost)).collect(),
    }];
    let svg = line_chart("Cost per segment", "t", "J", &cost, false);
    out.extend(figure(dir, "cost", "t,J", &cost, svg)?);
    if record.diagnostics.len() < 2 {
        return Ok(out);
    }
    let diag = &record.diagnostics;
    let t = |d: &super::run::DiagnosticsRow| d.t as f64;
    if diag.iter().all(|d| d.mass_true.is_some()) {
        let s = vec![Series {
            name: "mass_true".into(),
            points: diag.iter().map(|d| (t(d), d.mass_true.unwrap_or(0.0))).collect(),
        }];
        let svg = line_chart("Posterior mass on the true hypothesis", "t", "mass", &s, false);
        out.extend(figure(dir, "posterior_true", "t,mass", &s, svg)?);
    }
    let s = vec![
        Series { name: "hellinger".into(), points: diag.iter().map(|d| (t(d), d.mass_outside_h)).collect() },
        Series { name: "kl".into(), points: diag.iter().map(|d| (t(d), d.mass_outside_kl)).collect() },
    ];
    let svg = line_chart("Posterior mass outside the neighborhood", "t", "mass (log)", &s, true);
    out.extend(figure(dir, "mass_outside", "t,mass", &s, svg)?);
    let mut s = vec![Series { name: "regret".into(), points: diag.iter().map(|d| (t(d), d.regret_est)).collect() }];
    if diag.iter().all(|d| d.bound_total.is_some()) {
        s.push(Series {
            name: "bound".into(),
            points: diag.iter().map(|d| (t(d), d.bound_total.unwrap_or(0.0))).collect(),
        });
    }
    let svg = line_chart("Regret and bound", "t", "regret", &s, true);
    out.extend(figure(dir, "regret", "t,value", &s, svg)?);
    Ok(out)
}
