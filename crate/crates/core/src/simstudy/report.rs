//! CSV output for study results.

use std::path::Path;

use serde::Serialize;

use super::{Metric, ScenarioReport, SimError, SweepRow};
use crate::stats::{mean, variance};

fn io<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> SimError + '_ {
    move |e| SimError::Io(format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct LongRow<'a> {
    replicate: usize,
    scenario: String,
    choice: &'a str,
    target: &'static str,
    metric: &'static str,
    value: f64,
    n: usize,
    prevalence: f64,
    selection_mu: Option<f64>,
    sample_prevalence_bias: f64,
    flagged: bool,
}

/// Long table: one row per replicate, scenario, choice, target and metric,
/// with the stimulus values repeated on every row. Undefined metrics are
/// written as NaN.
pub fn write_report(path: &Path, reports: &[ScenarioReport]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(io(path))?;
    for r in reports {
        for c in &r.choices {
            for (target, m) in [("theta", &c.theta), ("pi", &c.pi)] {
                for metric in Metric::ALL {
                    if metric == Metric::AbsBias {
                        continue;
                    }
                    w.serialize(LongRow {
                        replicate: r.replicate,
                        scenario: r.scenario.label(),
                        choice: &c.choice,
                        target,
                        metric: metric.name(),
                        value: m.get(metric).unwrap_or(f64::NAN),
                        n: c.n,
                        prevalence: c.prevalence,
                        selection_mu: c.selection_mu,
                        sample_prevalence_bias: c.sample_prevalence_bias,
                        flagged: r.flagged,
                    })
                    .map_err(io(path))?;
                }
            }
        }
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

/// Mean of a metric over all choice rows of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub target: &'static str,
    pub metric: &'static str,
    pub mean: f64,
    pub mc_error: f64,
    pub rows: usize,
    /// Difference from the S.0 mean, when S.0 was run.
    pub diff_vs_s0: Option<f64>,
}

pub fn summarize_study(reports: &[ScenarioReport]) -> Vec<SummaryRow> {
    let mut ids: Vec<u8> = reports.iter().map(|r| r.scenario.id()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut out = Vec::new();
    for &id in &ids {
        for target in ["theta", "pi"] {
            for metric in Metric::ALL {
                let vals: Vec<f64> = reports
                    .iter()
                    .filter(|r| r.scenario.id() == id)
                    .flat_map(|r| &r.choices)
                    .filter_map(|c| if target == "theta" { &c.theta } else { &c.pi }.get(metric))
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let k = vals.len();
                out.push(SummaryRow {
                    scenario: format!("S.{id}"),
                    target,
                    metric: metric.name(),
                    mean: mean(&vals),
                    mc_error: if k > 1 { (variance(&vals) / k as f64).sqrt() } else { 0.0 },
                    rows: k,
                    diff_vs_s0: None,
                });
            }
        }
    }
    let base: Vec<(&'static str, &'static str, f64)> =
        out.iter().filter(|r| r.scenario == "S.0").map(|r| (r.target, r.metric, r.mean)).collect();
    for r in &mut out {
        r.diff_vs_s0 = base.iter().find(|b| b.0 == r.target && b.1 == r.metric).map(|b| r.mean - b.2);
    }
    out
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(io(path))?;
    for r in rows {
        w.serialize(r).map_err(io(path))?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

#[derive(Serialize)]
struct ScenarioRow {
    replicate: usize,
    scenario: String,
    choices: usize,
    draws: usize,
    divergences: usize,
    flagged: bool,
}

/// One row per replicate and scenario fit.
pub fn write_scenarios(path: &Path, reports: &[ScenarioReport]) -> Result<(), SimError> {
    let rows: Vec<ScenarioRow> = reports
        .iter()
        .map(|r| ScenarioRow {
            replicate: r.replicate,
            scenario: r.scenario.label(),
            choices: r.choices.len(),
            draws: r.draws,
            divergences: r.divergences,
            flagged: r.flagged,
        })
        .collect();
    write_rows(path, &rows)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), SimError> {
    write_rows(path, rows)
}

pub fn write_sweeps(path: &Path, rows: &[SweepRow]) -> Result<(), SimError> {
    write_rows(path, rows)
}
