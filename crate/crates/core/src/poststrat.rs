//! Posterior prediction over frame cells, turnout normalization, weighted
//! aggregation to margins and percentile summaries.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::frame::{CovariateTables, Schema, StratificationFrame};
use crate::model::{linear_predictor, Design, Likelihood, ModelError, ModelSpec};
use crate::par;
use crate::sampler::PosteriorDraws;
use crate::stats::{logistic, percentiles};

#[derive(Debug, Error)]
pub enum PoststratError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Mismatch(String),
    #[error("unknown margin attribute '{0}'")]
    UnknownAttribute(String),
    #[error("margin {margin} level {level} has zero total weight")]
    ZeroWeight { margin: String, level: String },
    #[error("unknown choice '{0}'")]
    UnknownChoice(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Cell probabilities per retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPosterior {
    pub choices: Vec<String>,
    pub draws: usize,
    pub cells: usize,
    pub day: Option<u32>,
    /// `[choice][draw][cell]`, flattened.
    pub values: Vec<f64>,
}

impl CellPosterior {
    #[inline]
    pub fn get(&self, choice: usize, draw: usize, cell: usize) -> f64 {
        self.values[(choice * self.draws + draw) * self.cells + cell]
    }

    /// Row of one (choice, draw) over all cells.
    pub fn row(&self, choice: usize, draw: usize) -> &[f64] {
        let s = (choice * self.draws + draw) * self.cells;
        &self.values[s..s + self.cells]
    }

    pub fn choice_index(&self, label: &str) -> Result<usize, PoststratError> {
        self.choices.iter().position(|c| c == label).ok_or_else(|| PoststratError::UnknownChoice(label.into()))
    }

    /// Stacks single-choice posteriors (one per Bernoulli fit).
    pub fn stack(parts: Vec<CellPosterior>) -> Result<CellPosterior, PoststratError> {
        let first = parts.first().ok_or_else(|| PoststratError::Mismatch("nothing to stack".into()))?;
        let (draws, cells, day) = (first.draws, first.cells, first.day);
        let mut out = CellPosterior { choices: Vec::new(), draws, cells, day, values: Vec::new() };
        for p in parts {
            if p.draws != draws || p.cells != cells || p.day != day {
                return Err(PoststratError::Mismatch("stacked posteriors differ in draws, cells or day".into()));
            }
            out.choices.extend(p.choices);
            out.values.extend(p.values);
        }
        Ok(out)
    }
}

/// Cell probabilities for every draw. The Bernoulli offset is left out, so a
/// corrected fit predicts on the representative scale.
pub fn predict_cells(
    spec: &ModelSpec,
    draws: &PosteriorDraws,
    schema: &Schema,
    frame: &StratificationFrame,
    cov: &CovariateTables,
    day: Option<u32>,
) -> Result<CellPosterior, PoststratError> {
    if draws.dim() != spec.dim() {
        return Err(PoststratError::Mismatch(format!(
            "draws have {} parameters, model has {}",
            draws.dim(),
            spec.dim()
        )));
    }
    let design = Design::for_cells(spec, schema, frame, cov, day)?;
    let cells = design.rows;
    let n = draws.len();
    let per_draw: Vec<Vec<Vec<f64>>> = par::map_indexed(n, |i| {
        let q = draws.draw(i);
        match spec.likelihood {
            Likelihood::Bernoulli { .. } => {
                let mu = linear_predictor(spec, q, &design, 0, 0.0);
                vec![mu.into_iter().map(logistic).collect()]
            }
            Likelihood::Multinomial => {
                let etas: Vec<Vec<f64>> =
                    (0..spec.groups()).map(|g| linear_predictor(spec, q, &design, g, 0.0)).collect();
                softmax_with_reference(&etas, cells)
            }
        }
    });
    let choices = match spec.likelihood {
        Likelihood::Bernoulli { choice, .. } => vec![spec.choices[choice].clone()],
        Likelihood::Multinomial => spec.choices.clone(),
    };
    let mut values = Vec::with_capacity(choices.len() * n * cells);
    for j in 0..choices.len() {
        for d in &per_draw {
            values.extend_from_slice(&d[j]);
        }
    }
    Ok(CellPosterior { choices, draws: n, cells, day, values })
}

/// Softmax over `etas` plus a reference predictor fixed at 0.
fn softmax_with_reference(etas: &[Vec<f64>], cells: usize) -> Vec<Vec<f64>> {
    let k = etas.len();
    let mut out = vec![vec![0.0; cells]; k + 1];
    for m in 0..cells {
        let mx = etas.iter().fold(0.0f64, |a, e| a.max(e[m]));
        let mut s = (-mx).exp();
        for e in etas {
            s += (e[m] - mx).exp();
        }
        for j in 0..k {
            out[j][m] = (etas[j][m] - mx).exp() / s;
        }
        out[k][m] = (-mx).exp() / s;
    }
    out
}

/// Renormalizes the party choices to sum to one in every (draw, cell); the
/// remaining choices (abstention) drop out.
pub fn normalize_turnout(cp: &CellPosterior, parties: &[String]) -> Result<CellPosterior, PoststratError> {
    let idx: Vec<usize> = parties.iter().map(|p| cp.choice_index(p)).collect::<Result<_, _>>()?;
    let (n, c) = (cp.draws, cp.cells);
    let mut values = vec![0.0; idx.len() * n * c];
    for d in 0..n {
        for m in 0..c {
            let total: f64 = idx.iter().map(|&j| cp.get(j, d, m)).sum();
            for (k, &j) in idx.iter().enumerate() {
                values[(k * n + d) * c + m] = cp.get(j, d, m) / total;
            }
        }
    }
    Ok(CellPosterior { choices: parties.to_vec(), draws: n, cells: c, day: cp.day, values })
}

/// Aggregated draws for every level of one margin.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginDraws {
    /// Attribute names; empty for the whole population.
    pub margin: Vec<String>,
    /// Level tuples (0-based), sorted.
    pub levels: Vec<Vec<u32>>,
    pub choices: Vec<String>,
    pub draws: usize,
    pub day: Option<u32>,
    /// `[level][choice][draw]`, flattened.
    pub values: Vec<f64>,
}

impl MarginDraws {
    pub fn series(&self, level: usize, choice: usize) -> &[f64] {
        let s = (level * self.choices.len() + choice) * self.draws;
        &self.values[s..s + self.draws]
    }

    pub fn level_index(&self, level: &[u32]) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }

    pub fn margin_name(&self) -> String {
        if self.margin.is_empty() {
            "all".into()
        } else {
            self.margin.join("+")
        }
    }
}

/// Frame-weighted mean of cell probabilities within each level of `margin`.
pub fn aggregate(
    cp: &CellPosterior,
    frame: &StratificationFrame,
    schema: &Schema,
    margin: &[&str],
) -> Result<MarginDraws, PoststratError> {
    if frame.len() != cp.cells {
        return Err(PoststratError::Mismatch(format!("frame has {} cells, posterior has {}", frame.len(), cp.cells)));
    }
    let cols: Vec<usize> = margin
        .iter()
        .map(|a| schema.attribute_index(a).ok_or_else(|| PoststratError::UnknownAttribute(a.to_string())))
        .collect::<Result<_, _>>()?;
    let mut groups: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    for (m, cell) in frame.cells().iter().enumerate() {
        let key = cols.iter().map(|&i| cell.levels[i]).collect();
        groups.entry(key).or_default().push(m);
    }
    let margin_names: Vec<String> = margin.iter().map(|s| s.to_string()).collect();
    let weights = frame.weights();
    let mut levels = Vec::with_capacity(groups.len());
    let mut members = Vec::with_capacity(groups.len());
    for (key, cells) in groups {
        let w: f64 = cells.iter().map(|&m| weights[m]).sum();
        if !(w > 0.0) {
            return Err(PoststratError::ZeroWeight {
                margin: margin_names.join("+"),
                level: level_label(schema, &cols, &key),
            });
        }
        levels.push(key);
        members.push((cells, w));
    }
    let nc = cp.choices.len();
    let blocks: Vec<Vec<f64>> = par::map_indexed(members.len(), |l| {
        let (cells, w) = &members[l];
        let mut out = Vec::with_capacity(nc * cp.draws);
        for j in 0..nc {
            for d in 0..cp.draws {
                let row = cp.row(j, d);
                let s: f64 = cells.iter().map(|&m| row[m] * weights[m]).sum();
                out.push(s / w);
            }
        }
        out
    });
    Ok(MarginDraws {
        margin: margin_names,
        levels,
        choices: cp.choices.clone(),
        draws: cp.draws,
        day: cp.day,
        values: blocks.concat(),
    })
}

fn level_label(schema: &Schema, cols: &[usize], key: &[u32]) -> String {
    if cols.is_empty() {
        return "all".into();
    }
    cols.iter().zip(key).map(|(&i, &l)| schema.attributes[i].level_name(l)).collect::<Vec<_>>().join(":")
}

/// 5th, 50th and 95th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

pub fn summarize(draws: &[f64]) -> Percentiles {
    let p = percentiles(draws, &[0.05, 0.5, 0.95]);
    Percentiles { p5: p[0], p50: p[1], p95: p[2] }
}

/// One line of `estimates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub margin: String,
    pub level: String,
    pub choice: String,
    pub day: Option<u32>,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

pub fn estimate_rows(md: &MarginDraws, schema: &Schema) -> Vec<EstimateRow> {
    let cols: Vec<usize> = md.margin.iter().filter_map(|a| schema.attribute_index(a)).collect();
    let mut rows = Vec::new();
    for (l, key) in md.levels.iter().enumerate() {
        for (j, choice) in md.choices.iter().enumerate() {
            let s = summarize(md.series(l, j));
            rows.push(EstimateRow {
                margin: md.margin_name(),
                level: level_label(schema, &cols, key),
                choice: choice.clone(),
                day: md.day.map(|d| d + 1),
                p5: s.p5,
                p50: s.p50,
                p95: s.p95,
            });
        }
    }
    rows
}

/// Writes `margin,level,choice,day,p5,p50,p95`; days are 1-based, blank when
/// the model has none.
pub fn write_estimates(path: &Path, rows: &[EstimateRow]) -> Result<(), PoststratError> {
    let err =
        |e: &dyn std::fmt::Display| PoststratError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(|e| err(&e))?;
    w.write_record(["margin", "level", "choice", "day", "p5", "p50", "p95"]).map_err(|e| err(&e))?;
    for r in rows {
        let day = r.day.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            r.margin.as_str(),
            r.level.as_str(),
            r.choice.as_str(),
            day.as_str(),
            &r.p5.to_string(),
            &r.p50.to_string(),
            &r.p95.to_string(),
        ])
        .map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))?;
    Ok(())
}

/// Uniform-swing baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Swing {
    pub shares: Vec<f64>,
    /// Areas whose swung share left [0, 1] and was clamped.
    pub clamped: Vec<usize>,
}

pub fn uniform_swing(prev_share: &[f64], national_prev: f64, national_now: f64) -> Swing {
    let delta = national_now - national_prev;
    let mut clamped = Vec::new();
    let shares = prev_share
        .iter()
        .enumerate()
        .map(|(l, &s)| {
            let v = s + delta;
            if !(0.0..=1.0).contains(&v) {
                clamped.push(l);
                log::warn!("uniform swing: area {} share {v} clamped to [0, 1]", l + 1);
            }
            v.clamp(0.0, 1.0)
        })
        .collect();
    Swing { shares, clamped }
}
