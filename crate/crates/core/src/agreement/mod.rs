//! Two-rater agreement: Krippendorff's alpha with a unit bootstrap, and a
//! latent-network Poisson model for the agreement matrix.

mod network;

pub use network::{
    fit_agreement_network, posterior_incidence, simulate_matrix, write_incidence, NetworkConfig, NetworkPosterior,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{mean, percentile_sorted, variance};

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("need at least 2 units rated by both raters, got {0}")]
    TooFewUnits(usize),
    #[error("agreement matrix must be square and nonempty")]
    NotSquare,
    #[error("agreement matrix has no counts")]
    EmptyMatrix,
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no ratings for variable '{variable}' by rater '{rater}'")]
    MissingRater { variable: String, rater: String },
}

fn io_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> AgreementError + '_ {
    move |e| AgreementError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Nominal,
    /// Squared distance between category ranks.
    Ordinal,
}

impl Level {
    fn delta2(self, a: u32, b: u32) -> f64 {
        match self {
            Level::Nominal => f64::from(u8::from(a != b)),
            Level::Ordinal => (f64::from(a) - f64::from(b)).powi(2),
        }
    }
}

/// Labels the two raters gave one unit; `None` when a rater skipped it.
pub type RatingPair = (Option<u32>, Option<u32>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alpha {
    pub value: f64,
    /// Units labelled by both raters.
    pub pairable: usize,
    /// Every pairable label was identical, so expected disagreement is zero
    /// and alpha is set to 1.
    pub degenerate: bool,
}

/// Alpha from the coincidence matrix. Each pairable unit adds one to
/// `o[a][b]` and one to `o[b][a]`.
pub fn krippendorff_alpha(pairs: &[RatingPair], level: Level) -> Result<Alpha, AgreementError> {
    let both: Vec<(u32, u32)> = pairs.iter().filter_map(|p| Some((p.0?, p.1?))).collect();
    alpha_of(&both, level)
}

fn alpha_of(both: &[(u32, u32)], level: Level) -> Result<Alpha, AgreementError> {
    if both.len() < 2 {
        return Err(AgreementError::TooFewUnits(both.len()));
    }
    let k = both.iter().map(|p| p.0.max(p.1)).max().expect("nonempty") as usize + 1;
    let mut o = vec![0.0; k * k];
    for &(a, b) in both {
        o[a as usize * k + b as usize] += 1.0;
        o[b as usize * k + a as usize] += 1.0;
    }
    let nc: Vec<f64> = (0..k).map(|c| o[c * k..(c + 1) * k].iter().sum()).collect();
    let n: f64 = nc.iter().sum();
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..k {
        for j in 0..k {
            let d = level.delta2(c as u32, j as u32);
            d_o += o[c * k + j] * d;
            d_e += nc[c] * nc[j] * d;
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        log::warn!("all labels identical; alpha set to 1");
        return Ok(Alpha { value: 1.0, pairable: both.len(), degenerate: true });
    }
    Ok(Alpha { value: 1.0 - d_o / d_e, pairable: both.len(), degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub point: f64,
    pub draws: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Indices of one unit-level resample; resample `index` draws from stream
/// `index` of `seed`.
pub fn resample_units(units: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..units).map(|_| rng.random_range(0..units)).collect()
}

/// Bootstrap over pairable units. Resamples run in parallel and the result
/// does not depend on the thread count.
pub fn bootstrap_alpha(
    pairs: &[RatingPair],
    level: Level,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapSummary, AgreementError> {
    let both: Vec<(u32, u32)> = pairs.iter().filter_map(|p| Some((p.0?, p.1?))).collect();
    let point = alpha_of(&both, level)?.value;
    if resamples == 0 {
        return Err(AgreementError::Config("resamples must be positive".into()));
    }
    let draws = crate::par::map_indexed(resamples, |b| {
        let idx = resample_units(both.len(), seed, b);
        let r: Vec<(u32, u32)> = idx.iter().map(|&i| both[i]).collect();
        alpha_of(&r, level).expect("resample keeps the unit count").value
    });
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        point,
        mean: mean(&draws),
        sd: if draws.len() > 1 { variance(&draws).sqrt() } else { 0.0 },
        q05: percentile_sorted(&sorted, 0.05),
        q50: percentile_sorted(&sorted, 0.5),
        q95: percentile_sorted(&sorted, 0.95),
        draws,
    })
}

/// Square table of counts: rows are rater 1's label, columns rater 2's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgreementMatrix {
    pub labels: Vec<String>,
    /// Row-major, `labels.len()` squared.
    pub counts: Vec<u64>,
}

impl AgreementMatrix {
    pub fn new(labels: Vec<String>, counts: Vec<u64>) -> Result<Self, AgreementError> {
        if labels.is_empty() || counts.len() != labels.len() * labels.len() {
            return Err(AgreementError::NotSquare);
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(AgreementError::EmptyMatrix);
        }
        Ok(AgreementMatrix { labels, counts })
    }

    pub fn levels(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels() + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Tabulates pairable units.
    pub fn from_pairs(labels: Vec<String>, pairs: &[RatingPair]) -> Result<Self, AgreementError> {
        let l = labels.len();
        let mut counts = vec![0; l * l];
        for &(a, b) in pairs {
            if let (Some(a), Some(b)) = (a, b) {
                if a as usize >= l || b as usize >= l {
                    return Err(AgreementError::NotSquare);
                }
                counts[a as usize * l + b as usize] += 1;
            }
        }
        Self::new(labels, counts)
    }

    /// One pair per counted unit, row-major.
    pub fn to_pairs(&self) -> Vec<RatingPair> {
        let l = self.levels();
        let mut out = Vec::with_capacity(self.total() as usize);
        for i in 0..l {
            for j in 0..l {
                for _ in 0..self.get(i, j) {
                    out.push((Some(i as u32), Some(j as u32)));
                }
            }
        }
        out
    }

    /// The 2020-vote table between human and model labels used in the
    /// application.
    pub fn vote_2020_example() -> Self {
        let labels = ["D", "G", "L", "R", "stay home"].map(String::from).to_vec();
        #[rustfmt::skip]
        let counts = vec![
            1906, 3, 4, 50, 234,
            3, 5, 0, 0, 0,
            0, 0, 7, 0, 2,
            40, 0, 6, 864, 59,
            185, 2, 1, 95, 71,
        ];
        Self::new(labels, counts).expect("valid table")
    }
}

/// Reads a matrix CSV: header `label,<l1>,...,<lL>`, then one row per rater-1
/// label in the same order.
pub fn load_matrix(path: &Path) -> Result<AgreementMatrix, AgreementError> {
    let mut rdr = csv::Reader::from_path(path).map_err(io_err(path))?;
    let labels: Vec<String> =
        rdr.headers().map_err(io_err(path))?.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut counts = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(io_err(path))?;
        let line = i + 2;
        if rec.get(0).map(str::trim) != labels.get(i).map(String::as_str) {
            return Err(AgreementError::Parse { line, msg: "row labels must follow the header order".into() });
        }
        for f in rec.iter().skip(1) {
            counts.push(
                f.trim()
                    .parse::<u64>()
                    .map_err(|e| AgreementError::Parse { line, msg: format!("count '{f}': {e}") })?,
            );
        }
    }
    AgreementMatrix::new(labels, counts)
}

pub fn write_matrix(path: &Path, m: &AgreementMatrix) -> Result<(), AgreementError> {
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    let mut header = vec!["label".to_string()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header).map_err(io_err(path))?;
    for (i, l) in m.labels.iter().enumerate() {
        let mut row = vec![l.clone()];
        row.extend((0..m.levels()).map(|j| m.get(i, j).to_string()));
        w.write_record(&row).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Deserialize)]
pub struct RatingRow {
    pub unit: String,
    pub rater: String,
    pub variable: String,
    pub label: String,
}

/// Long ratings table (unit, rater, variable, label).
#[derive(Debug, Clone, Default)]
pub struct Ratings {
    pub rows: Vec<RatingRow>,
}

fn numeric_aware(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

impl Ratings {
    pub fn load(path: &Path) -> Result<Self, AgreementError> {
        let mut rdr = csv::Reader::from_path(path).map_err(io_err(path))?;
        let rows = rdr
            .deserialize()
            .enumerate()
            .map(|(i, r)| r.map_err(|e: csv::Error| AgreementError::Parse { line: i + 2, msg: e.to_string() }))
            .collect::<Result<Vec<RatingRow>, _>>()?;
        Ok(Ratings { rows })
    }

    pub fn variables(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.variable.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn raters(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.rater.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Pairs for one variable and two raters, over every unit either rater
    /// labelled. Labels are indexed in `order` when given, otherwise sorted
    /// numerically when all parse as numbers and lexically if not. Empty
    /// labels count as missing.
    pub fn pairs(
        &self,
        variable: &str,
        rater_a: &str,
        rater_b: &str,
        order: Option<&[String]>,
    ) -> Result<(Vec<String>, Vec<RatingPair>), AgreementError> {
        let rows: Vec<&RatingRow> = self.rows.iter().filter(|r| r.variable == variable).collect();
        for rater in [rater_a, rater_b] {
            if !rows.iter().any(|r| r.rater == rater) {
                return Err(AgreementError::MissingRater { variable: variable.into(), rater: rater.into() });
            }
        }
        let labels: Vec<String> = match order {
            Some(o) => o.to_vec(),
            None => {
                let mut v: Vec<String> = rows
                    .iter()
                    .filter(|r| !r.label.is_empty() && (r.rater == rater_a || r.rater == rater_b))
                    .map(|r| r.label.clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                v.sort_by(|a, b| numeric_aware(a, b));
                v
            }
        };
        let mut units: BTreeMap<&str, RatingPair> = BTreeMap::new();
        for r in rows {
            let slot = if r.rater == rater_a {
                0
            } else if r.rater == rater_b {
                1
            } else {
                continue;
            };
            let e = units.entry(&r.unit).or_default();
            if r.label.is_empty() {
                continue;
            }
            let idx = labels.iter().position(|l| *l == r.label).ok_or_else(|| AgreementError::Parse {
                line: 0,
                msg: format!("label '{}' not in the given order", r.label),
            })? as u32;
            if slot == 0 {
                e.0 = Some(idx)
            } else {
                e.1 = Some(idx)
            }
        }
        Ok((labels, units.into_values().collect()))
    }
}
