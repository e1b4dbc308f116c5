//! Synthetic populations: correlated latent covariates cut into ordinal
//! levels, areas from a symmetric Dirichlet, and choices from a softmax with
//! a spatially structured area effect.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::frame::{AdjacencyGraph, Attribute, Cell, CovariateTables, Respondent, Schema, StratificationFrame};

/// Levels per latent covariate (three cutoffs give four levels).
pub const LATENT_LEVELS: usize = 4;
pub const LATENT_COVARIATES: usize = 3;
const CELLS_PER_AREA: usize = LATENT_LEVELS * LATENT_LEVELS * LATENT_LEVELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub size: usize,
    pub choices: usize,
    pub areas: usize,
    pub cutoffs: [f64; 3],
    pub sar_candidates: usize,
    /// Drops every effect, leaving a uniform softmax.
    #[serde(default)]
    pub null_effects: bool,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            size: 1_000_000,
            choices: 3,
            areas: 51,
            cutoffs: [-1.0, 0.0, 1.0],
            sar_candidates: 1000,
            null_effects: false,
        }
    }
}

impl PopulationConfig {
    /// Smaller population used for desk-scale runs.
    pub fn desk() -> Self {
        PopulationConfig { size: 100_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.cutoffs[0] < self.cutoffs[1] && self.cutoffs[1] < self.cutoffs[2]) {
            return Err(SimError::Config("cutoffs must be strictly increasing".into()));
        }
        if self.sar_candidates == 0 {
            return Err(SimError::Config("SAR candidate count must be at least 1".into()));
        }
        if self.choices < 2 {
            return Err(SimError::Config("need at least two choices".into()));
        }
        if self.areas < 2 {
            return Err(SimError::Config("need at least two areas".into()));
        }
        if self.size == 0 {
            return Err(SimError::Config("population size must be positive".into()));
        }
        Ok(())
    }
}

/// Draws of the generating parameters, kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgpParameters {
    pub rho_x: f64,
    pub area_shares: Vec<f64>,
    /// `[choice]`
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub xi: Vec<f64>,
    /// `[choice][covariate][level]`
    pub gamma: Vec<Vec<Vec<f64>>>,
    /// `[choice][area]`
    pub spatial: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

/// A simulated population, stored as counts per (cell, choice).
#[derive(Debug, Clone)]
pub struct Population {
    pub schema: Schema,
    pub graph: AdjacencyGraph,
    pub params: DgpParameters,
    /// `[cell][choice]` with cells enumerated area-major over all level tuples.
    pub counts: Vec<u64>,
    /// `[cell][choice]` generating probabilities.
    pub probs: Vec<f64>,
    pub choices: usize,
}

impl Population {
    pub fn cell_count(&self) -> usize {
        self.counts.len() / self.choices
    }

    pub fn size(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn cell_levels(cell: usize) -> Vec<u32> {
        let area = cell / CELLS_PER_AREA;
        let r = cell % CELLS_PER_AREA;
        vec![
            area as u32,
            (r / (LATENT_LEVELS * LATENT_LEVELS)) as u32,
            ((r / LATENT_LEVELS) % LATENT_LEVELS) as u32,
            (r % LATENT_LEVELS) as u32,
        ]
    }

    pub fn cell_weight(&self, cell: usize) -> u64 {
        self.counts[cell * self.choices..(cell + 1) * self.choices].iter().sum()
    }

    /// Populated cells, in cell order. The second value maps frame rows back
    /// to population cells.
    pub fn frame(&self) -> Result<(StratificationFrame, Vec<usize>), SimError> {
        let mut cells = Vec::new();
        let mut map = Vec::new();
        for c in 0..self.cell_count() {
            let w = self.cell_weight(c);
            if w > 0 {
                cells.push(Cell { levels: Self::cell_levels(c), weight: w as f64 });
                map.push(c);
            }
        }
        Ok((StratificationFrame::new(&self.schema, cells)?, map))
    }

    pub fn covariates(&self) -> Result<CovariateTables, SimError> {
        let rows = self.params.z.iter().map(|&z| vec![z]).collect();
        Ok(CovariateTables::new(&self.schema, rows, vec![], vec![])?)
    }

    /// Realized share of each choice.
    pub fn prevalence(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.choices];
        for (g, &c) in self.counts.iter().enumerate() {
            s[g % self.choices] += c as f64;
        }
        let n = self.size() as f64;
        s.iter().map(|v| v / n).collect()
    }

    /// Weighted generating probability of each choice per area, using cell
    /// population counts as weights. `[area][choice]`.
    pub fn area_truth(&self) -> Vec<Vec<f64>> {
        let areas = self.params.z.len();
        let mut num = vec![vec![0.0; self.choices]; areas];
        let mut den = vec![0.0; areas];
        for c in 0..self.cell_count() {
            let w = self.cell_weight(c) as f64;
            let a = c / CELLS_PER_AREA;
            den[a] += w;
            for j in 0..self.choices {
                num[a][j] += w * self.probs[c * self.choices + j];
            }
        }
        num.into_iter().zip(den).map(|(row, d)| row.into_iter().map(|v| v / d).collect()).collect()
    }

    pub fn respondents(&self, draws: &[(usize, usize)]) -> Vec<Respondent> {
        draws.iter().map(|&(cell, choice)| Respondent { choice, levels: Self::cell_levels(cell), day: None }).collect()
    }
}

/// Schema of simulated populations: area plus three ordinal latent levels,
/// one area covariate `z`.
pub fn sim_schema(areas: usize, choices: usize) -> Schema {
    let mut attributes = vec![Attribute::new("area", areas, false)];
    for k in 1..=LATENT_COVARIATES {
        attributes.push(Attribute::new(&format!("u{k}"), LATENT_LEVELS, true));
    }
    Schema {
        attributes,
        area: "area".into(),
        day: None,
        state_covariates: vec!["z".into()],
        day_covariates: vec![],
        state_day_covariates: vec![],
        choices: (1..=choices).map(|j| format!("c{j}")).collect(),
        weight_column: "weight".into(),
        choice_column: "choice".into(),
    }
}

/// Global Moran's I with binary symmetric weights.
pub fn moran_i(values: &[f64], graph: &AdjacencyGraph) -> Result<f64, SimError> {
    let n = values.len();
    if n != graph.node_count() {
        return Err(SimError::Config(format!("{n} values for a graph with {} nodes", graph.node_count())));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    if !(ss > 0.0) {
        return Err(SimError::ZeroVariance);
    }
    let s0 = 2.0 * graph.edges().len() as f64;
    if s0 == 0.0 {
        return Err(SimError::Config("graph has no edges".into()));
    }
    let cross: f64 = graph.edges().iter().map(|&(a, b)| 2.0 * dev[a] * dev[b]).sum();
    Ok(n as f64 / s0 * cross / ss)
}

/// One SAR field `(I - lambda W)^-1 eps` with row-normalized `W`, or `None`
/// when the system is singular.
pub fn sar_field(graph: &AdjacencyGraph, lambda: f64, eps: &[f64]) -> Option<Vec<f64>> {
    let n = graph.node_count();
    let deg = graph.degrees();
    let mut m = DMatrix::<f64>::identity(n, n);
    for &(a, b) in graph.edges() {
        m[(a, b)] -= lambda / deg[a] as f64;
        m[(b, a)] -= lambda / deg[b] as f64;
    }
    m.lu().solve(&DVector::from_column_slice(eps)).map(|v| v.as_slice().to_vec())
}

/// The candidate with the largest Moran's I among `candidates` SAR fields
/// with `lambda ~ U(0, max_lambda)`.
pub fn sample_sar_psi<R: Rng + ?Sized>(
    graph: &AdjacencyGraph,
    candidates: usize,
    max_lambda: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), SimError> {
    let n = graph.node_count();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let lam = Uniform::new(0.0, max_lambda.max(f64::MIN_POSITIVE)).expect("valid range");
    for _ in 0..candidates {
        let (field, i) = loop {
            let lambda = if max_lambda > 0.0 { lam.sample(rng) } else { 0.0 };
            let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            if let Some(f) = sar_field(graph, lambda, &eps) {
                if let Ok(i) = moran_i(&f, graph) {
                    break (f, i);
                }
            }
        };
        if best.as_ref().is_none_or(|b| i > b.1) {
            best = Some((field, i));
        }
    }
    best.ok_or_else(|| SimError::Config("no SAR candidates".into()))
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - m) / sd } else { 0.0 };
    }
}

/// Random geometric graph: uniform points in the unit square, each joined
/// to its `k` nearest neighbours (symmetrized).
pub fn random_planar_graph<R: Rng + ?Sized>(nodes: usize, k: usize, rng: &mut R) -> AdjacencyGraph {
    let pts: Vec<(f64, f64)> = (0..nodes).map(|_| (rng.random(), rng.random())).collect();
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..nodes {
        let mut d: Vec<(f64, usize)> = (0..nodes)
            .filter(|&j| j != i)
            .map(|j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, j) in d.iter().take(k) {
            edges.insert((i.min(j) + 1, i.max(j) + 1));
        }
    }
    let pairs: Vec<(usize, usize)> = edges.into_iter().collect();
    AdjacencyGraph::from_edges(nodes, &pairs).expect("valid generated edges")
}

fn level(x: f64, cutoffs: &[f64; 3]) -> usize {
    cutoffs.iter().take_while(|&&c| x >= c).count()
}

/// Draws a population.
pub fn gen_population<R: Rng + ?Sized>(
    cfg: &PopulationConfig,
    graph: &AdjacencyGraph,
    rng: &mut R,
) -> Result<Population, SimError> {
    cfg.validate()?;
    if graph.node_count() != cfg.areas {
        return Err(SimError::Config(format!(
            "graph has {} nodes, config has {} areas",
            graph.node_count(),
            cfg.areas
        )));
    }
    let (l, j) = (cfg.areas, cfg.choices);
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };

    let rho_x: f64 = rng.random();
    let gamma_draws: Vec<f64> = (0..l).map(|_| rng.sample(Exp1)).collect();
    let total: f64 = gamma_draws.iter().sum();
    let area_shares: Vec<f64> = gamma_draws.iter().map(|g| g / total).collect();

    let z: Vec<f64> = (0..l).map(|_| normal(rng)).collect();
    let mut alpha = Vec::with_capacity(j);
    let mut beta = Vec::with_capacity(j);
    let mut xi = Vec::with_capacity(j);
    let mut gamma = Vec::with_capacity(j);
    let mut spatial = Vec::with_capacity(j);
    for _ in 0..j {
        alpha.push(normal(rng));
        beta.push(rng.random_range(-1.0..1.0));
        gamma.push(
            (0..LATENT_COVARIATES)
                .map(|_| (0..LATENT_LEVELS).map(|_| normal(rng)).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
        let phi: Vec<f64> = (0..l).map(|_| normal(rng)).collect();
        let (mut psi, _) = sample_sar_psi(graph, cfg.sar_candidates, 0.99, rng)?;
        standardize(&mut psi);
        let x: f64 = rng.random();
        xi.push(x);
        spatial.push((0..l).map(|a| (1.0 - x).sqrt() * phi[a] + x.sqrt() * psi[a]).collect::<Vec<f64>>());
    }

    let cells = l * CELLS_PER_AREA;
    let mut probs = vec![0.0; cells * j];
    for c in 0..cells {
        let lv = Population::cell_levels(c);
        let a = lv[0] as usize;
        let eta: Vec<f64> = (0..j)
            .map(|k| {
                if cfg.null_effects {
                    return 0.0;
                }
                alpha[k]
                    + (0..LATENT_COVARIATES).map(|u| gamma[k][u][lv[u + 1] as usize]).sum::<f64>()
                    + spatial[k][a]
                    + beta[k] * z[a]
            })
            .collect();
        let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = eta.iter().map(|e| (e - m).exp()).sum();
        for k in 0..j {
            probs[c * j + k] = (eta[k] - m).exp() / s;
        }
    }

    let mut cum_area = area_shares.clone();
    for i in 1..l {
        cum_area[i] += cum_area[i - 1];
    }
    let pick = |cum: &[f64], u: f64| cum.partition_point(|&c| c <= u).min(cum.len() - 1);
    let (sr, sn) = (rho_x.sqrt(), (1.0 - rho_x).sqrt());
    let mut counts = vec![0u64; cells * j];
    for _ in 0..cfg.size {
        let a = pick(&cum_area, rng.random::<f64>() * cum_area[l - 1]);
        let shared = normal(rng);
        let mut cell = a * CELLS_PER_AREA;
        let mut stride = LATENT_LEVELS * LATENT_LEVELS;
        for _ in 0..LATENT_COVARIATES {
            let x = sr * shared + sn * normal(rng);
            cell += level(x, &cfg.cutoffs) * stride;
            stride /= LATENT_LEVELS;
        }
        let u: f64 = rng.random();
        let p = &probs[cell * j..(cell + 1) * j];
        let mut acc = 0.0;
        let mut choice = j - 1;
        for (k, &pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                choice = k;
                break;
            }
        }
        counts[cell * j + choice] += 1;
    }

    Ok(Population {
        schema: sim_schema(l, j),
        graph: graph.clone(),
        params: DgpParameters { rho_x, area_shares, alpha, beta, xi, gamma, spatial, z },
        counts,
        probs,
        choices: j,
    })
}
