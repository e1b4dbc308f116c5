//! Simulation study: synthetic populations, random and online-selected
//! samples, the ten modeling scenarios, and their scores against the
//! simulated truth.

mod dgp;
mod metrics;
mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::{self, CorrectionError, SelectionConfig};
use crate::frame::{AdjacencyGraph, FrameError, StratificationFrame, SurveyDataset};
use crate::model::{Likelihood, ModelError, ModelSpec, Observations, Posterior};
use crate::par;
use crate::poststrat::{self, CellPosterior, PoststratError};
use crate::sampler::SamplerConfig;

pub use dgp::{
    gen_population, moran_i, random_planar_graph, sample_sar_psi, sar_field, sim_schema, DgpParameters, Population,
    PopulationConfig, LATENT_COVARIATES, LATENT_LEVELS,
};
pub use metrics::{score, stimulus_sweeps, Metric, Metrics, Stimulus, SweepRow};
pub use report::{summarize_study, write_report, write_scenarios, write_summary, write_sweeps, SummaryRow};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("zero variance")]
    ZeroVariance,
    #[error("unknown scenario '{0}'; valid ids are S.0 through S.9")]
    UnknownScenario(String),
    #[error("scenario combination not in the scenario table: {0}")]
    NotInTable(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error(transparent)]
    Poststrat(#[from] PoststratError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sampling {
    Random,
    Selected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Bernoulli,
    Multinomial,
}

/// One row of the scenario table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    id: u8,
    pub sampling: Sampling,
    pub family: Family,
    pub structured: bool,
    pub corrected: bool,
}

const TABLE: [(Sampling, Family, bool, bool); 10] = [
    (Sampling::Random, Family::Bernoulli, true, false),
    (Sampling::Random, Family::Bernoulli, false, false),
    (Sampling::Random, Family::Multinomial, true, false),
    (Sampling::Random, Family::Multinomial, false, false),
    (Sampling::Selected, Family::Bernoulli, true, false),
    (Sampling::Selected, Family::Bernoulli, false, false),
    (Sampling::Selected, Family::Multinomial, true, false),
    (Sampling::Selected, Family::Multinomial, false, false),
    (Sampling::Selected, Family::Bernoulli, true, true),
    (Sampling::Selected, Family::Bernoulli, false, true),
];

impl ScenarioSpec {
    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn label(&self) -> String {
        format!("S.{}", self.id)
    }

    pub fn get(id: u8) -> Result<Self, SimError> {
        let (sampling, family, structured, corrected) =
            *TABLE.get(id as usize).ok_or_else(|| SimError::UnknownScenario(format!("S.{id}")))?;
        Ok(ScenarioSpec { id, sampling, family, structured, corrected })
    }

    pub fn all() -> Vec<Self> {
        (0..TABLE.len() as u8).map(|i| Self::get(i).expect("in table")).collect()
    }

    /// Looks up a combination; only the ten tabled ones exist.
    pub fn new(sampling: Sampling, family: Family, structured: bool, corrected: bool) -> Result<Self, SimError> {
        TABLE
            .iter()
            .position(|&t| t == (sampling, family, structured, corrected))
            .map(|i| Self::get(i as u8).expect("in table"))
            .ok_or_else(|| {
                SimError::NotInTable(format!(
                    "{sampling:?} sampling, {family:?}, structured={structured}, corrected={corrected}"
                ))
            })
    }

    /// Accepts `S.4`, `s4` or `4`.
    pub fn parse(s: &str) -> Result<Self, SimError> {
        let t = s.trim();
        let digits = t
            .strip_prefix("S.")
            .or_else(|| t.strip_prefix("s."))
            .or_else(|| t.strip_prefix('S'))
            .or_else(|| t.strip_prefix('s'))
            .unwrap_or(t);
        digits
            .parse::<u8>()
            .ok()
            .filter(|&i| (i as usize) < TABLE.len())
            .map(|i| Self::get(i).expect("in table"))
            .ok_or_else(|| SimError::UnknownScenario(t.to_string()))
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>, SimError> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect()
    }
}

/// Full study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population: PopulationConfig,
    pub replicates: usize,
    /// Sample size per replicate.
    pub n: usize,
    pub seed: u64,
    /// Penalty dispersion as a fraction of its upper bound.
    pub selection_fraction: f64,
    /// Fixed penalty means; drawn from U(0,1) per replicate when absent.
    #[serde(default)]
    pub selection_mu: Option<Vec<f64>>,
    pub sampler: SamplerConfig,
    /// Share of retained draws that may diverge before a row is flagged.
    pub divergence_threshold: f64,
}

impl SimConfig {
    pub fn desk() -> Self {
        SimConfig {
            population: PopulationConfig::desk(),
            replicates: 10,
            n: 2000,
            seed: 1,
            selection_fraction: 0.5,
            selection_mu: None,
            sampler: SamplerConfig::default(),
            divergence_threshold: 0.05,
        }
    }

    pub fn full() -> Self {
        SimConfig { population: PopulationConfig::default(), replicates: 150, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.population.validate()?;
        if self.n == 0 || self.n as u64 > self.population.size as u64 {
            return Err(SimError::Config(format!("sample size {} must be in 1..={}", self.n, self.population.size)));
        }
        if !(self.selection_fraction >= 0.0 && self.selection_fraction < 1.0) {
            return Err(SimError::Config("selection fraction must be in [0, 1)".into()));
        }
        if let Some(mu) = &self.selection_mu {
            if mu.len() != self.population.choices {
                return Err(SimError::Config(format!(
                    "{} penalty means for {} choices",
                    mu.len(),
                    self.population.choices
                )));
            }
        }
        self.sampler.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Seed for a sub-task, mixed from the base seed with splitmix64.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

/// One replicate's population with both samples. Scenarios that share a
/// protocol share the sample.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: usize,
    pub population: Population,
    pub random: Vec<(usize, usize)>,
    pub selected: Vec<(usize, usize)>,
    pub selection_mu: Vec<f64>,
}

pub fn draw_replicate(cfg: &SimConfig, graph: &AdjacencyGraph, index: usize) -> Result<Replicate, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let population = gen_population(&cfg.population, graph, &mut rng)?;
    let j = population.choices;
    let random = correction::draw_simple_random_sample(&population.counts, j, cfg.n, &mut rng)?;
    let mu = match &cfg.selection_mu {
        Some(m) => m.clone(),
        None => {
            use rand::Rng;
            (0..j).map(|_| rng.random::<f64>()).collect()
        }
    };
    let sel = SelectionConfig::at_fraction_of_bound(mu.clone(), cfg.selection_fraction, cfg.n);
    let selected = correction::draw_online_selected_sample(&population.counts, j, &sel, &mut rng)?.respondents;
    Ok(Replicate { index, population, random, selected, selection_mu: mu })
}

/// Scores for one choice of one scenario fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceReport {
    pub choice: String,
    pub n: usize,
    /// Population share of the choice.
    pub prevalence: f64,
    pub sample_share: f64,
    /// Penalty mean, when the sample was selected.
    pub selection_mu: Option<f64>,
    /// Population share minus sample share.
    pub sample_prevalence_bias: f64,
    pub theta: Metrics,
    pub pi: Metrics,
}

impl ChoiceReport {
    pub fn stimulus(&self, s: Stimulus) -> Option<f64> {
        match s {
            Stimulus::SampleSize => Some(self.n as f64),
            Stimulus::Prevalence => Some(self.prevalence),
            Stimulus::SelectionMean => self.selection_mu,
            Stimulus::SamplePrevalenceBias => Some(self.sample_prevalence_bias),
        }
    }
}

/// Outcome of one scenario on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub replicate: usize,
    pub scenario: ScenarioSpec,
    pub choices: Vec<ChoiceReport>,
    pub divergences: usize,
    pub draws: usize,
    /// Divergences exceeded the configured share of draws.
    pub flagged: bool,
}

/// Cell-level posterior for the scenario's model on `sample`, one choice
/// block per modeled choice, plus the divergence count.
pub fn fit_scenario(
    population: &Population,
    frame: &StratificationFrame,
    sample: &[(usize, usize)],
    scenario: &ScenarioSpec,
    sampler: &SamplerConfig,
) -> Result<(CellPosterior, usize, usize), SimError> {
    let schema = &population.schema;
    let cov = population.covariates()?;
    let survey = SurveyDataset::new(population.respondents(sample))?;
    let graph = scenario.structured.then_some(&population.graph);
    let likelihood = match scenario.family {
        Family::Bernoulli => Likelihood::Bernoulli { choice: 0, offset: 0.0 },
        Family::Multinomial => Likelihood::Multinomial,
    };
    let mut base = ModelSpec::from_schema(schema, graph, likelihood, scenario.structured)?;
    base.fit_standardization(schema, &survey, &cov)?;
    let specs: Vec<ModelSpec> = match scenario.family {
        Family::Multinomial => vec![base],
        Family::Bernoulli => {
            let counts = survey.choice_counts(population.choices);
            let prevalence = population.prevalence();
            let size = population.size() as f64;
            let n = sample.len() as f64;
            (0..population.choices)
                .map(|j| {
                    let s = base.for_choice(j)?;
                    if !scenario.corrected {
                        return Ok(s);
                    }
                    let n1 = counts[j] as f64;
                    let t = correction::king_zeng_offset(&schema.choices[j], n1, n - n1, prevalence[j], size)?;
                    Ok(s.with_offset(t)?)
                })
                .collect::<Result<_, SimError>>()?
        }
    };
    let mut parts = Vec::with_capacity(specs.len());
    let (mut divergences, mut draws) = (0, 0);
    for (k, spec) in specs.iter().enumerate() {
        let obs = Observations::build(spec, schema, &survey, &cov)?;
        let post = Posterior::new(spec, &obs)?;
        let cfg = SamplerConfig { seed: derive_seed(sampler.seed, &[k as u64]), ..sampler.clone() };
        let d = post.sample(&cfg)?;
        divergences += d.divergences();
        draws += d.len();
        parts.push(poststrat::predict_cells(spec, &d, schema, frame, &cov, None)?);
    }
    Ok((CellPosterior::stack(parts)?, divergences, draws))
}

/// Scores area and cell estimates from a cell posterior against the truth.
pub fn score_cells(
    population: &Population,
    frame: &StratificationFrame,
    frame_cells: &[usize],
    cp: &CellPosterior,
) -> Result<Vec<(Metrics, Metrics)>, SimError> {
    let md = poststrat::aggregate(cp, frame, &population.schema, &["area"])?;
    let truth = population.area_truth();
    let j = population.choices;
    (0..j)
        .map(|k| {
            let theta_true: Vec<f64> = md.levels.iter().map(|l| truth[l[0] as usize][k]).collect();
            let theta_est: Vec<_> = (0..md.levels.len()).map(|l| poststrat::summarize(md.series(l, k))).collect();
            let pi_true: Vec<f64> = frame_cells.iter().map(|&c| population.probs[c * j + k]).collect();
            let mut buf = vec![0.0; cp.draws];
            let pi_est: Vec<_> = (0..cp.cells)
                .map(|m| {
                    for (d, b) in buf.iter_mut().enumerate() {
                        *b = cp.get(k, d, m);
                    }
                    poststrat::summarize(&buf)
                })
                .collect();
            Ok((score(&theta_true, &theta_est), score(&pi_true, &pi_est)))
        })
        .collect()
}

/// Fits and scores one scenario on one replicate.
pub fn run_scenario(
    rep: &Replicate,
    scenario: &ScenarioSpec,
    sampler: &SamplerConfig,
    divergence_threshold: f64,
) -> Result<ScenarioReport, SimError> {
    let pop = &rep.population;
    let (frame, frame_cells) = pop.frame()?;
    let sample = match scenario.sampling {
        Sampling::Random => &rep.random,
        Sampling::Selected => &rep.selected,
    };
    let cfg =
        SamplerConfig { seed: derive_seed(sampler.seed, &[rep.index as u64, scenario.id as u64]), ..sampler.clone() };
    let (cp, divergences, draws) = fit_scenario(pop, &frame, sample, scenario, &cfg)?;
    let scores = score_cells(pop, &frame, &frame_cells, &cp)?;
    let prevalence = pop.prevalence();
    let n = sample.len();
    let mut counts = vec![0usize; pop.choices];
    for &(_, c) in sample {
        counts[c] += 1;
    }
    let choices = scores
        .into_iter()
        .enumerate()
        .map(|(k, (theta, pi))| {
            let share = counts[k] as f64 / n as f64;
            ChoiceReport {
                choice: pop.schema.choices[k].clone(),
                n,
                prevalence: prevalence[k],
                sample_share: share,
                selection_mu: (scenario.sampling == Sampling::Selected).then(|| rep.selection_mu[k]),
                sample_prevalence_bias: prevalence[k] - share,
                theta,
                pi,
            }
        })
        .collect();
    let flagged = divergences as f64 > divergence_threshold * draws as f64;
    if flagged {
        log::warn!("replicate {} {}: {divergences} of {draws} draws diverged", rep.index, scenario.label());
    }
    Ok(ScenarioReport { replicate: rep.index, scenario: *scenario, choices, divergences, draws, flagged })
}

/// Every replicate against every listed scenario, ordered by
/// (replicate, scenario).
pub fn run_study(
    cfg: &SimConfig,
    graph: &AdjacencyGraph,
    scenarios: &[ScenarioSpec],
) -> Result<Vec<ScenarioReport>, SimError> {
    cfg.validate()?;
    let reps: Vec<Replicate> =
        par::map_indexed(cfg.replicates, |r| draw_replicate(cfg, graph, r)).into_iter().collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..reps.len()).flat_map(|r| (0..scenarios.len()).map(move |s| (r, s))).collect();
    par::map_slice(&jobs, |&(r, s)| run_scenario(&reps[r], &scenarios[s], &cfg.sampler, cfg.divergence_threshold))
        .into_iter()
        .collect()
}
