//! Adaptive no-U-turn Hamiltonian Monte Carlo over several chains.
//!
//! Chain `c` draws from a ChaCha8 stream seeded by the run seed with stream
//! id `c`, so retained draws do not depend on how chains are scheduled.

mod adapt;
mod diagnostics;
mod io;
mod nuts;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Block;
use crate::par;

pub use adapt::{DualAveraging, VarianceEstimator, WarmupSchedule};
pub use diagnostics::{diagnostics, ess, split_rhat, BlockSummary, ScalarSummary, Summary};
pub use io::{read_draws, write_draws, DrawsSidecar};
pub use nuts::{initial_step, leapfrog, transition, Point, TransitionStats};

/// A differentiable log density. Implementations are evaluated from several
/// threads at once.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Overwrites `grad` with the gradient and returns the log density.
    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("chain {chain}: no finite starting point found")]
    NoFiniteStart { chain: usize },
    #[error("chain {chain}: all {warmup} warmup transitions diverged (final step size {step:e})")]
    AllDivergent { chain: usize, warmup: usize, step: f64 },
    #[error("initial point has length {got}, target has dimension {expected}")]
    InitLength { expected: usize, got: usize },
    #[error("draw file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_depth: usize,
    pub seed: u64,
    /// Sd of the random initial point around 0.
    pub init_sd: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 8,
            iterations: 500,
            warmup: 250,
            thin: 4,
            target_accept: 0.8,
            max_depth: 10,
            seed: 1,
            init_sd: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.into()));
        if self.chains == 0 {
            return bad("chains must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.warmup >= self.iterations {
            return bad("warmup must be smaller than iterations");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target acceptance must lie in (0, 1)");
        }
        if self.max_depth == 0 {
            return bad("max tree depth must be at least 1");
        }
        if !(self.init_sd >= 0.0) {
            return bad("init sd must be nonnegative");
        }
        Ok(())
    }

    /// `ceil((iterations - warmup) / thin)`.
    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.warmup).div_ceil(self.thin)
    }

    pub fn retained(&self) -> usize {
        self.chains * self.retained_per_chain()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub warmup_divergences: usize,
    pub divergences: usize,
    pub mean_accept: f64,
    pub mean_depth: f64,
    pub leapfrogs: usize,
}

/// Retained draws, chain-major: all draws of chain 0, then chain 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub blocks: Vec<Block>,
    /// Row-major `[draw][dim]`.
    pub values: Vec<f64>,
    pub chain: Vec<usize>,
    /// Post-warmup iteration index of each draw (0-based).
    pub iteration: Vec<usize>,
    pub chain_stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn chains(&self) -> usize {
        self.chain_stats.len()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.values[i * self.dim() + j]).collect()
    }

    pub fn chain_columns(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.chains()];
        for i in 0..self.len() {
            out[self.chain[i]].push(self.values[i * self.dim() + j]);
        }
        out
    }

    /// Divergent transitions after warmup, over all chains.
    pub fn divergences(&self) -> usize {
        self.chain_stats.iter().map(|c| c.divergences).sum()
    }

    pub fn with_names(mut self, names: Vec<String>, blocks: Vec<Block>) -> Self {
        assert_eq!(names.len(), self.dim());
        self.names = names;
        self.blocks = blocks;
        self
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    stats: ChainStats,
}

fn random_start<T: LogDensity + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Point, SamplerError> {
    let normal = Normal::new(0.0, cfg.init_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    for _ in 0..100 {
        let q: Vec<f64> = (0..target.dim()).map(|_| normal.sample(rng)).collect();
        let z = Point::at(target, q);
        if z.lp.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
    }
    Err(SamplerError::NoFiniteStart { chain })
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    chain: usize,
    init: Option<&[f64]>,
) -> Result<ChainOutput, SamplerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let dim = target.dim();
    let mut z = match init {
        Some(q) => {
            let z = Point::at(target, q.to_vec());
            if !z.lp.is_finite() {
                return Err(SamplerError::NoFiniteStart { chain });
            }
            z
        }
        None => random_start(target, cfg, chain, &mut rng)?,
    };

    let mut minv = vec![1.0; dim];
    let mut step = initial_step(target, &z, 1.0, &minv, &mut rng);
    let mut da = DualAveraging::new(step, cfg.target_accept);
    let schedule = WarmupSchedule::new(cfg.warmup);
    let mut var = VarianceEstimator::new(dim);
    let mut stats = ChainStats::default();
    let mut draws = Vec::with_capacity(cfg.retained_per_chain());
    let mut accept_sum = 0.0;
    let mut depth_sum = 0.0;

    for it in 0..cfg.iterations {
        let (next, t) = nuts::transition(target, &z, step, &minv, cfg.max_depth, &mut rng);
        z = next;
        stats.leapfrogs += t.leapfrogs;
        if it < cfg.warmup {
            if t.divergent {
                stats.warmup_divergences += 1;
            }
            step = da.update(t.accept_stat);
            if schedule.in_window(it) {
                var.add(&z.q);
            }
            if schedule.closes_window(it) {
                minv = var.regularized();
                var = VarianceEstimator::new(dim);
                step = initial_step(target, &z, step, &minv, &mut rng);
                da.restart(step);
            }
            if it + 1 == cfg.warmup {
                step = da.final_step();
            }
        } else {
            if t.divergent {
                stats.divergences += 1;
            }
            accept_sum += t.accept_stat;
            depth_sum += t.depth as f64;
            if (it - cfg.warmup) % cfg.thin == 0 {
                draws.push(z.q.clone());
            }
        }
    }
    if cfg.warmup > 0 && stats.warmup_divergences == cfg.warmup {
        return Err(SamplerError::AllDivergent { chain, warmup: cfg.warmup, step });
    }
    let kept = (cfg.iterations - cfg.warmup) as f64;
    stats.mean_accept = accept_sum / kept;
    stats.mean_depth = depth_sum / kept;
    stats.step_size = step;
    stats.inv_mass = minv;
    Ok(ChainOutput { draws, stats })
}

/// Runs `cfg.chains` chains (in parallel when enabled) from random starts.
pub fn run_chains<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorDraws, SamplerError> {
    run_chains_from(target, cfg, None)
}

/// As [`run_chains`], optionally starting every chain at `init`.
pub fn run_chains_from<T: LogDensity + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    init: Option<&[f64]>,
) -> Result<PosteriorDraws, SamplerError> {
    cfg.validate()?;
    let dim = target.dim();
    if let Some(q) = init {
        if q.len() != dim {
            return Err(SamplerError::InitLength { expected: dim, got: q.len() });
        }
    }
    let outputs = par::map_indexed(cfg.chains, |c| run_chain(target, cfg, c, init));
    let mut values = Vec::with_capacity(cfg.retained() * dim);
    let mut chain = Vec::new();
    let mut iteration = Vec::new();
    let mut chain_stats = Vec::new();
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        for (k, d) in out.draws.into_iter().enumerate() {
            values.extend(d);
            chain.push(c);
            iteration.push(k * cfg.thin);
        }
        chain_stats.push(out.stats);
    }
    Ok(PosteriorDraws {
        names: (1..=dim).map(|i| format!("q[{i}]")).collect(),
        blocks: vec![Block { name: "q".into(), start: 0, len: dim }],
        values,
        chain,
        iteration,
        chain_stats,
    })
}
