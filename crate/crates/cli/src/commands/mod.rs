pub mod agreement;
pub mod annotate;
pub mod fit;
pub mod poststratify;
pub mod simulate;
pub mod swing;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mrp_core::frame::{load_adjacency, load_covariates, AdjacencyGraph, CovariateTables, Schema};
use mrp_core::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};

use crate::Usage;

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// The application schema unless a JSON schema file is given.
pub fn load_schema(path: Option<&Path>) -> Result<Schema> {
    let s = match path {
        None => Schema::election_2020(),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing schema {}", p.display()))?
        }
    };
    s.validate()?;
    Ok(s)
}

/// Covariate and adjacency inputs shared by fit and poststratify.
#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelInputs {
    /// Schema JSON; defaults to the built-in 2020 election layout.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Area covariates (state.csv).
    #[arg(long)]
    pub state_covariates: Option<PathBuf>,
    /// Day covariates (day.csv).
    #[arg(long)]
    pub day_covariates: Option<PathBuf>,
    /// Area-by-day covariates (state_day.csv).
    #[arg(long)]
    pub state_day_covariates: Option<PathBuf>,
    /// Edge list over areas; the US state graph is used when absent and the
    /// area attribute has 51 levels.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
}

impl ModelInputs {
    pub fn paths(&self) -> Vec<PathBuf> {
        [&self.schema, &self.state_covariates, &self.day_covariates, &self.state_day_covariates, &self.adjacency]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }

    pub fn covariates(&self, schema: &Schema) -> Result<CovariateTables> {
        Ok(load_covariates(
            schema,
            self.state_covariates.as_deref(),
            self.day_covariates.as_deref(),
            self.state_day_covariates.as_deref(),
        )?)
    }

    pub fn graph(&self, schema: &Schema) -> Result<AdjacencyGraph> {
        let areas = schema.area_count();
        match &self.adjacency {
            Some(p) => Ok(load_adjacency(p, areas)?),
            None if areas == 51 => Ok(AdjacencyGraph::us_states()),
            None => Err(Usage(format!("--adjacency is required for a {areas}-area schema")).into()),
        }
    }
}

/// Sampler flags; unset values keep the library defaults.
#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct SamplerArgs {
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

impl SamplerArgs {
    pub fn config(&self, seed: u64) -> Result<SamplerConfig> {
        let d = SamplerConfig::default();
        let c = SamplerConfig {
            chains: self.chains.unwrap_or(d.chains),
            iterations: self.iterations.unwrap_or(d.iterations),
            warmup: self.warmup.unwrap_or(d.warmup),
            thin: self.thin.unwrap_or(d.thin),
            target_accept: self.target_accept.unwrap_or(d.target_accept),
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            seed,
            init_sd: d.init_sd,
        };
        c.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(c)
    }
}

/// Comma-separated list, trimmed, empties dropped.
pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}
