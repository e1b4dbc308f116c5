use std::path::{Path, PathBuf};

use anyhow::Result;
use mrp_core::frame::{load_adjacency, AdjacencyGraph};
use mrp_core::simstudy::{
    run_study, stimulus_sweeps, summarize_study, write_report, write_scenarios, write_summary, write_sweeps,
    PopulationConfig, ScenarioSpec, SimConfig,
};
use serde::{Deserialize, Serialize};

use super::{create_dir, split_list, SamplerArgs};
use crate::config::{require_exists, required, resolve};
use crate::manifest::write_manifest;
use crate::{Numeric, Usage};

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct Args {
    /// Scenario ids, e.g. S.0,S.4,S.8.
    #[arg(long)]
    pub scenarios: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `desk` (1e5 individuals, default) or `full` (1e6).
    #[arg(long)]
    pub scale: Option<String>,
    /// Overrides the population size of the chosen scale.
    #[arg(long)]
    pub population_size: Option<usize>,
    /// Sample size per replicate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Penalty dispersion as a fraction of its bound.
    #[arg(long)]
    pub selection_fraction: Option<f64>,
    /// Fixed penalty means per choice, comma separated.
    #[arg(long)]
    pub selection_mu: Option<String>,
    /// Candidate SAR draws per population when searching for high Moran's I.
    #[arg(long)]
    pub sar_candidates: Option<usize>,
    /// Edge list over areas; US states when absent.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// Equal-width bins for the stimulus sweeps.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
}

pub fn study_config(a: &Args) -> Result<SimConfig> {
    let seed = required(&a.seed, "seed")?;
    let mut cfg = match a.scale.as_deref().unwrap_or("desk") {
        "desk" => SimConfig::desk(),
        "full" => SimConfig::full(),
        other => return Err(Usage(format!("unknown scale '{other}'; use desk or full")).into()),
    };
    cfg.seed = seed;
    cfg.population = PopulationConfig {
        size: a.population_size.unwrap_or(cfg.population.size),
        sar_candidates: a.sar_candidates.unwrap_or(cfg.population.sar_candidates),
        ..cfg.population
    };
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(f) = a.selection_fraction {
        cfg.selection_fraction = f;
    }
    if let Some(m) = &a.selection_mu {
        let v = split_list(m)
            .iter()
            .map(|x| x.parse::<f64>().map_err(|_| Usage(format!("bad selection mean '{x}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        cfg.selection_mu = Some(v);
    }
    cfg.sampler = a.sampler.config(seed)?;
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(flags: &Args, config: Option<&Path>) -> Result<()> {
    let a = resolve(flags, config)?;
    require_exists(a.adjacency.iter())?;
    let scenarios =
        ScenarioSpec::parse_list(a.scenarios.as_deref().unwrap_or("S.0,S.4,S.8")).map_err(|e| Usage(e.to_string()))?;
    let cfg = study_config(&a)?;
    let graph = match &a.adjacency {
        Some(p) => load_adjacency(p, cfg.population.areas)?,
        None => AdjacencyGraph::us_states(),
    };
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("simulate-out"));
    create_dir(&out)?;

    let reports = run_study(&cfg, &graph, &scenarios)?;
    let flagged = reports.iter().filter(|r| r.flagged).count();
    if flagged == reports.len() {
        return Err(Numeric(format!("every one of {flagged} scenario fits exceeded the divergence threshold")).into());
    }
    if flagged > 0 {
        log::warn!("{flagged} of {} scenario fits flagged for divergences", reports.len());
    }
    let report = out.join("simreport.csv");
    let summary = out.join("summary.csv");
    let sweeps = out.join("sweeps.csv");
    let fits = out.join("scenarios.csv");
    write_report(&report, &reports)?;
    write_scenarios(&fits, &reports)?;
    write_summary(&summary, &summarize_study(&reports))?;
    write_sweeps(&sweeps, &stimulus_sweeps(&reports, a.bins.unwrap_or(5)))?;
    let inputs: Vec<PathBuf> = a.adjacency.iter().cloned().collect();
    write_manifest(&out.join("manifest.json"), "simulate", &a, a.seed, &inputs, &[report, fits, summary, sweeps])?;
    println!("{} scenario reports written to {}", reports.len(), out.display());
    Ok(())
}
