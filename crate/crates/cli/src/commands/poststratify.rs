use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mrp_core::frame::load_frame;
use mrp_core::model::ModelSpec;
use mrp_core::poststrat::{aggregate, estimate_rows, normalize_turnout, predict_cells, write_estimates, CellPosterior};
use mrp_core::sampler::read_draws;
use serde::{Deserialize, Serialize};

use super::fit::{FitIndex, INDEX};
use super::{load_schema, split_list, ModelInputs};
use crate::config::{require_exists, required, resolve};
use crate::manifest::{beside, guard_outputs, write_manifest};
use crate::Usage;

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct Args {
    /// Output directory of `fit`.
    #[arg(long)]
    pub fit_dir: Option<PathBuf>,
    #[arg(long)]
    pub frame: Option<PathBuf>,
    /// Attributes to aggregate over, comma separated; `day` expands over
    /// every campaign day. Empty or `all` for the whole population.
    #[arg(long)]
    pub margin: Option<String>,
    /// Day (1-based) to predict at when the margin has no day; the last day
    /// when absent.
    #[arg(long)]
    pub day: Option<u32>,
    /// Choices to renormalize over (turnout-normalized shares).
    #[arg(long)]
    pub parties: Option<String>,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: ModelInputs,
}

pub fn run(flags: &Args, config: Option<&Path>) -> Result<()> {
    let a = resolve(flags, config)?;
    let fit_dir = required(&a.fit_dir, "fit-dir")?;
    let frame_path = required(&a.frame, "frame")?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("estimates.csv"));
    let index_path = fit_dir.join(INDEX);
    let mut inputs = vec![index_path.clone(), frame_path.clone()];
    inputs.extend(a.inputs.paths());
    require_exists(&inputs)?;

    let schema = load_schema(a.inputs.schema.as_deref())?;
    let frame = load_frame(&frame_path, &schema)?;
    let cov = a.inputs.covariates(&schema)?;
    let index: FitIndex = serde_json::from_str(&std::fs::read_to_string(&index_path)?)
        .with_context(|| format!("parsing {}", index_path.display()))?;
    let mut fits = Vec::new();
    for e in &index.fits {
        let spec_path = fit_dir.join(&e.spec);
        let spec: ModelSpec = serde_json::from_str(&std::fs::read_to_string(&spec_path)?)
            .with_context(|| format!("parsing {}", spec_path.display()))?;
        let stem = fit_dir.join(&e.draws);
        inputs.extend([spec_path, stem.with_extension("csv"), stem.with_extension("json")]);
        fits.push((spec, read_draws(&stem)?));
    }
    guard_outputs(&inputs, std::slice::from_ref(&out))?;

    let margin_raw = a.margin.clone().unwrap_or_else(|| "state".into());
    let mut margin = split_list(&margin_raw);
    if margin == ["all"] {
        margin.clear();
    }
    let by_day = margin.iter().any(|m| m == "day");
    margin.retain(|m| m != "day");
    let days = schema.day.as_ref().map(|d| d.count);
    let day_list: Vec<Option<u32>> = match (days, by_day) {
        (None, true) => return Err(Usage("margin has 'day' but the schema has no days".into()).into()),
        (None, false) => vec![None],
        (Some(n), true) => (0..n as u32).map(Some).collect(),
        (Some(n), false) => {
            let d = a.day.unwrap_or(n as u32);
            if d == 0 || d as usize > n {
                return Err(Usage(format!("--day must lie in 1..={n}")).into());
            }
            vec![Some(d - 1)]
        }
    };
    let parties = a.parties.as_deref().map(split_list);
    let margin_refs: Vec<&str> = margin.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for day in day_list {
        let parts = fits
            .iter()
            .map(|(spec, draws)| predict_cells(spec, draws, &schema, &frame, &cov, day))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cp = CellPosterior::stack(parts)?;
        if let Some(p) = &parties {
            cp = normalize_turnout(&cp, p)?;
        }
        let md = aggregate(&cp, &frame, &schema, &margin_refs)?;
        let mut r = estimate_rows(&md, &schema);
        if by_day {
            for row in &mut r {
                row.margin = format!("{}+day", row.margin);
            }
        }
        rows.extend(r);
    }
    write_estimates(&out, &rows)?;
    write_manifest(&beside(&out), "poststratify", &a, None, &inputs, std::slice::from_ref(&out))?;
    println!("{} estimate rows written to {}", rows.len(), out.display());
    Ok(())
}
