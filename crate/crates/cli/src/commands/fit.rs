use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mrp_core::correction::load_prevalence;
use mrp_core::frame::{load_frame, load_survey};
use mrp_core::model::{Likelihood, ModelSpec, Observations, Posterior};
use mrp_core::sampler::{diagnostics, write_draws, Summary};
use serde::{Deserialize, Serialize};

use super::{create_dir, load_schema, ModelInputs, SamplerArgs};
use crate::config::{require_exists, required, resolve};
use crate::manifest::{guard_outputs, write_manifest};
use crate::Usage;

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct Args {
    #[arg(long)]
    pub survey: Option<PathBuf>,
    /// `bernoulli` (one fit per choice, default) or `multinomial`.
    #[arg(long)]
    pub family: Option<String>,
    /// Unstructured priors everywhere.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub unstructured: Option<bool>,
    /// Adds the selection offset per choice; needs --prevalence.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bias_correct: Option<bool>,
    /// Population prevalence per choice (choice,value[,source]).
    #[arg(long)]
    pub prevalence: Option<PathBuf>,
    /// Population size for the offset; the frame total weight when absent.
    #[arg(long)]
    pub population_size: Option<f64>,
    #[arg(long)]
    pub frame: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: ModelInputs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
}

/// Index of a fit directory, read back by poststratify.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitIndex {
    pub family: String,
    pub structured: bool,
    pub fits: Vec<FitEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitEntry {
    /// Choice label for a Bernoulli fit; empty for multinomial.
    pub choice: String,
    pub offset: f64,
    /// Relative to the fit directory.
    pub spec: String,
    pub draws: String,
}

pub const INDEX: &str = "fit.json";

fn file_stem(i: usize, label: &str) -> String {
    let clean: String = label.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("draws_{}_{clean}", i + 1)
}

pub fn run(flags: &Args, config: Option<&Path>) -> Result<()> {
    let a = resolve(flags, config)?;
    let survey_path = required(&a.survey, "survey")?;
    let seed = required(&a.seed, "seed")?;
    let bias_correct = a.bias_correct.unwrap_or(false);
    let mut inputs = vec![survey_path.clone()];
    inputs.extend(a.inputs.paths());
    inputs.extend(a.prevalence.iter().cloned());
    inputs.extend(a.frame.iter().cloned());
    require_exists(&inputs)?;
    if bias_correct && a.prevalence.is_none() {
        return Err(Usage("--bias-correct needs --prevalence".into()).into());
    }
    let family = a.family.clone().unwrap_or_else(|| "bernoulli".into());
    if family != "bernoulli" && family != "multinomial" {
        return Err(Usage(format!("unknown family '{family}'; use bernoulli or multinomial")).into());
    }
    if bias_correct && family == "multinomial" {
        return Err(Usage("the selection offset applies to the bernoulli family only".into()).into());
    }
    let sampler = a.sampler.config(seed)?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("fit-out"));
    create_dir(&out)?;
    guard_outputs(&inputs, &[out.join(INDEX)])?;

    let schema = load_schema(a.inputs.schema.as_deref())?;
    let survey = load_survey(&survey_path, &schema)?;
    for d in &survey.dropped {
        log::warn!("{}: line {} dropped: {}", survey_path.display(), d.line, d.reason);
    }
    let cov = a.inputs.covariates(&schema)?;
    let structured = !a.unstructured.unwrap_or(false);
    let graph = if structured { Some(a.inputs.graph(&schema)?) } else { None };

    let j = schema.choices.len();
    let offsets = if bias_correct {
        let table = load_prevalence(a.prevalence.as_ref().expect("checked"), &schema.choices)?;
        let population = match (a.population_size, &a.frame) {
            (Some(n), _) => n,
            (None, Some(f)) => load_frame(f, &schema)?.total_weight(),
            (None, None) => return Err(Usage("--bias-correct needs --population-size or --frame".into()).into()),
        };
        let counts: Vec<f64> = survey.choice_counts(j).iter().map(|&c| c as f64).collect();
        table.offsets(&schema.choices, &counts, population)?
    } else {
        vec![0.0; j]
    };

    let mut base = ModelSpec::from_schema(&schema, graph.as_ref(), Likelihood::Multinomial, structured)?;
    base.fit_standardization(&schema, &survey, &cov)?;
    let specs: Vec<(String, ModelSpec)> = if family == "multinomial" {
        vec![(String::new(), base)]
    } else {
        (0..j)
            .map(|c| Ok((schema.choices[c].clone(), base.for_choice(c)?.with_offset(offsets[c])?)))
            .collect::<Result<_>>()?
    };
    let obs = Observations::build(&specs[0].1, &schema, &survey, &cov)?;

    let results = mrp_core::par::map_indexed(specs.len(), |i| -> Result<(PathBuf, PathBuf, Summary)> {
        let (label, spec) = &specs[i];
        let draws = Posterior::new(spec, &obs)?.sample(&sampler)?;
        let stem = if label.is_empty() { "draws".to_string() } else { file_stem(i, label) };
        write_draws(&draws, &out.join(&stem))?;
        let spec_path = out.join(format!("{stem}.spec.json"));
        std::fs::write(&spec_path, serde_json::to_string_pretty(spec)?)
            .with_context(|| format!("writing {}", spec_path.display()))?;
        Ok((out.join(stem), spec_path, diagnostics(&draws)))
    });
    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for ((label, spec), r) in specs.iter().zip(results) {
        let (stem, spec_path, summary) = r?;
        for w in &summary.warnings {
            log::warn!("{}: {w}", if label.is_empty() { "multinomial" } else { label });
        }
        entries.push(FitEntry {
            choice: label.clone(),
            offset: spec.offset(),
            spec: spec_path.file_name().expect("file").to_string_lossy().into_owned(),
            draws: stem.file_name().expect("file").to_string_lossy().into_owned(),
        });
        outputs.extend([stem.with_extension("csv"), stem.with_extension("json"), spec_path]);
        summaries.push(serde_json::json!({ "choice": label, "summary": summary }));
    }
    let index = FitIndex { family, structured, fits: entries };
    let index_path = out.join(INDEX);
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)? + "\n")?;
    let diag_path = out.join("diagnostics.json");
    std::fs::write(&diag_path, serde_json::to_string_pretty(&summaries)? + "\n")?;
    outputs.extend([index_path, diag_path]);
    write_manifest(&out.join("manifest.json"), "fit", &a, Some(seed), &inputs, &outputs)?;
    println!("{} fit(s) written to {}", index.fits.len(), out.display());
    Ok(())
}
