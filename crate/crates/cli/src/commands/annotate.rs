use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Result;
use mrp_core::annotate::{
    annotate_batch, load_users, to_survey, write_annotations, AnnotateConfig, FixtureTransport, Transport,
};
use mrp_core::frame::{write_survey, Schema};
use serde::{Deserialize, Serialize};

use super::create_dir;
use crate::config::{require_exists, required, resolve};
use crate::manifest::{guard_outputs, write_manifest};
use crate::Usage;

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct Args {
    /// users.csv: id, location, bio, tweets (JSON array), optional post_count
    /// and day.
    #[arg(long)]
    pub users: Option<PathBuf>,
    /// Recorded replies (user_id, kind, reply) served instead of an endpoint.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Chat-completion URL; needs the `live` build and MRP_API_KEY.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Posts per demographic prompt.
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    /// First retry delay in milliseconds; doubles per retry.
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for annotations.csv and survey.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn transport(a: &Args) -> Result<Box<dyn Transport>> {
    match (&a.fixtures, &a.endpoint) {
        (Some(_), Some(_)) => Err(Usage("give either --fixtures or --endpoint".into()).into()),
        (Some(f), None) => Ok(Box::new(FixtureTransport::load(f)?)),
        (None, Some(url)) => live(url, a.model.as_deref()),
        (None, None) => Err(Usage("--fixtures or --endpoint is required".into()).into()),
    }
}

#[cfg(feature = "live")]
fn live(url: &str, model: Option<&str>) -> Result<Box<dyn Transport>> {
    Ok(Box::new(crate::live::HttpTransport::from_env(url, model.unwrap_or("gpt-3.5-turbo"))?))
}

#[cfg(not(feature = "live"))]
fn live(_: &str, _: Option<&str>) -> Result<Box<dyn Transport>> {
    Err(Usage("this build has no HTTP transport; rebuild with --features live".into()).into())
}

pub fn run(flags: &Args, config: Option<&Path>) -> Result<()> {
    let a = resolve(flags, config)?;
    let users_path = required(&a.users, "users")?;
    let mut inputs = vec![users_path.clone()];
    inputs.extend(a.fixtures.iter().cloned());
    require_exists(&inputs)?;
    let d = AnnotateConfig::default();
    let cfg = AnnotateConfig {
        context: a.context.unwrap_or(d.context),
        concurrency: a.concurrency.unwrap_or(d.concurrency),
        max_attempts: a.max_attempts.unwrap_or(d.max_attempts),
        backoff: a.backoff_ms.map_or(d.backoff, Duration::from_millis),
        seed: a.seed.unwrap_or(d.seed),
    };
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    let t = transport(&a)?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("annotate-out"));
    create_dir(&out)?;
    let ann_path = out.join("annotations.csv");
    let survey_path = out.join("survey.csv");
    guard_outputs(&inputs, &[ann_path.clone(), survey_path.clone()])?;

    let users = load_users(&users_path)?;
    let ann = annotate_batch(&users, t.as_ref(), &cfg)?;
    write_annotations(&ann_path, &ann)?;
    let mut outputs = vec![ann_path];
    let ok = ann.iter().filter(|x| x.outcome.name() == "success").count();
    let schema = Schema::election_2020();
    match to_survey(&ann, &schema) {
        Ok(s) => {
            for d in &s.dropped {
                log::info!("not modelled: {}", d.reason);
            }
            write_survey(&survey_path, &schema, &s)?;
            outputs.push(survey_path);
            println!("{} users, {ok} annotated, {} survey rows", users.len(), s.len());
        }
        Err(e) => {
            println!("{} users, {ok} annotated, no usable survey rows ({e})", users.len());
        }
    }
    write_manifest(&out.join("manifest.json"), "annotate", &a, Some(cfg.seed), &inputs, &outputs)?;
    Ok(())
}
