use std::path::{Path, PathBuf};

use anyhow::Result;
use mrp_core::agreement::{
    bootstrap_alpha, fit_agreement_network, krippendorff_alpha, load_matrix, posterior_incidence, write_incidence,
    AgreementMatrix, Level, NetworkConfig, Ratings,
};
use serde::{Deserialize, Serialize};

use super::{create_dir, split_list};
use crate::config::{require_exists, resolve};
use crate::manifest::{guard_outputs, write_manifest};
use crate::{Numeric, Usage};

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct Args {
    /// Pre-tabulated square matrix (label,<l1>,...,<lL>).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Long ratings table (unit, rater, variable, label).
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub variable: Option<String>,
    /// The two raters to compare, comma separated.
    #[arg(long)]
    pub raters: Option<String>,
    /// Label order, comma separated; needed for ordinal text labels.
    #[arg(long)]
    pub order: Option<String>,
    /// `nominal` (default) or `ordinal`.
    #[arg(long)]
    pub level: Option<String>,
    /// Bootstrap resamples; 0 skips the bootstrap.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Also fit the latent agreement network.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub network: Option<bool>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Rate of the exponential prior on the link premium.
    #[arg(long)]
    pub r_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(flags: &Args, config: Option<&Path>) -> Result<()> {
    let a = resolve(flags, config)?;
    let inputs: Vec<PathBuf> = a.matrix.iter().chain(&a.ratings).cloned().collect();
    require_exists(&inputs)?;
    let level = match a.level.as_deref().unwrap_or("nominal") {
        "nominal" => Level::Nominal,
        "ordinal" => Level::Ordinal,
        other => return Err(Usage(format!("unknown level '{other}'")).into()),
    };
    let seed = a.seed.unwrap_or(1);
    let (labels, pairs) = match (&a.matrix, &a.ratings) {
        (Some(m), None) => {
            let m = load_matrix(m)?;
            (m.labels.clone(), m.to_pairs())
        }
        (None, Some(r)) => {
            let variable = a.variable.clone().ok_or_else(|| Usage("--ratings needs --variable".into()))?;
            let raters = split_list(a.raters.as_deref().unwrap_or(""));
            if raters.len() != 2 {
                return Err(Usage("--raters takes exactly two names".into()).into());
            }
            let order = a.order.as_deref().map(split_list);
            Ratings::load(r)?.pairs(&variable, &raters[0], &raters[1], order.as_deref())?
        }
        _ => return Err(Usage("give exactly one of --matrix or --ratings".into()).into()),
    };
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("agreement-out"));
    create_dir(&out)?;
    let alpha_path = out.join("alpha.json");
    let boot_path = out.join("bootstrap.csv");
    let inc_path = out.join("incidence.csv");
    guard_outputs(&inputs, &[alpha_path.clone(), boot_path.clone(), inc_path.clone()])?;

    let alpha = krippendorff_alpha(&pairs, level)?;
    let mut report = serde_json::json!({ "level": level, "labels": labels, "alpha": alpha });
    let mut outputs = vec![alpha_path.clone()];
    let resamples = a.bootstrap.unwrap_or(1000);
    if resamples > 0 {
        let b = bootstrap_alpha(&pairs, level, resamples, seed)?;
        report["bootstrap"] = serde_json::json!({
            "resamples": resamples, "mean": b.mean, "sd": b.sd, "q05": b.q05, "q50": b.q50, "q95": b.q95,
        });
        let mut w = csv::Writer::from_path(&boot_path)?;
        w.write_record(["resample", "alpha"])?;
        for (i, d) in b.draws.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{d:?}")])?;
        }
        w.flush()?;
        outputs.push(boot_path);
    }
    if a.network.unwrap_or(false) {
        let d = NetworkConfig::default();
        let cfg = NetworkConfig {
            chains: a.chains.unwrap_or(d.chains),
            iterations: a.iterations.unwrap_or(d.iterations),
            warmup: a.warmup.unwrap_or(d.warmup),
            thin: a.thin.unwrap_or(d.thin),
            seed,
            r_rate: a.r_rate.unwrap_or(d.r_rate),
            fixed_r: None,
        };
        cfg.validate().map_err(|e| Usage(e.to_string()))?;
        let matrix = AgreementMatrix::from_pairs(labels.clone(), &pairs)?;
        let post = fit_agreement_network(&matrix, &cfg)?;
        let r_mean = post.r.iter().sum::<f64>() / post.r.len() as f64;
        report["network"] = serde_json::json!({
            "draws": post.len(), "r_mean": r_mean, "acceptance": post.acceptance, "nonconvergent": post.nonconvergent,
        });
        write_incidence(&inc_path, &labels, &posterior_incidence(&post))?;
        outputs.push(inc_path);
        if post.nonconvergent {
            std::fs::write(&alpha_path, serde_json::to_string_pretty(&report)? + "\n")?;
            return Err(Numeric("agreement network: a Metropolis block stopped accepting".into()).into());
        }
    }
    std::fs::write(&alpha_path, serde_json::to_string_pretty(&report)? + "\n")?;
    write_manifest(&out.join("manifest.json"), "agreement", &a, Some(seed), &inputs, &outputs)?;
    println!("alpha = {:.6} over {} units", alpha.value, alpha.pairable);
    Ok(())
}
