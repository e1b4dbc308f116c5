use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mrp_core::poststrat::uniform_swing;
use serde::{Deserialize, Serialize};

use crate::config::{require_exists, required, resolve};
use crate::manifest::{beside, guard_outputs, write_manifest};
use crate::Usage;

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct Args {
    /// CSV with `area,share` from the previous election.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// National share at the previous election.
    #[arg(long)]
    pub national_prev: Option<f64>,
    /// National share now (e.g. from a poll).
    #[arg(long)]
    pub national_now: Option<f64>,
    /// Output CSV in the input layout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(flags: &Args, config: Option<&Path>) -> Result<()> {
    let a = resolve(flags, config)?;
    let input = required(&a.input, "input")?;
    let out = required(&a.out, "out")?;
    require_exists([&input])?;
    guard_outputs(std::slice::from_ref(&input), std::slice::from_ref(&out))?;
    let prev = required(&a.national_prev, "national-prev")?;
    let now = required(&a.national_now, "national-now")?;

    let mut rdr = csv::Reader::from_path(&input).with_context(|| format!("reading {}", input.display()))?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 {
        return Err(Usage(format!("{}: expected two columns, area and share", input.display())).into());
    }
    let mut areas = Vec::new();
    let mut raw = Vec::new();
    let mut shares = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec[1]
            .trim()
            .parse()
            .with_context(|| format!("{} line {}: bad share '{}'", input.display(), i + 2, &rec[1]))?;
        areas.push(rec[0].to_string());
        raw.push(rec[1].to_string());
        shares.push(v);
    }
    let s = uniform_swing(&shares, prev, now);
    if !s.clamped.is_empty() {
        let names: Vec<&str> = s.clamped.iter().map(|&i| areas[i].as_str()).collect();
        eprintln!("warning: clamped to [0, 1]: {}", names.join(", "));
    }
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(&headers)?;
    for (k, area) in areas.iter().enumerate() {
        // untouched shares keep their original spelling
        let text = if s.shares[k] == shares[k] { raw[k].clone() } else { format!("{:?}", s.shares[k]) };
        w.write_record([area.as_str(), text.as_str()])?;
    }
    w.flush()?;
    write_manifest(&beside(&out), "swing", &a, None, &[input], &[out])?;
    Ok(())
}
