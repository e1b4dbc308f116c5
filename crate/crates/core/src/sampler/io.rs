//! Draw files.
//!
//! `<stem>.csv` has one row per retained draw with columns
//! `chain,iteration,<name 1>,...,<name d>`, chain-major. `<stem>.json`
//! (the sidecar) lists the parameter blocks as `{name, start, len}` where
//! `start` counts from the first parameter column, plus per-chain stats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChainStats, PosteriorDraws, SamplerError};
use crate::model::Block;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsSidecar {
    pub columns: usize,
    pub draws: usize,
    pub blocks: Vec<Block>,
    pub chain_stats: Vec<ChainStats>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("csv"), stem.with_extension("json"))
}

fn err<E: std::fmt::Display>(p: &Path) -> impl Fn(E) -> SamplerError + '_ {
    move |e| SamplerError::Io(format!("{}: {e}", p.display()))
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn write_draws(draws: &PosteriorDraws, stem: &Path) -> Result<(), SamplerError> {
    let (csv_path, json_path) = paths(stem);
    let f = File::create(&csv_path).map_err(err(&csv_path))?;
    let mut w = BufWriter::new(f);
    let mut header = String::from("chain,iteration");
    for n in &draws.names {
        header.push(',');
        header.push_str(n);
    }
    writeln!(w, "{header}").map_err(err(&csv_path))?;
    for i in 0..draws.len() {
        let mut line = format!("{},{}", draws.chain[i], draws.iteration[i]);
        for v in draws.draw(i) {
            // shortest round-trip representation
            line.push_str(&format!(",{v:?}"));
        }
        writeln!(w, "{line}").map_err(err(&csv_path))?;
    }
    w.flush().map_err(err(&csv_path))?;

    let side = DrawsSidecar {
        columns: draws.dim(),
        draws: draws.len(),
        blocks: draws.blocks.clone(),
        chain_stats: draws.chain_stats.clone(),
    };
    let json = serde_json::to_string_pretty(&side).map_err(err(&json_path))?;
    std::fs::write(&json_path, json).map_err(err(&json_path))?;
    Ok(())
}

pub fn read_draws(stem: &Path) -> Result<PosteriorDraws, SamplerError> {
    let (csv_path, json_path) = paths(stem);
    let text = std::fs::read_to_string(&json_path).map_err(err(&json_path))?;
    let side: DrawsSidecar = serde_json::from_str(&text).map_err(err(&json_path))?;

    let mut rdr = csv::Reader::from_path(&csv_path).map_err(err(&csv_path))?;
    let header = rdr.headers().map_err(err(&csv_path))?.clone();
    if header.len() != side.columns + 2 || &header[0] != "chain" || &header[1] != "iteration" {
        return Err(SamplerError::Io(format!(
            "{}: header does not match sidecar ({} parameter columns)",
            csv_path.display(),
            side.columns
        )));
    }
    let names: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let mut values = Vec::with_capacity(side.draws * side.columns);
    let mut chain = Vec::with_capacity(side.draws);
    let mut iteration = Vec::with_capacity(side.draws);
    for rec in rdr.records() {
        let rec = rec.map_err(err(&csv_path))?;
        let parse = |s: &str| -> Result<f64, SamplerError> { s.trim().parse::<f64>().map_err(err(&csv_path)) };
        chain.push(rec[0].trim().parse::<usize>().map_err(err(&csv_path))?);
        iteration.push(rec[1].trim().parse::<usize>().map_err(err(&csv_path))?);
        for v in rec.iter().skip(2) {
            values.push(parse(v)?);
        }
    }
    if chain.len() != side.draws {
        return Err(SamplerError::Io(format!(
            "{}: {} rows, sidecar says {}",
            csv_path.display(),
            chain.len(),
            side.draws
        )));
    }
    Ok(PosteriorDraws { names, blocks: side.blocks, values, chain, iteration, chain_stats: side.chain_stats })
}
