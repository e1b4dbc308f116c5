//! Stratification frames, survey data, area adjacency and covariates.
//!
//! All ids are 1-based in files and 0-based in memory.

mod covariates;
mod graph;
mod schema;
pub mod us;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

pub use covariates::{load_covariates, CovariateTables};
pub use graph::{load_adjacency, write_adjacency, AdjacencyGraph};
pub use schema::{Attribute, DayDomain, Schema};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("value '{value}' is outside the domain of '{attribute}'")]
    OutOfDomain { attribute: String, value: String },
    #[error("line {line}: negative or non-numeric weight '{value}'")]
    BadWeight { line: usize, value: String },
    #[error("total weight must be positive")]
    ZeroTotalWeight,
    #[error("line {line}: duplicate cell key")]
    DuplicateCell { line: usize },
    #[error("cell not found for attribute tuple {0:?}")]
    CellNotFound(Vec<u32>),
    #[error("no respondents")]
    NoRespondents,
    #[error("adjacency: {0}")]
    Graph(String),
    #[error("covariates: {0}")]
    Covariate(String),
}

impl FrameError {
    pub(crate) fn io(path: &Path, e: impl fmt::Display) -> Self {
        FrameError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

/// Index of a frame cell (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(pub usize);

impl CellId {
    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

/// One population cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// 0-based level per schema attribute.
    pub levels: Vec<u32>,
    /// Population count; fractional for extended frames.
    pub weight: f64,
}

/// The population cell table.
#[derive(Debug, Clone)]
pub struct StratificationFrame {
    cells: Vec<Cell>,
    index: HashMap<Vec<u32>, usize>,
    total_weight: f64,
}

impl StratificationFrame {
    pub fn new(schema: &Schema, cells: Vec<Cell>) -> Result<Self, FrameError> {
        let mut index = HashMap::with_capacity(cells.len());
        let mut total = 0.0;
        for (i, c) in cells.iter().enumerate() {
            if c.levels.len() != schema.attributes.len() {
                return Err(FrameError::Schema(format!(
                    "cell {} has {} attributes, schema has {}",
                    i + 1,
                    c.levels.len(),
                    schema.attributes.len()
                )));
            }
            for (a, &l) in schema.attributes.iter().zip(&c.levels) {
                if l as usize >= a.cardinality {
                    return Err(FrameError::OutOfDomain { attribute: a.name.clone(), value: (l + 1).to_string() });
                }
            }
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(FrameError::BadWeight { line: i + 2, value: c.weight.to_string() });
            }
            if index.insert(c.levels.clone(), i).is_some() {
                return Err(FrameError::DuplicateCell { line: i + 2 });
            }
            total += c.weight;
        }
        if !(total > 0.0) {
            return Err(FrameError::ZeroTotalWeight);
        }
        Ok(StratificationFrame { cells, index, total_weight: total })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn weights(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.weight).collect()
    }

    /// Looks up the cell holding an attribute tuple.
    pub fn cell_index(&self, levels: &[u32]) -> Result<CellId, FrameError> {
        self.index.get(levels).map(|&i| CellId(i)).ok_or_else(|| FrameError::CellNotFound(levels.to_vec()))
    }
}

/// Reads `cells.csv`: one column per schema attribute plus the weight column.
pub fn load_frame(path: &Path, schema: &Schema) -> Result<StratificationFrame, FrameError> {
    schema.validate()?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| FrameError::io(path, e))?;
    let headers = rdr.headers().map_err(|e| FrameError::io(path, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| FrameError::MissingColumn(name.to_string()))
    };
    let attr_cols: Vec<usize> = schema.attributes.iter().map(|a| col(&a.name)).collect::<Result<_, _>>()?;
    let weight_col = col(&schema.weight_column)?;

    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FrameError::io(path, e))?;
        let line = i + 2;
        let mut levels = Vec::with_capacity(attr_cols.len());
        for (a, &c) in schema.attributes.iter().zip(&attr_cols) {
            let raw = rec.get(c).unwrap_or("");
            levels.push(
                a.parse_level(raw)
                    .ok_or_else(|| FrameError::OutOfDomain { attribute: a.name.clone(), value: raw.to_string() })?,
            );
        }
        let raw_w = rec.get(weight_col).unwrap_or("").trim();
        let weight: f64 = raw_w.parse().map_err(|_| FrameError::BadWeight { line, value: raw_w.to_string() })?;
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(FrameError::BadWeight { line, value: raw_w.to_string() });
        }
        cells.push(Cell { levels, weight });
    }
    StratificationFrame::new(schema, cells)
}

/// Writes a frame with 1-based ids and full-precision weights.
pub fn write_frame(path: &Path, schema: &Schema, frame: &StratificationFrame) -> Result<(), FrameError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FrameError::io(path, e))?;
    let mut header: Vec<String> = schema.attributes.iter().map(|a| a.name.clone()).collect();
    header.push(schema.weight_column.clone());
    w.write_record(&header).map_err(|e| FrameError::io(path, e))?;
    for c in frame.cells() {
        let mut row: Vec<String> = c.levels.iter().map(|l| (l + 1).to_string()).collect();
        // `{}` on f64 prints the shortest string that parses back exactly.
        row.push(format!("{}", c.weight));
        w.write_record(&row).map_err(|e| FrameError::io(path, e))?;
    }
    w.flush().map_err(|e| FrameError::io(path, e))
}

/// One survey respondent.
#[derive(Debug, Clone, PartialEq)]
pub struct Respondent {
    /// 0-based choice index.
    pub choice: usize,
    /// 0-based level per schema attribute.
    pub levels: Vec<u32>,
    /// 0-based day id, when the schema has days.
    pub day: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedRow {
    /// 1-based line number in the source file (header is line 1); 0 when the
    /// row did not come from a file.
    pub line: usize,
    pub reason: String,
}

/// Validated respondents plus the rows that were rejected.
#[derive(Debug, Clone)]
pub struct SurveyDataset {
    pub respondents: Vec<Respondent>,
    pub dropped: Vec<DroppedRow>,
}

impl SurveyDataset {
    pub fn new(respondents: Vec<Respondent>) -> Result<Self, FrameError> {
        if respondents.is_empty() {
            return Err(FrameError::NoRespondents);
        }
        Ok(SurveyDataset { respondents, dropped: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    /// Moves respondents whose attribute tuple has no frame cell into
    /// `dropped`.
    pub fn require_frame_coverage(mut self, frame: &StratificationFrame) -> Result<Self, FrameError> {
        let (keep, lost): (Vec<_>, Vec<_>) =
            self.respondents.into_iter().partition(|r| frame.cell_index(&r.levels).is_ok());
        self.dropped
            .extend(lost.iter().map(|r| DroppedRow { line: 0, reason: format!("cell not found for {:?}", r.levels) }));
        if keep.is_empty() {
            return Err(FrameError::NoRespondents);
        }
        self.respondents = keep;
        Ok(self)
    }

    /// Respondent count per choice.
    pub fn choice_counts(&self, choices: usize) -> Vec<usize> {
        let mut c = vec![0; choices];
        for r in &self.respondents {
            c[r.choice] += 1;
        }
        c
    }
}

/// Reads `survey.csv`: the choice column, every schema attribute, and the day
/// column when the schema has days. Bad rows are dropped with a reason.
pub fn load_survey(path: &Path, schema: &Schema) -> Result<SurveyDataset, FrameError> {
    schema.validate()?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| FrameError::io(path, e))?;
    let headers = rdr.headers().map_err(|e| FrameError::io(path, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| FrameError::MissingColumn(name.to_string()))
    };
    let choice_col = col(&schema.choice_column)?;
    let attr_cols: Vec<usize> = schema.attributes.iter().map(|a| col(&a.name)).collect::<Result<_, _>>()?;
    let day_col = match &schema.day {
        Some(d) => Some((col(&d.column)?, d.count)),
        None => None,
    };

    let mut respondents = Vec::new();
    let mut dropped = Vec::new();
    'rows: for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| FrameError::io(path, e))?;
        let raw_choice = rec.get(choice_col).unwrap_or("");
        let Some(choice) = schema.choice_index(raw_choice) else {
            dropped.push(DroppedRow { line, reason: "unknown choice label".into() });
            continue;
        };
        let mut levels = Vec::with_capacity(attr_cols.len());
        for (a, &c) in schema.attributes.iter().zip(&attr_cols) {
            match a.parse_level(rec.get(c).unwrap_or("")) {
                Some(l) => levels.push(l),
                None => {
                    dropped.push(DroppedRow { line, reason: format!("'{}' out of domain", a.name) });
                    continue 'rows;
                }
            }
        }
        let day = match day_col {
            Some((c, count)) => match rec.get(c).unwrap_or("").trim().parse::<usize>() {
                Ok(d) if d >= 1 && d <= count => Some((d - 1) as u32),
                _ => {
                    dropped.push(DroppedRow { line, reason: "day out of domain".into() });
                    continue;
                }
            },
            None => None,
        };
        respondents.push(Respondent { choice, levels, day });
    }
    if respondents.is_empty() {
        return Err(FrameError::NoRespondents);
    }
    Ok(SurveyDataset { respondents, dropped })
}

/// Writes respondents in the `survey.csv` layout using labels where the schema
/// has them.
pub fn write_survey(path: &Path, schema: &Schema, survey: &SurveyDataset) -> Result<(), FrameError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FrameError::io(path, e))?;
    let mut header = vec![schema.choice_column.clone()];
    header.extend(schema.attributes.iter().map(|a| a.name.clone()));
    if let Some(d) = &schema.day {
        header.push(d.column.clone());
    }
    w.write_record(&header).map_err(|e| FrameError::io(path, e))?;
    for r in &survey.respondents {
        let mut row = vec![schema.choices[r.choice].clone()];
        row.extend(schema.attributes.iter().zip(&r.levels).map(|(a, &l)| a.level_name(l)));
        if let Some(d) = r.day {
            row.push((d + 1).to_string());
        }
        w.write_record(&row).map_err(|e| FrameError::io(path, e))?;
    }
    w.flush().map_err(|e| FrameError::io(path, e))
}
