use std::collections::HashMap;
use std::path::Path;

use super::{FrameError, Schema};

/// Continuous area, day and area-by-day covariates.
///
/// Area and day ids are 0-based here; the CSV files use 1-based ids (or area
/// labels when the schema has them).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CovariateTables {
    /// `[area][k]`
    pub state: Vec<Vec<f64>>,
    /// `[day][k]`
    pub day: Vec<Vec<f64>>,
    /// `[area * days + day][k]`
    pub state_day: Vec<Vec<f64>>,
    days: usize,
}

impl CovariateTables {
    pub fn new(
        schema: &Schema,
        state: Vec<Vec<f64>>,
        day: Vec<Vec<f64>>,
        state_day: Vec<Vec<f64>>,
    ) -> Result<Self, FrameError> {
        let areas = schema.area_count();
        let days = schema.day.as_ref().map_or(0, |d| d.count);
        let check = |rows: &[Vec<f64>], expect_rows: usize, width: usize, what: &str| {
            if width == 0 {
                return Ok(());
            }
            if rows.len() != expect_rows {
                return Err(FrameError::Covariate(format!(
                    "{what} covariates cover {} of {expect_rows} keys",
                    rows.len()
                )));
            }
            for r in rows {
                if r.len() != width {
                    return Err(FrameError::Covariate(format!("{what} row has wrong width")));
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(FrameError::Covariate(format!("{what} value is not finite")));
                }
            }
            Ok(())
        };
        check(&state, areas, schema.state_covariates.len(), "state")?;
        check(&day, days, schema.day_covariates.len(), "day")?;
        check(&state_day, areas * days, schema.state_day_covariates.len(), "state-day")?;
        Ok(CovariateTables { state, day, state_day, days })
    }

    /// Tables with no covariates at all.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Raw covariate vector for an (area, day) pair: state, then day, then
    /// state-day values.
    pub fn row(&self, area: u32, day: Option<u32>) -> Result<Vec<f64>, FrameError> {
        let mut out = Vec::new();
        if !self.state.is_empty() {
            out.extend_from_slice(&self.state[area as usize]);
        }
        let needs_day = !self.day.is_empty() || !self.state_day.is_empty();
        if needs_day {
            let d = day.ok_or_else(|| FrameError::Covariate("day-level covariates need a day id".into()))? as usize;
            if d >= self.days {
                return Err(FrameError::Covariate(format!("no covariates for day {}", d + 1)));
            }
            if !self.day.is_empty() {
                out.extend_from_slice(&self.day[d]);
            }
            if !self.state_day.is_empty() {
                out.extend_from_slice(&self.state_day[area as usize * self.days + d]);
            }
        }
        Ok(out)
    }
}

fn read_table(
    path: &Path,
    key_cols: &[&str],
    value_cols: &[String],
) -> Result<Vec<(Vec<String>, Vec<f64>)>, FrameError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| FrameError::io(path, e))?;
    let headers = rdr.headers().map_err(|e| FrameError::io(path, e))?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| FrameError::MissingColumn(name.to_string()))
    };
    let key_idx: Vec<usize> = key_cols.iter().map(|k| find(k)).collect::<Result<_, _>>()?;
    let val_idx: Vec<usize> = value_cols.iter().map(|k| find(k)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FrameError::io(path, e))?;
        let keys = key_idx.iter().map(|&i| rec[i].trim().to_string()).collect();
        let vals = val_idx
            .iter()
            .map(|&i| {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| FrameError::Covariate(format!("{}: line {}: bad number", path.display(), line + 2)))
            })
            .collect::<Result<_, _>>()?;
        out.push((keys, vals));
    }
    Ok(out)
}

fn parse_day(raw: &str, days: usize) -> Result<usize, FrameError> {
    match raw.parse::<usize>() {
        Ok(d) if d >= 1 && d <= days => Ok(d - 1),
        _ => Err(FrameError::Covariate(format!("day id '{raw}' out of range"))),
    }
}

/// Loads `state.csv`, `day.csv` and `state_day.csv`. Paths for tables the
/// schema does not use may be `None`.
pub fn load_covariates(
    schema: &Schema,
    state_path: Option<&Path>,
    day_path: Option<&Path>,
    state_day_path: Option<&Path>,
) -> Result<CovariateTables, FrameError> {
    let area_attr = &schema.attributes[schema.area_index()];
    let areas = area_attr.cardinality;
    let days = schema.day.as_ref().map_or(0, |d| d.count);
    let area_key = area_attr.name.as_str();
    let area_of = |raw: &str| {
        area_attr
            .parse_level(raw)
            .map(|a| a as usize)
            .ok_or_else(|| FrameError::OutOfDomain { attribute: area_attr.name.clone(), value: raw.to_string() })
    };
    let need = |p: Option<&Path>, cols: &[String], what: &str| -> Result<Option<std::path::PathBuf>, FrameError> {
        if cols.is_empty() {
            return Ok(None);
        }
        p.map(|p| Some(p.to_path_buf())).ok_or_else(|| FrameError::Covariate(format!("{what} covariate file required")))
    };

    let mut state = Vec::new();
    if let Some(p) = need(state_path, &schema.state_covariates, "state")? {
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; areas];
        for (k, v) in read_table(&p, &[area_key], &schema.state_covariates)? {
            slots[area_of(&k[0])?] = Some(v);
        }
        state = collect_complete(slots, "state")?;
    }
    let mut day = Vec::new();
    if let Some(p) = need(day_path, &schema.day_covariates, "day")? {
        let col = schema.day.as_ref().map(|d| d.column.as_str()).unwrap_or("day");
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; days];
        for (k, v) in read_table(&p, &[col], &schema.day_covariates)? {
            slots[parse_day(&k[0], days)?] = Some(v);
        }
        day = collect_complete(slots, "day")?;
    }
    let mut state_day = Vec::new();
    if let Some(p) = need(state_day_path, &schema.state_day_covariates, "state-day")? {
        let col = schema.day.as_ref().map(|d| d.column.as_str()).unwrap_or("day");
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; areas * days];
        let mut map = HashMap::new();
        for (k, v) in read_table(&p, &[area_key, col], &schema.state_day_covariates)? {
            let a = area_of(&k[0])?;
            let d = parse_day(&k[1], days)?;
            map.insert((a, d), v);
        }
        for ((a, d), v) in map {
            slots[a * days + d] = Some(v);
        }
        state_day = collect_complete(slots, "state-day")?;
    }
    CovariateTables::new(schema, state, day, state_day)
}

fn collect_complete(slots: Vec<Option<Vec<f64>>>, what: &str) -> Result<Vec<Vec<f64>>, FrameError> {
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| FrameError::Covariate(format!("{what} covariates missing key {}", i + 1))))
        .collect()
}
