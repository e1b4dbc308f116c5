use std::collections::HashMap;

use crate::frame::{CovariateTables, Schema, StratificationFrame, SurveyDataset};

use super::{ModelError, ModelSpec, Source, Standardization};

/// Level ids and standardized covariates for a set of rows (respondent
/// patterns or frame cells).
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: usize,
    pub components: usize,
    pub covariates: usize,
    /// Row-major `[row][component]` 0-based levels.
    pub levels: Vec<u32>,
    /// Row-major `[row][covariate]` standardized values.
    pub x: Vec<f64>,
}

impl Design {
    fn empty(spec: &ModelSpec) -> Self {
        Design {
            rows: 0,
            components: spec.components.len(),
            covariates: spec.covariates.names.len(),
            levels: Vec::new(),
            x: Vec::new(),
        }
    }

    #[inline]
    pub fn level(&self, row: usize, component: usize) -> usize {
        self.levels[row * self.components + component] as usize
    }

    #[inline]
    pub fn levels_of(&self, row: usize) -> &[u32] {
        &self.levels[row * self.components..(row + 1) * self.components]
    }

    #[inline]
    pub fn x_row(&self, row: usize) -> &[f64] {
        &self.x[row * self.covariates..(row + 1) * self.covariates]
    }

    fn push(
        &mut self,
        spec: &ModelSpec,
        schema: &Schema,
        attrs: &[u32],
        day: Option<u32>,
        cov: &CovariateTables,
    ) -> Result<(), ModelError> {
        for c in &spec.components {
            let l = match c.source {
                Source::Attribute(i) => attrs[i],
                Source::Day => {
                    day.ok_or_else(|| ModelError::Mismatch(format!("component '{}' needs a day id", c.name)))?
                }
            };
            if l as usize >= c.levels {
                return Err(ModelError::Mismatch(format!("level {} out of range for '{}'", l + 1, c.name)));
            }
            self.levels.push(l);
        }
        if self.covariates > 0 {
            let raw = cov.row(attrs[schema.area_index()], day)?;
            if raw.len() != self.covariates {
                return Err(ModelError::Mismatch(format!(
                    "{} covariates supplied, model expects {}",
                    raw.len(),
                    self.covariates
                )));
            }
            spec.covariates.apply(&raw, &mut self.x);
        }
        self.rows += 1;
        Ok(())
    }

    /// One row per frame cell on a given day.
    pub fn for_cells(
        spec: &ModelSpec,
        schema: &Schema,
        frame: &StratificationFrame,
        cov: &CovariateTables,
        day: Option<u32>,
    ) -> Result<Self, ModelError> {
        let mut d = Design::empty(spec);
        for cell in frame.cells() {
            d.push(spec, schema, &cell.levels, day, cov)?;
        }
        Ok(d)
    }
}

/// Survey respondents compressed into unique covariate patterns with
/// per-choice counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub design: Design,
    pub choices: usize,
    /// Row-major `[row][choice]` counts.
    pub counts: Vec<f64>,
    pub trials: Vec<f64>,
}

impl Observations {
    pub fn build(
        spec: &ModelSpec,
        schema: &Schema,
        survey: &SurveyDataset,
        cov: &CovariateTables,
    ) -> Result<Self, ModelError> {
        if survey.respondents.is_empty() {
            return Err(ModelError::NoObservations);
        }
        let j = spec.choices.len();
        let mut design = Design::empty(spec);
        let mut counts = Vec::new();
        let mut trials = Vec::new();
        let mut seen: HashMap<(Vec<u32>, Option<u32>), usize> = HashMap::new();
        for r in &survey.respondents {
            if r.choice >= j {
                return Err(ModelError::BadChoice(r.choice));
            }
            let key = (r.levels.clone(), r.day);
            let row = match seen.get(&key) {
                Some(&row) => row,
                None => {
                    design.push(spec, schema, &r.levels, r.day, cov)?;
                    counts.extend(std::iter::repeat_n(0.0, j));
                    trials.push(0.0);
                    seen.insert(key, design.rows - 1);
                    design.rows - 1
                }
            };
            counts[row * j + r.choice] += 1.0;
            trials[row] += 1.0;
        }
        Ok(Observations { design, choices: j, counts, trials })
    }

    pub fn rows(&self) -> usize {
        self.design.rows
    }

    pub fn count(&self, row: usize, choice: usize) -> f64 {
        self.counts[row * self.choices + choice]
    }

    pub fn total(&self) -> f64 {
        self.trials.iter().sum()
    }

    /// Respondent count per choice.
    pub fn choice_totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.choices];
        for r in 0..self.rows() {
            for (k, tk) in t.iter_mut().enumerate() {
                *tk += self.count(r, k);
            }
        }
        t
    }
}

impl ModelSpec {
    /// Freezes covariate centring and scaling computed on the respondents.
    pub fn fit_standardization(
        &mut self,
        schema: &Schema,
        survey: &SurveyDataset,
        cov: &CovariateTables,
    ) -> Result<(), ModelError> {
        if self.covariates.names.is_empty() {
            return Ok(());
        }
        let area = schema.area_index();
        let rows = survey.respondents.iter().map(|r| cov.row(r.levels[area], r.day)).collect::<Result<Vec<_>, _>>()?;
        self.covariates = Standardization::fit(self.covariates.names.clone(), &rows);
        Ok(())
    }
}
