use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::us::STATE_NAMES;
use super::FrameError;

/// One categorical cell attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub cardinality: usize,
    #[serde(default)]
    pub ordinal: bool,
    /// Optional level labels; when present, CSV cells may hold either the
    /// label or the 1-based id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl Attribute {
    pub fn new(name: &str, cardinality: usize, ordinal: bool) -> Self {
        Attribute { name: name.to_string(), cardinality, ordinal, labels: None }
    }

    pub fn with_labels(mut self, labels: &[&str]) -> Self {
        self.labels = Some(labels.iter().map(|s| s.to_string()).collect());
        self
    }

    /// Parses a CSV field into a 0-based level id.
    pub fn parse_level(&self, raw: &str) -> Option<u32> {
        let raw = raw.trim();
        if let Some(labels) = &self.labels {
            if let Some(i) = labels.iter().position(|l| l == raw) {
                return Some(i as u32);
            }
        }
        match raw.parse::<usize>() {
            Ok(id) if id >= 1 && id <= self.cardinality => Some((id - 1) as u32),
            _ => None,
        }
    }

    /// Label of a 0-based level, falling back to the 1-based id.
    pub fn level_name(&self, level: u32) -> String {
        self.labels.as_ref().and_then(|l| l.get(level as usize).cloned()).unwrap_or_else(|| (level + 1).to_string())
    }
}

/// Days-to-election domain; day ids run `1..=count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayDomain {
    pub count: usize,
    #[serde(default = "day_column")]
    pub column: String,
}

fn day_column() -> String {
    "day".into()
}

fn weight_column() -> String {
    "weight".into()
}

fn choice_column() -> String {
    "choice".into()
}

/// Layout of cells, respondents and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Cell attributes, in frame column order.
    pub attributes: Vec<Attribute>,
    /// Name of the attribute that indexes areas (the adjacency graph nodes).
    pub area: String,
    #[serde(default)]
    pub day: Option<DayDomain>,
    #[serde(default)]
    pub state_covariates: Vec<String>,
    #[serde(default)]
    pub day_covariates: Vec<String>,
    #[serde(default)]
    pub state_day_covariates: Vec<String>,
    pub choices: Vec<String>,
    #[serde(default = "weight_column")]
    pub weight_column: String,
    #[serde(default = "choice_column")]
    pub choice_column: String,
}

impl Schema {
    pub fn validate(&self) -> Result<(), FrameError> {
        let mut seen = HashSet::new();
        for a in &self.attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(FrameError::Schema(format!("duplicate attribute '{}'", a.name)));
            }
            if a.cardinality < 2 {
                return Err(FrameError::Schema(format!("attribute '{}' needs at least 2 levels", a.name)));
            }
            if let Some(l) = &a.labels {
                if l.len() != a.cardinality {
                    return Err(FrameError::Schema(format!(
                        "attribute '{}' has {} labels for {} levels",
                        a.name,
                        l.len(),
                        a.cardinality
                    )));
                }
            }
        }
        if let Some(d) = &self.day {
            if d.count < 2 {
                return Err(FrameError::Schema("day domain needs at least 2 days".into()));
            }
            if seen.contains(d.column.as_str()) {
                return Err(FrameError::Schema(format!("day column '{}' clashes with an attribute", d.column)));
            }
        }
        if self.attribute_index(&self.area).is_none() {
            return Err(FrameError::Schema(format!("area attribute '{}' is not declared", self.area)));
        }
        if self.choices.len() < 2 {
            return Err(FrameError::Schema("choice set needs at least 2 options".into()));
        }
        let uniq: HashSet<_> = self.choices.iter().collect();
        if uniq.len() != self.choices.len() {
            return Err(FrameError::Schema("duplicate choice label".into()));
        }
        if self.day.is_none() && !(self.day_covariates.is_empty() && self.state_day_covariates.is_empty()) {
            return Err(FrameError::Schema("day-level covariates declared without a day domain".into()));
        }
        Ok(())
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn area_index(&self) -> usize {
        self.attribute_index(&self.area).expect("validated schema")
    }

    pub fn area_count(&self) -> usize {
        self.attributes[self.area_index()].cardinality
    }

    pub fn choice_index(&self, label: &str) -> Option<usize> {
        self.choices.iter().position(|c| c == label.trim())
    }

    /// Number of continuous covariates per respondent or cell.
    pub fn covariate_count(&self) -> usize {
        self.state_covariates.len() + self.day_covariates.len() + self.state_day_covariates.len()
    }

    /// The application layout: state, gender, ethnicity, age, college degree,
    /// household income and 2016 vote as cell attributes, 30 campaign days,
    /// nine state-level, two day-level and one state-by-day covariate, and the
    /// five-way 2020 choice set.
    pub fn election_2020() -> Schema {
        Schema {
            attributes: vec![
                Attribute::new("state", 51, false).with_labels(&STATE_NAMES),
                Attribute::new("gender", 2, false).with_labels(&["M", "F"]),
                Attribute::new("ethnicity", 5, false).with_labels(&["White", "Black", "Hispanic", "Asian", "Other"]),
                Attribute::new("age", 6, true).with_labels(&["18-24", "25-34", "35-44", "45-54", "55-64", "65+"]),
                Attribute::new("college_degree", 2, false).with_labels(&["0", "1"]),
                Attribute::new("household_income", 5, true)
                    .with_labels(&["0-25k", "25-50k", "50-75k", "75-100k", "100k+"]),
                Attribute::new("vote2016", 4, false).with_labels(&["R", "D", "other", "stay home"]),
            ],
            area: "state".into(),
            day: Some(DayDomain { count: 30, column: "day".into() }),
            state_covariates: [
                "share_2016",
                "share_2012",
                "pct_white",
                "pct_evangelical",
                "pct_college",
                "region_midwest",
                "region_northeast",
                "region_south",
                "region_west",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            day_covariates: vec!["economic_index".into(), "incumbent_approval".into()],
            state_day_covariates: vec!["covid_deaths".into()],
            choices: ["R", "D", "L", "G", "stay home"].iter().map(|s| s.to_string()).collect(),
            weight_column: "weight".into(),
            choice_column: "choice".into(),
        }
    }

    /// Ordinal attribute names, plus `day` when a day domain exists.
    pub fn ordinal_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.attributes.iter().filter(|a| a.ordinal).map(|a| a.name.clone()).collect();
        if let Some(d) = &self.day {
            v.push(d.column.clone());
        }
        v
    }
}
