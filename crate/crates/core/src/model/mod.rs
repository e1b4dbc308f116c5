//! Model specification, flat parameter layout, and the log-posterior for
//! per-choice Bernoulli and reference-category multinomial likelihoods.

mod design;
mod posterior;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{AdjacencyGraph, FrameError, Schema};
use crate::priors::{compute_scaling_factor, PriorError, ScalingFactors};
use crate::sampler::SamplerError;
use crate::stats::logistic;

pub use design::{Design, Observations};
pub use posterior::{linear_predictor, Posterior};

/// Prior sd of the intercept.
pub const ALPHA_SD: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("offsets apply to Bernoulli models only; no corrected multinomial model is defined")]
    OffsetWithMultinomial,
    #[error("offset must be finite, got {0}")]
    NonFiniteOffset(f64),
    #[error("structured area prior needs an adjacency graph")]
    MissingGraph,
    #[error("adjacency graph has {graph} nodes but the area attribute has {levels} levels")]
    GraphSize { graph: usize, levels: usize },
    #[error("choice index {0} out of range")]
    BadChoice(usize),
    #[error("data do not match the model: {0}")]
    Mismatch(String),
    #[error("no observations")]
    NoObservations,
    #[error("non-finite log posterior in block '{block}'")]
    NonFinite { block: String },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Likelihood {
    /// Choice `choice` against all others, with a fixed additive offset.
    Bernoulli { choice: usize, offset: f64 },
    /// Softmax over all choices, the last one pinned at 0.
    Multinomial,
}

/// Where a varying effect takes its level from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Attribute(usize),
    Day,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorKind {
    /// `gamma = sigma * z`, `z ~ N(0, 1)`.
    Unstructured,
    /// `gamma = sigma * z`, `z` a first-order random walk.
    RandomWalk,
    /// BYM2 convolution over the area graph.
    Bym2 { graph: AdjacencyGraph, scaling: ScalingFactors },
}

impl PriorKind {
    pub fn label(&self) -> &'static str {
        match self {
            PriorKind::Unstructured => "unstructured",
            PriorKind::RandomWalk => "random-walk",
            PriorKind::Bym2 { .. } => "bym2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub source: Source,
    pub levels: usize,
    pub prior: PriorKind,
}

/// Frozen centring and scaling of the continuous covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Standardization {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn identity(names: Vec<String>) -> Self {
        let p = names.len();
        Standardization { names, mean: vec![0.0; p], sd: vec![1.0; p] }
    }

    /// Column means and sample sds of `rows`; constant columns keep sd 1.
    pub fn fit(names: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let p = names.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut sd = vec![0.0; p];
        for r in rows {
            for k in 0..p {
                sd[k] += (r[k] - mean[k]).powi(2);
            }
        }
        for s in sd.iter_mut() {
            *s = if rows.len() > 1 { (*s / (n - 1.0)).sqrt() } else { 0.0 };
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Standardization { names, mean, sd }
    }

    pub fn apply(&self, raw: &[f64], out: &mut Vec<f64>) {
        out.extend(raw.iter().zip(self.mean.iter().zip(&self.sd)).map(|(v, (m, s))| (v - m) / s));
    }
}

/// Declarative model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub likelihood: Likelihood,
    pub choices: Vec<String>,
    pub components: Vec<Component>,
    pub covariates: Standardization,
}

impl ModelSpec {
    /// One varying effect per schema attribute plus one for days. In the
    /// structured variant the area gets BYM2 and ordinal attributes and days
    /// get random walks; otherwise every effect is unstructured.
    pub fn from_schema(
        schema: &Schema,
        graph: Option<&AdjacencyGraph>,
        likelihood: Likelihood,
        structured: bool,
    ) -> Result<Self, ModelError> {
        schema.validate()?;
        let area = schema.area_index();
        let mut components = Vec::new();
        for (i, a) in schema.attributes.iter().enumerate() {
            let prior = if !structured {
                PriorKind::Unstructured
            } else if i == area {
                let g = graph.ok_or(ModelError::MissingGraph)?;
                if g.node_count() != a.cardinality {
                    return Err(ModelError::GraphSize { graph: g.node_count(), levels: a.cardinality });
                }
                PriorKind::Bym2 { graph: g.clone(), scaling: compute_scaling_factor(g) }
            } else if a.ordinal {
                PriorKind::RandomWalk
            } else {
                PriorKind::Unstructured
            };
            components.push(Component {
                name: a.name.clone(),
                source: Source::Attribute(i),
                levels: a.cardinality,
                prior,
            });
        }
        if let Some(d) = &schema.day {
            components.push(Component {
                name: d.column.clone(),
                source: Source::Day,
                levels: d.count,
                prior: if structured { PriorKind::RandomWalk } else { PriorKind::Unstructured },
            });
        }
        let names = schema
            .state_covariates
            .iter()
            .chain(&schema.day_covariates)
            .chain(&schema.state_day_covariates)
            .cloned()
            .collect();
        let spec = ModelSpec {
            likelihood,
            choices: schema.choices.clone(),
            components,
            covariates: Standardization::identity(names),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let Likelihood::Bernoulli { choice, offset } = self.likelihood {
            if choice >= self.choices.len() {
                return Err(ModelError::BadChoice(choice));
            }
            if !offset.is_finite() {
                return Err(ModelError::NonFiniteOffset(offset));
            }
        }
        for c in &self.components {
            if let PriorKind::RandomWalk = c.prior {
                if c.levels < 2 {
                    return Err(PriorError::TooShort(c.levels).into());
                }
            }
        }
        Ok(())
    }

    /// Sets the King-Zeng offset on a Bernoulli spec.
    pub fn with_offset(mut self, value: f64) -> Result<Self, ModelError> {
        match &mut self.likelihood {
            Likelihood::Multinomial => Err(ModelError::OffsetWithMultinomial),
            Likelihood::Bernoulli { offset, .. } => {
                if !value.is_finite() {
                    return Err(ModelError::NonFiniteOffset(value));
                }
                *offset = value;
                Ok(self)
            }
        }
    }

    /// Bernoulli spec for one choice, keeping components and covariates.
    pub fn for_choice(&self, choice: usize) -> Result<Self, ModelError> {
        let mut s = self.clone();
        s.likelihood = Likelihood::Bernoulli { choice, offset: 0.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn offset(&self) -> f64 {
        match self.likelihood {
            Likelihood::Bernoulli { offset, .. } => offset,
            Likelihood::Multinomial => 0.0,
        }
    }

    pub fn is_structured(&self) -> bool {
        self.components.iter().any(|c| !matches!(c.prior, PriorKind::Unstructured))
    }

    /// Number of linear predictors: one for Bernoulli, `J - 1` otherwise.
    pub fn groups(&self) -> usize {
        match self.likelihood {
            Likelihood::Bernoulli { .. } => 1,
            Likelihood::Multinomial => self.choices.len() - 1,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    /// Maps a raw parameter vector to intercepts, slopes and varying effects.
    pub fn effects(&self, layout: &Layout, q: &[f64]) -> Vec<GroupEffects> {
        layout
            .groups
            .iter()
            .map(|g| GroupEffects {
                alpha: q[g.alpha],
                beta: q[g.beta..g.beta + self.covariates.names.len()].to_vec(),
                gammas: self.components.iter().zip(&g.components).map(|(c, cl)| component_effect(c, cl, q)).collect(),
            })
            .collect()
    }
}

/// Replaces every structured effect by an unstructured one of the same size.
pub fn unstructured_variant(spec: &ModelSpec) -> ModelSpec {
    let mut s = spec.clone();
    for c in &mut s.components {
        c.prior = PriorKind::Unstructured;
    }
    s
}

fn component_effect(c: &Component, cl: &ComponentLayout, q: &[f64]) -> Vec<f64> {
    let sigma = q[cl.log_sigma].exp();
    match &c.prior {
        PriorKind::Unstructured | PriorKind::RandomWalk => q[cl.z..cl.z + c.levels].iter().map(|z| sigma * z).collect(),
        PriorKind::Bym2 { scaling, .. } => {
            let xi = logistic(q[cl.xi.expect("bym2 layout")]);
            let psi = cl.psi.expect("bym2 layout");
            let (a, sx) = ((1.0 - xi).sqrt(), xi.sqrt());
            (0..c.levels)
                .map(|l| {
                    let phi = q[cl.z + l];
                    if scaling.island[l] {
                        sigma * phi
                    } else {
                        sigma * (phi * a + q[psi + l] * sx * scaling.node_inv_sqrt[l])
                    }
                })
                .collect()
        }
    }
}

/// Effects of one linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEffects {
    pub alpha: f64,
    pub beta: Vec<f64>,
    /// One vector per model component, indexed by level.
    pub gammas: Vec<Vec<f64>>,
}

/// A named contiguous slice of the parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLayout {
    /// Standardized deviates (`phi` for BYM2).
    pub z: usize,
    pub psi: Option<usize>,
    pub xi: Option<usize>,
    pub log_sigma: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout {
    pub alpha: usize,
    pub beta: usize,
    pub components: Vec<ComponentLayout>,
}

/// Block index of the flat unconstrained parameter vector.
///
/// Scales are stored on the log scale and the BYM2 mixing weight on the
/// logit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub blocks: Vec<Block>,
    pub groups: Vec<GroupLayout>,
    dim: usize,
}

impl Layout {
    fn new(spec: &ModelSpec) -> Self {
        let mut blocks = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize| {
            let start = at;
            blocks.push(Block { name, start, len });
            at += len;
            start
        };
        let prefixes: Vec<String> = match spec.likelihood {
            Likelihood::Bernoulli { .. } => vec![String::new()],
            Likelihood::Multinomial => spec.choices[..spec.choices.len() - 1].iter().map(|c| format!("{c}:")).collect(),
        };
        let p = spec.covariates.names.len();
        let mut groups = Vec::new();
        for pre in &prefixes {
            let alpha = push(format!("{pre}alpha"), 1);
            let beta = push(format!("{pre}beta"), p);
            let components = spec
                .components
                .iter()
                .map(|c| match c.prior {
                    PriorKind::Bym2 { .. } => ComponentLayout {
                        z: push(format!("{pre}phi.{}", c.name), c.levels),
                        psi: Some(push(format!("{pre}psi.{}", c.name), c.levels)),
                        xi: Some(push(format!("{pre}logit_xi.{}", c.name), 1)),
                        log_sigma: push(format!("{pre}log_sigma.{}", c.name), 1),
                    },
                    _ => ComponentLayout {
                        z: push(format!("{pre}z.{}", c.name), c.levels),
                        psi: None,
                        xi: None,
                        log_sigma: push(format!("{pre}log_sigma.{}", c.name), 1),
                    },
                })
                .collect();
            groups.push(GroupLayout { alpha, beta, components });
        }
        Layout { blocks, groups, dim: at }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Name of the block holding coordinate `i`.
    pub fn block_of(&self, i: usize) -> &Block {
        self.blocks.iter().find(|b| i >= b.start && i < b.start + b.len).expect("index inside the layout")
    }

    /// Scalar names, `block[k]` with 1-based `k` for vector blocks.
    pub fn scalar_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            if b.len == 1 {
                out.push(b.name.clone());
            } else {
                out.extend((1..=b.len).map(|k| format!("{}[{k}]", b.name)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Attribute;

    fn toy_schema() -> Schema {
        Schema {
            attributes: vec![
                Attribute::new("area", 3, false),
                Attribute::new("age", 4, true),
                Attribute::new("sex", 2, false),
            ],
            area: "area".into(),
            day: None,
            state_covariates: vec!["z".into()],
            day_covariates: vec![],
            state_day_covariates: vec![],
            choices: vec!["a".into(), "b".into(), "c".into()],
            weight_column: "weight".into(),
            choice_column: "choice".into(),
        }
    }

    fn toy_graph() -> AdjacencyGraph {
        AdjacencyGraph::from_edges(3, &[(1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn structured_layout_and_variant_counts() {
        let s = toy_schema();
        let g = toy_graph();
        let spec =
            ModelSpec::from_schema(&s, Some(&g), Likelihood::Bernoulli { choice: 0, offset: 0.0 }, true).unwrap();
        // alpha 1, beta 1, bym2 3+3+1+1, rw 4+1, iid 2+1
        assert_eq!(spec.dim(), 1 + 1 + 8 + 5 + 3);
        let flat = unstructured_variant(&spec);
        assert_eq!(spec.dim() - flat.dim(), 3 + 1);
        assert_eq!(unstructured_variant(&flat), flat);
        assert!(!flat.is_structured());
        assert_eq!(flat.components[0].levels, 3);
    }

    #[test]
    fn multinomial_has_one_block_per_non_reference_choice() {
        let s = toy_schema();
        let spec = ModelSpec::from_schema(&s, None, Likelihood::Multinomial, false).unwrap();
        let layout = spec.layout();
        assert_eq!(layout.groups.len(), 2);
        assert!(layout.block("a:alpha").is_some());
        assert!(layout.block("b:alpha").is_some());
        assert!(layout.block("c:alpha").is_none());
        let total: usize = layout.blocks.iter().map(|b| b.len).sum();
        assert_eq!(total, layout.dim());
        assert_eq!(layout.scalar_names().len(), layout.dim());
    }

    #[test]
    fn offset_rules() {
        let s = toy_schema();
        let multi = ModelSpec::from_schema(&s, None, Likelihood::Multinomial, false).unwrap();
        assert!(matches!(multi.with_offset(0.3), Err(ModelError::OffsetWithMultinomial)));
        let bern = ModelSpec::from_schema(&s, None, Likelihood::Bernoulli { choice: 1, offset: 0.0 }, false).unwrap();
        assert_eq!(bern.clone().with_offset(0.539).unwrap().offset(), 0.539);
        assert!(bern.with_offset(f64::NAN).is_err());
        assert!(matches!(
            ModelSpec::from_schema(&s, None, Likelihood::Bernoulli { choice: 0, offset: 0.0 }, true),
            Err(ModelError::MissingGraph)
        ));
    }

    #[test]
    fn standardization_centres_and_scales() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let st = Standardization::fit(vec!["a".into(), "b".into()], &rows);
        assert_eq!(st.mean, vec![3.0, 5.0]);
        assert_eq!(st.sd, vec![2.0, 1.0]);
        let mut out = Vec::new();
        st.apply(&[5.0, 5.0], &mut out);
        assert_eq!(out, vec![1.0, 0.0]);
    }
}
