//! Scoring estimates against the truth, and binned metric curves over the
//! sweep stimuli.

use serde::Serialize;

use super::{ScenarioReport, ScenarioSpec};
use crate::poststrat::Percentiles;
use crate::stats::{mean, pearson};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// `mean(f - f_hat)`
    pub bias: f64,
    pub rmse: f64,
    /// `None` when truth or estimates are constant.
    pub rho: Option<f64>,
    /// Share of strict 90% intervals containing the truth.
    pub coverage: f64,
    /// Every interval had zero width, so coverage is meaningless.
    pub degenerate: bool,
}

impl Metrics {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Bias => Some(self.bias),
            Metric::AbsBias => Some(self.bias.abs()),
            Metric::Rmse => Some(self.rmse),
            Metric::Rho => self.rho,
            Metric::Coverage => (!self.degenerate).then_some(self.coverage),
        }
    }
}

/// Scores point estimates (posterior medians) and intervals against `truth`.
pub fn score(truth: &[f64], est: &[Percentiles]) -> Metrics {
    assert_eq!(truth.len(), est.len(), "truth and estimates differ in length");
    assert!(!truth.is_empty(), "nothing to score");
    let point: Vec<f64> = est.iter().map(|e| e.p50).collect();
    let diff: Vec<f64> = truth.iter().zip(&point).map(|(f, h)| f - h).collect();
    let covered = truth.iter().zip(est).filter(|(f, e)| e.p5 < **f && **f < e.p95).count();
    Metrics {
        bias: mean(&diff),
        rmse: (diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt(),
        rho: pearson(truth, &point),
        coverage: covered as f64 / truth.len() as f64,
        degenerate: est.iter().all(|e| e.p5 == e.p95),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
pub enum Metric {
    Bias,
    AbsBias,
    Rmse,
    Rho,
    Coverage,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Bias, Metric::AbsBias, Metric::Rmse, Metric::Rho, Metric::Coverage];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Bias => "bias",
            Metric::AbsBias => "abs_bias",
            Metric::Rmse => "rmse",
            Metric::Rho => "rho",
            Metric::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stimulus {
    SampleSize,
    Prevalence,
    SelectionMean,
    SamplePrevalenceBias,
}

impl Stimulus {
    pub const ALL: [Stimulus; 4] =
        [Stimulus::SampleSize, Stimulus::Prevalence, Stimulus::SelectionMean, Stimulus::SamplePrevalenceBias];

    pub fn name(&self) -> &'static str {
        match self {
            Stimulus::SampleSize => "n",
            Stimulus::Prevalence => "prevalence",
            Stimulus::SelectionMean => "selection_mu",
            Stimulus::SamplePrevalenceBias => "sample_prevalence_bias",
        }
    }
}

/// Mean of one metric within one stimulus bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scenario: String,
    pub stimulus: &'static str,
    pub target: &'static str,
    pub metric: &'static str,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    /// Mean stimulus value of the rows in the bin.
    pub center: f64,
    pub mean: f64,
    /// Standard error of the mean; zero for a single row.
    pub mc_error: f64,
    pub count: usize,
}

/// Equal-width bins over the observed range of each stimulus, per scenario,
/// target and metric. Choice-level rows are the unit.
pub fn stimulus_sweeps(reports: &[ScenarioReport], bins: usize) -> Vec<SweepRow> {
    let bins = bins.max(1);
    let mut scenarios: Vec<ScenarioSpec> = reports.iter().map(|r| r.scenario).collect();
    scenarios.sort_by_key(|s| s.id());
    scenarios.dedup();
    let mut out = Vec::new();
    for sc in scenarios {
        let rows: Vec<_> = reports.iter().filter(|r| r.scenario == sc).flat_map(|r| &r.choices).collect();
        for stim in Stimulus::ALL {
            let xs: Vec<(f64, usize)> =
                rows.iter().enumerate().filter_map(|(i, c)| c.stimulus(stim).map(|x| (x, i))).collect();
            if xs.is_empty() {
                continue;
            }
            let lo = xs.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
            let hi = xs.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
            let nb = if hi > lo { bins } else { 1 };
            let width = (hi - lo) / nb as f64;
            let bin_of = |x: f64| {
                if nb == 1 {
                    0
                } else {
                    (((x - lo) / width) as usize).min(nb - 1)
                }
            };
            for (target, pick) in [("theta", 0usize), ("pi", 1)] {
                for metric in Metric::ALL {
                    for b in 0..nb {
                        let members: Vec<(f64, f64)> = xs
                            .iter()
                            .filter(|(x, _)| bin_of(*x) == b)
                            .filter_map(|&(x, i)| {
                                let m = if pick == 0 { &rows[i].theta } else { &rows[i].pi };
                                m.get(metric).map(|v| (x, v))
                            })
                            .collect();
                        if members.is_empty() {
                            continue;
                        }
                        let vals: Vec<f64> = members.iter().map(|m| m.1).collect();
                        let k = vals.len();
                        let mc_error =
                            if k > 1 { crate::stats::variance(&vals).sqrt() / (k as f64).sqrt() } else { 0.0 };
                        out.push(SweepRow {
                            scenario: sc.label(),
                            stimulus: stim.name(),
                            target,
                            metric: metric.name(),
                            bin: b,
                            lo: lo + b as f64 * width,
                            hi: if nb == 1 { hi } else { lo + (b + 1) as f64 * width },
                            center: members.iter().map(|m| m.0).sum::<f64>() / k as f64,
                            mean: mean(&vals),
                            mc_error,
                            count: k,
                        });
                    }
                }
            }
        }
    }
    out
}
