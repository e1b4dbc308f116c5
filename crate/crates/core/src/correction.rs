//! Online-selection sampling for simulation, and the King-Zeng prior
//! correction offset for estimation.
//!
//! The selection dispersion `sigma` is a Beta *variance*: a penalty with mean
//! `mu` and variance `sigma` has shapes `a = mu * nu`, `b = (1 - mu) * nu`
//! with `nu = mu (1 - mu) / sigma - 1`, which needs `sigma < mu (1 - mu)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorrectionError {
    #[error("choice {choice}: penalty mean {mu} must lie in [0, 1)")]
    BadMean { choice: usize, mu: f64 },
    #[error("choice {choice}: dispersion {sigma} must lie in [0, {bound}) (Beta variance bound mu(1-mu))")]
    BadDispersion { choice: usize, sigma: f64, bound: f64 },
    #[error("penalty config covers {got} choices, population has {expected}")]
    ChoiceCount { expected: usize, got: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("cannot draw {n} respondents from {available} surviving individuals")]
    SampleTooLarge { n: usize, available: u64 },
    #[error(
        "choice '{choice}': {what} count is zero, so the offset is undefined; pool this choice with another or drop it"
    )]
    DegenerateCounts { choice: String, what: &'static str },
    #[error("population size {population} is smaller than the sample ({sample})")]
    PopulationTooSmall { population: f64, sample: f64 },
    #[error("prevalence for '{choice}' is {value}, must lie in (0, 1)")]
    BadPrevalence { choice: String, value: f64 },
    #[error("prevalence table has no entry for choice '{0}'")]
    MissingChoice(String),
    #[error("prevalence table needs a provenance note")]
    NoProvenance,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CorrectionError {
    CorrectionError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Per-choice selection penalties and the target sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Mean penalty per choice. 0 disables selection on that choice.
    pub mu: Vec<f64>,
    /// Beta variance per choice. 0 fixes the penalty at `mu`.
    pub sigma: Vec<f64>,
    pub n: usize,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), CorrectionError> {
        if self.mu.len() != self.sigma.len() {
            return Err(CorrectionError::ChoiceCount { expected: self.mu.len(), got: self.sigma.len() });
        }
        if self.n == 0 {
            return Err(CorrectionError::EmptySample);
        }
        for (j, (&mu, &sigma)) in self.mu.iter().zip(&self.sigma).enumerate() {
            beta_shapes(mu, sigma).map_err(|e| match e {
                CorrectionError::BadMean { mu, .. } => CorrectionError::BadMean { choice: j, mu },
                CorrectionError::BadDispersion { sigma, bound, .. } => {
                    CorrectionError::BadDispersion { choice: j, sigma, bound }
                }
                e => e,
            })?;
        }
        Ok(())
    }

    /// Penalties with dispersion at `fraction` of the bound, for every mean.
    pub fn at_fraction_of_bound(mu: Vec<f64>, fraction: f64, n: usize) -> Self {
        let sigma = mu.iter().map(|m| fraction * m * (1.0 - m)).collect();
        SelectionConfig { mu, sigma, n }
    }
}

/// Penalty distribution of one choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Fixed(f64),
    Beta { a: f64, b: f64 },
}

impl Penalty {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Penalty::Fixed(v) => v,
            Penalty::Beta { a, b } => {
                let v: f64 = Beta::new(a, b).expect("positive shapes").sample(rng);
                // keep strictly inside (0, 1) when a tiny shape underflows
                v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            }
        }
    }
}

/// Beta shapes for mean `mu` and variance `sigma`.
pub fn beta_shapes(mu: f64, sigma: f64) -> Result<Penalty, CorrectionError> {
    if !(0.0..1.0).contains(&mu) {
        return Err(CorrectionError::BadMean { choice: 0, mu });
    }
    let bound = mu * (1.0 - mu);
    if sigma == 0.0 {
        return Ok(Penalty::Fixed(mu));
    }
    if !(sigma > 0.0 && sigma < bound) {
        return Err(CorrectionError::BadDispersion { choice: 0, sigma, bound });
    }
    let nu = bound / sigma - 1.0;
    Ok(Penalty::Beta { a: mu * nu, b: (1.0 - mu) * nu })
}

/// One penalty per (cell, choice), row-major.
pub fn draw_penalties<R: Rng + ?Sized>(
    cfg: &SelectionConfig,
    cells: usize,
    rng: &mut R,
) -> Result<Vec<f64>, CorrectionError> {
    cfg.validate()?;
    let dists: Vec<Penalty> =
        cfg.mu.iter().zip(&cfg.sigma).map(|(&m, &s)| beta_shapes(m, s)).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(cells * dists.len());
    for _ in 0..cells {
        for d in &dists {
            out.push(d.sample(rng));
        }
    }
    Ok(out)
}

/// Fenwick tree over nonnegative weights with prefix search.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for i in 0..n {
            tree[i + 1] += weights[i];
            let j = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if j <= n {
                tree[j] += tree[i + 1];
            }
        }
        Fenwick { tree }
    }

    fn add(&mut self, i: usize, delta: f64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut k = self.tree.len() - 1;
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        s
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

/// Result of one online-selected draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedSample {
    /// `(cell, choice)` of each respondent in draw order.
    pub respondents: Vec<(usize, usize)>,
    /// Row-major `[cell][choice]` penalties that were applied.
    pub penalties: Vec<f64>,
}

impl SelectedSample {
    /// Row-major `[cell][choice]` sample counts.
    pub fn counts(&self, cells: usize, choices: usize) -> Vec<u64> {
        let mut c = vec![0; cells * choices];
        for &(m, j) in &self.respondents {
            c[m * choices + j] += 1;
        }
        c
    }
}

/// Draws `cfg.n` individuals without replacement from a population given as
/// row-major `[cell][choice]` counts. Each draw picks a surviving individual
/// with probability proportional to `1 - penalty` of its (cell, choice).
pub fn draw_online_selected_sample<R: Rng + ?Sized>(
    population: &[u64],
    choices: usize,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Result<SelectedSample, CorrectionError> {
    if cfg.mu.len() != choices {
        return Err(CorrectionError::ChoiceCount { expected: choices, got: cfg.mu.len() });
    }
    let cells = population.len() / choices;
    let penalties = draw_penalties(cfg, cells, rng)?;
    let respondents = weighted_without_replacement(population, &penalties, choices, cfg.n, rng)?;
    Ok(SelectedSample { respondents, penalties })
}

/// Simple random sample of `n` individuals without replacement.
pub fn draw_simple_random_sample<R: Rng + ?Sized>(
    population: &[u64],
    choices: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, CorrectionError> {
    if n == 0 {
        return Err(CorrectionError::EmptySample);
    }
    weighted_without_replacement(population, &vec![0.0; population.len()], choices, n, rng)
}

fn weighted_without_replacement<R: Rng + ?Sized>(
    population: &[u64],
    penalties: &[f64],
    choices: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, CorrectionError> {
    let survive: Vec<f64> = penalties.iter().map(|p| 1.0 - p).collect();
    let mut remaining = population.to_vec();
    let available: u64 = remaining.iter().zip(&survive).filter(|(_, &s)| s > 0.0).map(|(&c, _)| c).sum();
    if (n as u64) > available {
        return Err(CorrectionError::SampleTooLarge { n, available });
    }
    let weights: Vec<f64> = remaining.iter().zip(&survive).map(|(&c, s)| c as f64 * s).collect();
    let mut tree = Fenwick::new(&weights);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g = tree.find(rng.random::<f64>() * tree.total());
        if remaining[g] == 0 || survive[g] <= 0.0 {
            // rounding put the target on an exhausted group; rebuild and retry
            let w: Vec<f64> = remaining.iter().zip(&survive).map(|(&c, s)| c as f64 * s).collect();
            tree = Fenwick::new(&w);
            continue;
        }
        remaining[g] -= 1;
        tree.add(g, -survive[g]);
        out.push((g / choices, g % choices));
    }
    Ok(out)
}

/// Expected share of each choice among survivors, `sum_m (1 - mu_j) N_mj`
/// normalized over choices.
pub fn expected_survivor_shares(population: &[u64], choices: usize, mu: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; choices];
    for (g, &c) in population.iter().enumerate() {
        s[g % choices] += (1.0 - mu[g % choices]) * c as f64;
    }
    let t: f64 = s.iter().sum();
    s.iter().map(|v| v / t).collect()
}

/// `log((n1 / N1) / (n0 / N0))` with `N1 = prevalence * N` and
/// `N0 = (1 - prevalence) * N`.
pub fn king_zeng_offset(
    choice: &str,
    n1: f64,
    n0: f64,
    prevalence: f64,
    population: f64,
) -> Result<f64, CorrectionError> {
    if !(n1 >= 1.0) {
        return Err(CorrectionError::DegenerateCounts { choice: choice.into(), what: "case" });
    }
    if !(n0 >= 1.0) {
        return Err(CorrectionError::DegenerateCounts { choice: choice.into(), what: "control" });
    }
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(CorrectionError::BadPrevalence { choice: choice.into(), value: prevalence });
    }
    if !(population >= n1 + n0) {
        return Err(CorrectionError::PopulationTooSmall { population, sample: n1 + n0 });
    }
    let big1 = prevalence * population;
    let big0 = (1.0 - prevalence) * population;
    Ok(((n1 / big1) / (n0 / big0)).ln())
}

/// Representative-protocol intercept from one fitted without an offset.
pub fn corrected_intercept(alpha_fitted: f64, offset: f64) -> f64 {
    alpha_fitted - offset
}

/// Population prevalence per choice, from an external source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceTable {
    pub choices: Vec<String>,
    pub values: Vec<f64>,
    pub provenance: String,
}

impl PrevalenceTable {
    pub fn new(choices: Vec<String>, values: Vec<f64>, provenance: &str) -> Result<Self, CorrectionError> {
        if provenance.trim().is_empty() {
            return Err(CorrectionError::NoProvenance);
        }
        for (c, &v) in choices.iter().zip(&values) {
            if !(v > 0.0 && v < 1.0) {
                return Err(CorrectionError::BadPrevalence { choice: c.clone(), value: v });
            }
        }
        Ok(PrevalenceTable { choices, values, provenance: provenance.trim().to_string() })
    }

    pub fn get(&self, choice: &str) -> Result<f64, CorrectionError> {
        self.choices
            .iter()
            .position(|c| c == choice)
            .map(|i| self.values[i])
            .ok_or_else(|| CorrectionError::MissingChoice(choice.into()))
    }

    /// Offsets for every modeled choice from sample choice counts.
    pub fn offsets(
        &self,
        modeled: &[String],
        sample_counts: &[f64],
        population: f64,
    ) -> Result<Vec<f64>, CorrectionError> {
        let n: f64 = sample_counts.iter().sum();
        modeled
            .iter()
            .zip(sample_counts)
            .map(|(c, &n1)| king_zeng_offset(c, n1, n - n1, self.get(c)?, population))
            .collect()
    }
}

/// Reads `choice,value` or `choice,day,value`. Day series are averaged per
/// choice. Every choice in `required` must be present. A `source` column,
/// when present, becomes the provenance note; otherwise the file name does.
pub fn load_prevalence(path: &Path, required: &[String]) -> Result<PrevalenceTable, CorrectionError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let c_choice = col("choice").ok_or_else(|| io_err(path, "missing column 'choice'"))?;
    let c_value = col("value").ok_or_else(|| io_err(path, "missing column 'value'"))?;
    let c_source = col("source");
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut sources = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let choice = rec[c_choice].trim().to_string();
        let v: f64 = rec[c_value].trim().parse().map_err(|_| io_err(path, format!("line {}: bad value", i + 2)))?;
        if !(v > 0.0 && v < 1.0) {
            return Err(CorrectionError::BadPrevalence { choice, value: v });
        }
        if let Some(s) = c_source {
            let s = rec[s].trim().to_string();
            if !s.is_empty() && !sources.contains(&s) {
                sources.push(s);
            }
        }
        let e = sums.entry(choice).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let mut values = Vec::with_capacity(required.len());
    for c in required {
        let (s, k) = sums.get(c).ok_or_else(|| CorrectionError::MissingChoice(c.clone()))?;
        values.push(s / *k as f64);
    }
    let provenance = if sources.is_empty() {
        path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
    } else {
        sources.join("; ")
    };
    PrevalenceTable::new(required.to_vec(), values, &provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    #[test]
    fn king_zeng_reference_value() {
        let v = king_zeng_offset("b", 300.0, 700.0, 0.25, 1e6).unwrap();
        // log(9/7)
        assert!((v - 0.251_314_428_280_906_1).abs() < 1e-12);
        let w = king_zeng_offset("b", 600.0, 1400.0, 0.25, 1e6).unwrap();
        assert!((v - w).abs() < 1e-14);
        assert!(king_zeng_offset("b", 250.0, 750.0, 0.25, 1e6).unwrap().abs() < 1e-14);
    }

    #[test]
    fn king_zeng_rejects_degenerate_counts() {
        let e = king_zeng_offset("Green", 0.0, 10.0, 0.1, 100.0).unwrap_err();
        assert!(e.to_string().contains("Green") && e.to_string().contains("pool"));
        assert!(king_zeng_offset("x", 3.0, 0.0, 0.1, 100.0).is_err());
        assert!(king_zeng_offset("x", 3.0, 3.0, 1.0, 100.0).is_err());
        assert!(king_zeng_offset("x", 3.0, 3.0, 0.5, 5.0).is_err());
    }

    #[test]
    fn intercept_correction_is_additive() {
        assert_eq!(corrected_intercept(-0.4, 0.0), -0.4);
        assert!((corrected_intercept(-0.7, 0.5) + 1.2).abs() < 1e-15);
        // (alpha~, no offset) and (alpha~ + offset, offset removed) agree
        let (a, t, rest) = (-1.2, 0.5, 0.3);
        assert!(((a + rest) - (corrected_intercept(a + t, t) + rest)).abs() < 1e-15);
    }

    #[test]
    fn dispersion_bound_is_enforced() {
        assert!(beta_shapes(0.5, 0.25).is_err());
        assert!(beta_shapes(0.5, 0.3).is_err());
        assert!(beta_shapes(1.0, 0.0).is_err());
        assert_eq!(beta_shapes(0.0, 0.0).unwrap(), Penalty::Fixed(0.0));
        match beta_shapes(0.3, 0.105).unwrap() {
            Penalty::Beta { a, b } => {
                assert!((a - 0.3).abs() < 1e-12 && (b - 0.7).abs() < 1e-12);
            }
            p => panic!("{p:?}"),
        }
        let cfg = SelectionConfig { mu: vec![0.2, 0.4], sigma: vec![0.01, 0.5], n: 10 };
        assert!(matches!(cfg.validate(), Err(CorrectionError::BadDispersion { choice: 1, .. })));
    }

    #[test]
    fn penalty_moments_match_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (mu, frac) in [(0.3, 0.5), (0.8, 0.2), (0.05, 0.9)] {
            let sigma = frac * mu * (1.0 - mu);
            let cfg = SelectionConfig { mu: vec![mu], sigma: vec![sigma], n: 1 };
            let v = draw_penalties(&cfg, 100_000, &mut rng).unwrap();
            assert!(v.iter().all(|&x| x > 0.0 && x < 1.0));
            let m = crate::stats::mean(&v);
            let var = crate::stats::variance(&v);
            assert!((m - mu).abs() < 0.005, "mean {m} vs {mu}");
            assert!((var / sigma - 1.0).abs() < 0.1, "var {var} vs {sigma}");
        }
    }

    fn toy_population(rng: &mut ChaCha8Rng, cells: usize, choices: usize) -> Vec<u64> {
        (0..cells * choices).map(|_| rng.random_range(50..500)).collect()
    }

    #[test]
    fn sample_shares_converge_to_survivor_shares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pop = toy_population(&mut rng, 30, 3);
        let cfg = SelectionConfig::at_fraction_of_bound(vec![0.6, 0.1, 0.3], 0.5, 20);
        let mut tally = [0.0; 3];
        for _ in 0..10_000 {
            let s = draw_online_selected_sample(&pop, 3, &cfg, &mut rng).unwrap();
            for &(_, j) in &s.respondents {
                tally[j] += 1.0;
            }
        }
        let total: f64 = tally.iter().sum();
        let want = expected_survivor_shares(&pop, 3, &cfg.mu);
        for j in 0..3 {
            assert!((tally[j] / total - want[j]).abs() < 0.01, "{j}: {tally:?} vs {want:?}");
        }
    }

    #[test]
    fn heavy_penalty_undersamples_that_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pop = toy_population(&mut rng, 30, 3);
        let cfg = SelectionConfig { mu: vec![0.9, 0.0, 0.0], sigma: vec![0.045, 0.0, 0.0], n: 2000 };
        let s = draw_online_selected_sample(&pop, 3, &cfg, &mut rng).unwrap();
        let share = s.respondents.iter().filter(|r| r.1 == 0).count() as f64 / 2000.0;
        let pop_share = (0..30).map(|m| pop[m * 3] as f64).sum::<f64>() / pop.iter().sum::<u64>() as f64;
        assert!(share < 0.5 * pop_share, "{share} vs {pop_share}");
    }

    #[test]
    fn equal_fixed_penalties_reduce_to_simple_random_sampling() {
        let pop: Vec<u64> = vec![400, 100, 300, 200, 600, 400];
        let cfg = SelectionConfig { mu: vec![0.4, 0.4], sigma: vec![0.0, 0.0], n: 100 };
        let total: u64 = pop.iter().sum();
        let df = (pop.len() - 1) as f64;
        let chi = statrs::distribution::ChiSquared::new(df).unwrap();
        use statrs::distribution::ContinuousCDF;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut counts = vec![0.0; pop.len()];
            for _ in 0..200 {
                let s = draw_online_selected_sample(&pop, 2, &cfg, &mut rng).unwrap();
                for (g, c) in s.counts(3, 2).iter().enumerate() {
                    counts[g] += *c as f64;
                }
            }
            let n = 200.0 * 100.0;
            let stat: f64 = counts
                .iter()
                .zip(&pop)
                .map(|(o, &p)| {
                    let e = n * p as f64 / total as f64;
                    (o - e).powi(2) / e
                })
                .sum();
            assert!(1.0 - chi.cdf(stat) > 0.001, "seed {seed}: chi2 {stat}");
        }
    }

    #[test]
    fn sample_is_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pop = vec![3, 0, 2, 1];
        let cfg = SelectionConfig::at_fraction_of_bound(vec![0.5, 0.2], 0.5, 6);
        let s = draw_online_selected_sample(&pop, 2, &cfg, &mut rng).unwrap();
        assert_eq!(s.counts(2, 2), pop);
        let cfg = SelectionConfig { n: 7, ..cfg };
        assert!(matches!(
            draw_online_selected_sample(&pop, 2, &cfg, &mut rng),
            Err(CorrectionError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn fenwick_search_matches_linear_scan() {
        let w = [0.5, 0.0, 2.0, 1.0, 0.25, 3.0, 0.0];
        let t = Fenwick::new(&w);
        assert!((t.total() - 6.75).abs() < 1e-15);
        for k in 0..675 {
            let target = k as f64 / 100.0;
            let mut acc = 0.0;
            let want = w
                .iter()
                .position(|&x| {
                    acc += x;
                    acc > target
                })
                .unwrap();
            assert_eq!(t.find(target), want, "target {target}");
        }
    }

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn prevalence_files() {
        let choices = vec!["R".to_string(), "D".to_string()];
        let mut text = String::from("choice,day,value\n");
        for d in 1..=30 {
            text.push_str(&format!("R,{d},0.47\n"));
        }
        text.push_str("D,1,0.4\nD,2,0.5\n");
        let f = write_tmp(&text);
        let t = load_prevalence(f.path(), &choices).unwrap();
        assert!((t.values[0] - 0.47).abs() < 1e-12);
        assert!((t.values[1] - 0.45).abs() < 1e-12);
        assert!(!t.provenance.is_empty());

        let f = write_tmp("choice,value,source\nR,0.47,polling average\n");
        let e = load_prevalence(f.path(), &choices).unwrap_err();
        assert!(matches!(e, CorrectionError::MissingChoice(ref c) if c == "D"));
        let f = write_tmp("choice,value\nR,1.2\nD,0.3\n");
        assert!(matches!(load_prevalence(f.path(), &choices), Err(CorrectionError::BadPrevalence { .. })));
        assert!(PrevalenceTable::new(choices, vec![0.4, 0.5], " ").is_err());
    }

    proptest! {
        #[test]
        fn offset_sign_follows_sample_excess(
            n1 in 1u32..5000, n0 in 1u32..5000, p in 0.01f64..0.99
        ) {
            let (n1, n0) = (n1 as f64, n0 as f64);
            let v = king_zeng_offset("x", n1, n0, p, 1e7).unwrap();
            let excess = n1 / (n1 + n0) - p;
            if excess.abs() > 1e-9 {
                prop_assert_eq!(v > 0.0, excess > 0.0);
            }
        }
    }
}
