use serde::Serialize;

use super::PosteriorDraws;
use crate::stats::{mean, percentiles, variance};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    /// `None` when every split chain is constant.
    pub rhat: Option<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSummary {
    pub name: String,
    pub max_rhat: Option<f64>,
    pub min_ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scalars: Vec<ScalarSummary>,
    pub blocks: Vec<BlockSummary>,
    pub divergences: usize,
    pub warnings: Vec<String>,
}

/// Splits each chain in half; odd-length chains drop their middle draw.
fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let h = c.len() / 2;
        if h == 0 {
            continue;
        }
        out.push(&c[..h]);
        out.push(&c[c.len() - h..]);
    }
    out
}

/// Split R-hat. `None` when the within-chain variance is zero.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let parts = split(chains);
    if parts.len() < 2 {
        return None;
    }
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let w = mean(&parts.iter().map(|c| variance(c)).collect::<Vec<_>>());
    if !(w > 0.0) {
        return None;
    }
    let b_over_n = variance(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    Some((var_plus / w).sqrt())
}

/// Multi-chain effective sample size on split chains with Geyer's initial
/// monotone sequence.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let m = parts.len();
    if m == 0 {
        return 0.0;
    }
    let n = parts[0].len();
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let acov = |c: &[f64], mu: f64, lag: usize| -> f64 {
        (0..n - lag).map(|i| (c[i] - mu) * (c[i + lag] - mu)).sum::<f64>() / n as f64
    };
    let acov0: Vec<f64> = parts.iter().zip(&means).map(|(c, &mu)| acov(c, mu, 0)).collect();
    let w = mean(&acov0) * n as f64 / (n as f64 - 1.0);
    if !(w > 0.0) {
        return total;
    }
    let b_over_n = if m > 1 { variance(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    let rho = |lag: usize| -> f64 {
        let a = mean(&parts.iter().zip(&means).map(|(c, &mu)| acov(c, mu, lag)).collect::<Vec<_>>());
        1.0 - (w - a) / var_plus
    };

    let mut pairs = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let p = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if p < 0.0 {
            break;
        }
        pairs.push(p);
        t += 2;
    }
    for k in 1..pairs.len() {
        if pairs[k] > pairs[k - 1] {
            pairs[k] = pairs[k - 1];
        }
    }
    let tau = (-1.0 + 2.0 * pairs.iter().sum::<f64>()).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total * total.log10().max(1.0))
}

pub fn diagnostics(draws: &PosteriorDraws) -> Summary {
    let mut warnings = Vec::new();
    let mut scalars = Vec::with_capacity(draws.dim());
    for j in 0..draws.dim() {
        let chains = draws.chain_columns(j);
        let all: Vec<f64> = chains.iter().flatten().copied().collect();
        let pct = percentiles(&all, &[0.05, 0.5, 0.95]);
        let rhat = split_rhat(&chains);
        if rhat.is_none() {
            warnings.push(format!("{}: R-hat undefined, chains are constant", draws.names[j]));
        }
        scalars.push(ScalarSummary {
            name: draws.names[j].clone(),
            mean: mean(&all),
            sd: variance(&all).sqrt(),
            p5: pct[0],
            p50: pct[1],
            p95: pct[2],
            rhat,
            ess: ess(&chains),
        });
    }
    let blocks = draws
        .blocks
        .iter()
        .map(|b| {
            let slice = &scalars[b.start..b.start + b.len];
            BlockSummary {
                name: b.name.clone(),
                max_rhat: slice.iter().filter_map(|s| s.rhat).reduce(f64::max),
                min_ess: slice.iter().map(|s| s.ess).fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let divergences = draws.divergences();
    if divergences > 0 {
        warnings.push(format!("{divergences} divergent transitions after warmup"));
    }
    Summary { scalars, blocks, divergences, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_chains(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }

    #[test]
    fn constant_chains_are_degenerate() {
        assert_eq!(split_rhat(&[vec![1.0; 10], vec![1.0; 10]]), None);
    }

    #[test]
    fn independent_normals_have_rhat_near_one_and_full_ess() {
        let c = normal_chains(5, 4, 1000);
        let r = split_rhat(&c).unwrap();
        assert!(r < 1.05, "rhat {r}");
        let e = ess(&c);
        assert!(e > 3000.0 && e < 5500.0, "ess {e}");
    }

    #[test]
    fn shifted_chains_have_large_rhat() {
        let mut c = normal_chains(6, 4, 500);
        c[0].iter_mut().for_each(|x| *x += 3.0);
        assert!(split_rhat(&c).unwrap() > 1.1);
    }

    #[test]
    fn autocorrelated_chain_has_reduced_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..2000)
                    .map(|_| {
                        let e: f64 = rng.sample(StandardNormal);
                        x = 0.9 * x + e;
                        x
                    })
                    .collect()
            })
            .collect();
        // AR(1) with phi 0.9: ESS ~ N (1 - phi) / (1 + phi)
        let e = ess(&chains);
        assert!(e > 250.0 && e < 650.0, "ess {e}");
    }
}
