//! Latent (dis)agreement network for an agreement matrix.
//!
//! Counts follow `A_ij ~ Poisson(mu_ij)` with
//! `log mu_ij = b0 + b1_i + b2_j + log(1 + r B_ij)`, `B_ij ~ Bernoulli(pi_ij)`,
//! `pi_ij ~ Beta(1/2, 1/2)`, `r ~ Exp(rate)`, `b0 ~ N(0, 10)`,
//! `b1_i ~ N(0, s1)`, `b2_j ~ N(0, s2)`, `s1, s2 ~ U(0, 5)` (normal scales are
//! standard deviations).
//!
//! Update for `B_ij`. With `eta = b0 + b1_i + b2_j` the Poisson likelihood
//! of `A_ij` is `exp(-m) m^A / A!` with `m = e^eta (1 + r B)`. The ratio of
//! the `B = 1` and `B = 0` likelihoods is
//!
//! ```text
//! (1 + r)^A * exp(-e^eta * r)
//! ```
//!
//! since the `e^{eta A}` and `A!` factors cancel. The full conditional is
//! therefore Bernoulli with log-odds
//! `logit(pi_ij) + A log(1 + r) - r e^eta`. Given `B`, `pi_ij` is conjugate:
//! `Beta(1/2 + B, 1/2 + 1 - B)`. The remaining blocks use random-walk
//! Metropolis with scales tuned during warmup.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{io_err, AgreementError, AgreementMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
    /// Rate of the exponential prior on `r`.
    pub r_rate: f64,
    /// Holds `r` at a value instead of sampling it.
    pub fixed_r: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { chains: 4, iterations: 2000, warmup: 1000, thin: 2, seed: 1, r_rate: 0.01, fixed_r: None }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), AgreementError> {
        let bad = |m: &str| Err(AgreementError::Config(m.into()));
        if self.chains == 0 || self.thin == 0 {
            return bad("chains and thin must be positive");
        }
        if self.warmup >= self.iterations {
            return bad("warmup must be shorter than iterations");
        }
        if !(self.r_rate > 0.0) {
            return bad("r_rate must be positive");
        }
        if self.fixed_r.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return bad("fixed_r must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.warmup).div_ceil(self.thin)
    }
}

/// Retained draws, pooled over chains in chain order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkPosterior {
    pub labels: Vec<String>,
    pub chains: usize,
    pub beta0: Vec<f64>,
    /// `[draw][level]`
    pub beta1: Vec<Vec<f64>>,
    pub beta2: Vec<Vec<f64>>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub r: Vec<f64>,
    /// `[draw][i * L + j]`
    pub pi: Vec<Vec<f64>>,
    pub b: Vec<Vec<bool>>,
    /// Post-warmup acceptance rate per Metropolis block, averaged over chains.
    pub acceptance: Vec<(String, f64)>,
    /// Some block accepted almost nothing after warmup.
    pub nonconvergent: bool,
}

impl NetworkPosterior {
    pub fn levels(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }
}

/// Monte Carlo mean of the incidence draws, `[i][j]`.
pub fn posterior_incidence(post: &NetworkPosterior) -> Vec<Vec<f64>> {
    let l = post.levels();
    let s = post.len().max(1) as f64;
    let mut m = vec![vec![0.0; l]; l];
    for draw in &post.b {
        for (k, &x) in draw.iter().enumerate() {
            if x {
                m[k / l][k % l] += 1.0;
            }
        }
    }
    for row in &mut m {
        for v in row {
            *v /= s;
        }
    }
    m
}

/// Long `incidence.csv`: rater1, rater2, probability.
pub fn write_incidence(path: &Path, labels: &[String], inc: &[Vec<f64>]) -> Result<(), AgreementError> {
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    w.write_record(["rater1", "rater2", "incidence"]).map_err(io_err(path))?;
    for (i, row) in inc.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            w.write_record([labels[i].as_str(), labels[j].as_str(), &v.to_string()]).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

const BLOCKS: [&str; 8] = ["beta0", "beta1", "beta2", "sigma1", "sigma2", "r", "shift1", "shift2"];
const TARGET_ACCEPT: f64 = 0.44;
const COLLAPSED: f64 = 0.02;
const SIGMA_MAX: f64 = 5.0;
const BETA0_SD: f64 = 10.0;

struct State {
    l: usize,
    a: Vec<f64>,
    b0: f64,
    b1: Vec<f64>,
    b2: Vec<f64>,
    s1: f64,
    s2: f64,
    r: f64,
    pi: Vec<f64>,
    b: Vec<bool>,
}

impl State {
    /// Log-likelihood of the cells in row `i` (or all rows), up to constants.
    fn loglik_cells(&self, b0: f64, b1: &[f64], b2: &[f64], r: f64, cells: impl Iterator<Item = usize>) -> f64 {
        cells
            .map(|k| {
                let (i, j) = (k / self.l, k % self.l);
                let lift = if self.b[k] { (1.0 + r).ln() } else { 0.0 };
                let log_mu = b0 + b1[i] + b2[j] + lift;
                self.a[k] * log_mu - log_mu.exp()
            })
            .sum()
    }

    fn all(&self) -> std::ops::Range<usize> {
        0..self.l * self.l
    }
}

fn normal_lp(x: &[f64], sd: f64) -> f64 {
    -(x.len() as f64) * sd.ln() - x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sd * sd)
}

struct Tuner {
    scale: [f64; 8],
    tries: [usize; 8],
    accepts: [usize; 8],
}

impl Tuner {
    fn record(&mut self, block: usize, accepted: bool) {
        self.tries[block] += 1;
        self.accepts[block] += usize::from(accepted);
    }

    fn rate(&self, block: usize) -> Option<f64> {
        (self.tries[block] > 0).then(|| self.accepts[block] as f64 / self.tries[block] as f64)
    }

    /// Nudges every scale towards the target acceptance and clears counts.
    fn adapt(&mut self) {
        for k in 0..BLOCKS.len() {
            if let Some(rate) = self.rate(k) {
                self.scale[k] *= ((rate - TARGET_ACCEPT) * 2.0).exp();
            }
        }
        self.reset();
    }

    fn reset(&mut self) {
        self.tries = [0; 8];
        self.accepts = [0; 8];
    }
}

fn accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

struct ChainOut {
    beta0: Vec<f64>,
    beta1: Vec<Vec<f64>>,
    beta2: Vec<Vec<f64>>,
    sigma1: Vec<f64>,
    sigma2: Vec<f64>,
    r: Vec<f64>,
    pi: Vec<Vec<f64>>,
    b: Vec<Vec<bool>>,
    rates: [Option<f64>; 8],
}

fn run_chain(m: &AgreementMatrix, cfg: &NetworkConfig, chain: usize) -> ChainOut {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let l = m.levels();
    let a: Vec<f64> = m.counts.iter().map(|&c| c as f64).collect();
    let mean_count = a.iter().sum::<f64>() / a.len() as f64;
    let mut st = State {
        l,
        b0: (mean_count + 0.5).ln(),
        b1: vec![0.0; l],
        b2: vec![0.0; l],
        s1: 1.0,
        s2: 1.0,
        r: cfg.fixed_r.unwrap_or(1.0),
        pi: vec![0.5; l * l],
        b: (0..l * l).map(|_| rng.random_bool(0.5)).collect(),
        a,
    };
    let mut tuner = Tuner { scale: [0.1, 0.1, 0.1, 0.3, 0.3, 0.3, 0.3, 0.3], tries: [0; 8], accepts: [0; 8] };
    let keep = cfg.retained_per_chain();
    let mut out = ChainOut {
        beta0: Vec::with_capacity(keep),
        beta1: Vec::with_capacity(keep),
        beta2: Vec::with_capacity(keep),
        sigma1: Vec::with_capacity(keep),
        sigma2: Vec::with_capacity(keep),
        r: Vec::with_capacity(keep),
        pi: Vec::with_capacity(keep),
        b: Vec::with_capacity(keep),
        rates: [None; 8],
    };
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    for it in 0..cfg.iterations {
        // incidence and link probabilities
        let log1r = (1.0 + st.r).ln();
        for k in st.all() {
            let (i, j) = (k / l, k % l);
            let e = (st.b0 + st.b1[i] + st.b2[j]).exp();
            let p = st.pi[k].clamp(1e-300, 1.0 - 1e-16);
            let logit = (p / (1.0 - p)).ln() + st.a[k] * log1r - st.r * e;
            st.b[k] = rng.random::<f64>() < crate::stats::logistic(logit);
            let (x, y) = if st.b[k] { (1.5, 0.5) } else { (0.5, 1.5) };
            st.pi[k] = Beta::new(x, y).expect("positive shapes").sample(&mut rng);
        }

        // intercept
        let prop = st.b0 + tuner.scale[0] * normal(&mut rng);
        let ratio = st.loglik_cells(prop, &st.b1, &st.b2, st.r, st.all())
            - st.loglik_cells(st.b0, &st.b1, &st.b2, st.r, st.all())
            + normal_lp(&[prop], BETA0_SD)
            - normal_lp(&[st.b0], BETA0_SD);
        let ok = accept(&mut rng, ratio);
        tuner.record(0, ok);
        if ok {
            st.b0 = prop;
        }

        // row and column effects, one component at a time
        for i in 0..l {
            let mut b1 = st.b1.clone();
            b1[i] += tuner.scale[1] * normal(&mut rng);
            let row = || i * l..(i + 1) * l;
            let ratio = st.loglik_cells(st.b0, &b1, &st.b2, st.r, row())
                - st.loglik_cells(st.b0, &st.b1, &st.b2, st.r, row())
                + normal_lp(&[b1[i]], st.s1)
                - normal_lp(&[st.b1[i]], st.s1);
            let ok = accept(&mut rng, ratio);
            tuner.record(1, ok);
            if ok {
                st.b1 = b1;
            }
        }
        for j in 0..l {
            let mut b2 = st.b2.clone();
            b2[j] += tuner.scale[2] * normal(&mut rng);
            let col = || (0..l).map(move |i| i * l + j);
            let ratio = st.loglik_cells(st.b0, &st.b1, &b2, st.r, col())
                - st.loglik_cells(st.b0, &st.b1, &st.b2, st.r, col())
                + normal_lp(&[b2[j]], st.s2)
                - normal_lp(&[st.b2[j]], st.s2);
            let ok = accept(&mut rng, ratio);
            tuner.record(2, ok);
            if ok {
                st.b2 = b2;
            }
        }

        // The likelihood only sees b0 + b1_i + b2_j, so trading a constant
        // between b0 and a whole effect vector moves along the ridge the
        // one-at-a-time updates crawl over. Only the priors change.
        for blk in [6usize, 7] {
            let d = tuner.scale[blk] * normal(&mut rng);
            let (effects, sd) = if blk == 6 { (&st.b1, st.s1) } else { (&st.b2, st.s2) };
            let moved: Vec<f64> = effects.iter().map(|x| x - d).collect();
            let ratio = normal_lp(&[st.b0 + d], BETA0_SD) - normal_lp(&[st.b0], BETA0_SD) + normal_lp(&moved, sd)
                - normal_lp(effects, sd);
            let ok = accept(&mut rng, ratio);
            tuner.record(blk, ok);
            if ok {
                st.b0 += d;
                if blk == 6 {
                    st.b1 = moved;
                } else {
                    st.b2 = moved;
                }
            }
        }

        // scales, flat on (0, 5)
        for (blk, which) in [(3usize, 1u8), (4, 2)] {
            let (cur, effects) = if which == 1 { (st.s1, &st.b1) } else { (st.s2, &st.b2) };
            let prop = cur + tuner.scale[blk] * normal(&mut rng);
            let ok =
                prop > 0.0 && prop < SIGMA_MAX && accept(&mut rng, normal_lp(effects, prop) - normal_lp(effects, cur));
            tuner.record(blk, ok);
            if ok {
                if which == 1 {
                    st.s1 = prop;
                } else {
                    st.s2 = prop;
                }
            }
        }

        // link premium, on the log scale with its Jacobian
        if cfg.fixed_r.is_none() {
            let prop = st.r * (tuner.scale[5] * normal(&mut rng)).exp();
            let linked = || st.all().filter(|&k| st.b[k]);
            let ratio = st.loglik_cells(st.b0, &st.b1, &st.b2, prop, linked())
                - st.loglik_cells(st.b0, &st.b1, &st.b2, st.r, linked())
                - cfg.r_rate * (prop - st.r)
                + (prop / st.r).ln();
            let ok = accept(&mut rng, ratio);
            tuner.record(5, ok);
            if ok {
                st.r = prop;
            }
        }

        if it < cfg.warmup {
            if (it + 1) % 50 == 0 {
                tuner.adapt();
            }
            if it + 1 == cfg.warmup {
                tuner.reset();
            }
            continue;
        }
        if (it - cfg.warmup) % cfg.thin == 0 {
            out.beta0.push(st.b0);
            out.beta1.push(st.b1.clone());
            out.beta2.push(st.b2.clone());
            out.sigma1.push(st.s1);
            out.sigma2.push(st.s2);
            out.r.push(st.r);
            out.pi.push(st.pi.clone());
            out.b.push(st.b.clone());
        }
    }
    for k in 0..BLOCKS.len() {
        out.rates[k] = tuner.rate(k);
    }
    out
}

/// Gibbs-within-Metropolis fit. Chains run in parallel on independent
/// streams; each sweep is sequential.
pub fn fit_agreement_network(m: &AgreementMatrix, cfg: &NetworkConfig) -> Result<NetworkPosterior, AgreementError> {
    cfg.validate()?;
    let chains = crate::par::map_indexed(cfg.chains, |c| run_chain(m, cfg, c));
    let mut post = NetworkPosterior {
        labels: m.labels.clone(),
        chains: cfg.chains,
        beta0: Vec::new(),
        beta1: Vec::new(),
        beta2: Vec::new(),
        sigma1: Vec::new(),
        sigma2: Vec::new(),
        r: Vec::new(),
        pi: Vec::new(),
        b: Vec::new(),
        acceptance: Vec::new(),
        nonconvergent: false,
    };
    for (k, name) in BLOCKS.iter().enumerate() {
        let rates: Vec<f64> = chains.iter().filter_map(|c| c.rates[k]).collect();
        if rates.is_empty() {
            continue;
        }
        if rates.iter().any(|&r| r < COLLAPSED) {
            post.nonconvergent = true;
        }
        post.acceptance.push((name.to_string(), rates.iter().sum::<f64>() / rates.len() as f64));
    }
    for c in chains {
        post.beta0.extend(c.beta0);
        post.beta1.extend(c.beta1);
        post.beta2.extend(c.beta2);
        post.sigma1.extend(c.sigma1);
        post.sigma2.extend(c.sigma2);
        post.r.extend(c.r);
        post.pi.extend(c.pi);
        post.b.extend(c.b);
    }
    if post.nonconvergent {
        log::warn!("agreement network: a Metropolis block stopped accepting");
    }
    Ok(post)
}

/// Simulates a table from the model with the given incidence.
pub fn simulate_matrix<R: Rng>(
    labels: Vec<String>,
    b0: f64,
    b1: &[f64],
    b2: &[f64],
    r: f64,
    b: &[bool],
    rng: &mut R,
) -> AgreementMatrix {
    let l = labels.len();
    let counts = (0..l * l)
        .map(|k| {
            let mu = (b0 + b1[k / l] + b2[k % l]).exp() * if b[k] { 1.0 + r } else { 1.0 };
            rand_distr::Poisson::new(mu).expect("positive mean").sample(rng) as u64
        })
        .collect();
    AgreementMatrix::new(labels, counts).expect("square")
}
