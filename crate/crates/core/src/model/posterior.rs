use nalgebra::{DMatrix, DVector};

use crate::priors::{component_sum_to_zero, icar_logdensity, random_walk_logdensity, SUM_TO_ZERO_SD_PER_LEVEL};
use crate::sampler::{run_chains, LogDensity, PosteriorDraws, SamplerConfig};
use crate::stats::{log1p_exp, logistic};

use super::{Design, Layout, Likelihood, ModelError, ModelSpec, Observations, PriorKind, ALPHA_SD};

/// Joint log-posterior of a spec on compressed observations.
///
/// Normalizing constants that do not depend on parameters are dropped,
/// except inside the random-walk term.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    spec: &'a ModelSpec,
    obs: &'a Observations,
    layout: Layout,
}

impl<'a> Posterior<'a> {
    pub fn new(spec: &'a ModelSpec, obs: &'a Observations) -> Result<Self, ModelError> {
        spec.validate()?;
        if obs.rows() == 0 {
            return Err(ModelError::NoObservations);
        }
        if obs.design.components != spec.components.len()
            || obs.design.covariates != spec.covariates.names.len()
            || obs.choices != spec.choices.len()
        {
            return Err(ModelError::Mismatch("observations were built for a different spec".into()));
        }
        Ok(Posterior { spec, obs, layout: spec.layout() })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn log_posterior(&self, q: &[f64]) -> Result<f64, ModelError> {
        let mut g = vec![0.0; self.layout.dim()];
        self.checked(q, &mut g)
    }

    pub fn grad_log_posterior(&self, q: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut g = vec![0.0; self.layout.dim()];
        self.checked(q, &mut g)?;
        Ok(g)
    }

    /// Runs the sampler and labels the draws with the layout's names.
    ///
    /// Vectors under a Gaussian structured prior (random walks, ICAR `psi`)
    /// are sampled in prior-whitened coordinates `q = A w` with
    /// `A' P A = I`, `P` the prior precision including the soft sum-to-zero
    /// term. The map is linear, so the target changes by a constant only;
    /// draws are mapped back before returning.
    pub fn sample(&self, cfg: &SamplerConfig) -> Result<PosteriorDraws, ModelError> {
        let whitened = Whitened { post: self, maps: self.whitening_maps() };
        let mut draws = run_chains(&whitened, cfg)?;
        let dim = self.layout.dim();
        for row in draws.values.chunks_mut(dim) {
            for m in &whitened.maps {
                m.apply(row, false);
            }
        }
        Ok(draws.with_names(self.layout.scalar_names(), self.layout.blocks.clone()))
    }

    fn whitening_maps(&self) -> Vec<Whitening> {
        let mut maps = Vec::new();
        for gl in &self.layout.groups {
            for (comp, cl) in self.spec.components.iter().zip(&gl.components) {
                let k = comp.levels;
                let mut p = DMatrix::<f64>::zeros(k, k);
                match &comp.prior {
                    PriorKind::RandomWalk => {
                        for u in 1..k {
                            p[(u, u)] += 1.0;
                            p[(u - 1, u - 1)] += 1.0;
                            p[(u, u - 1)] -= 1.0;
                            p[(u - 1, u)] -= 1.0;
                        }
                        let sd = SUM_TO_ZERO_SD_PER_LEVEL * k as f64;
                        p.add_scalar_mut(1.0 / (sd * sd));
                        maps.push(Whitening::new(cl.z, p));
                    }
                    PriorKind::Bym2 { graph, scaling } => {
                        for &(a, b) in graph.edges() {
                            p[(a, a)] += 1.0;
                            p[(b, b)] += 1.0;
                            p[(a, b)] -= 1.0;
                            p[(b, a)] -= 1.0;
                        }
                        for members in graph.component_members() {
                            let c = scaling.component[members[0]];
                            let sd = SUM_TO_ZERO_SD_PER_LEVEL * scaling.component_sizes[c] as f64;
                            for &a in &members {
                                for &b in &members {
                                    p[(a, b)] += 1.0 / (sd * sd);
                                }
                            }
                        }
                        maps.push(Whitening::new(cl.psi.expect("bym2 layout"), p));
                    }
                    PriorKind::Unstructured => {}
                }
            }
        }
        maps
    }

    /// Log-likelihood alone, with its gradient written into `grad`.
    pub fn log_likelihood(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.eval(q, grad, false)
    }

    fn checked(&self, q: &[f64], grad: &mut [f64]) -> Result<f64, ModelError> {
        assert_eq!(q.len(), self.layout.dim(), "parameter vector length");
        grad.iter_mut().for_each(|g| *g = 0.0);
        let lp = self.eval(q, grad, true);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(lp);
        }
        let bad = (0..q.len())
            .find(|&i| !q[i].is_finite())
            .or_else(|| (0..q.len()).find(|&i| !grad[i].is_finite()))
            .map(|i| self.layout.block_of(i).name.clone())
            .unwrap_or_else(|| "likelihood".into());
        Err(ModelError::NonFinite { block: bad })
    }

    fn eval(&self, q: &[f64], grad: &mut [f64], with_prior: bool) -> f64 {
        let spec = self.spec;
        let obs = self.obs;
        let design = &obs.design;
        let effects = spec.effects(&self.layout, q);
        let groups = effects.len();
        let ncomp = spec.components.len();
        let p = design.covariates;

        // d loglik / d eta accumulated onto alpha, beta and each gamma.
        let mut dgamma: Vec<Vec<Vec<f64>>> =
            effects.iter().map(|e| e.gammas.iter().map(|g| vec![0.0; g.len()]).collect()).collect();
        let mut dalpha = vec![0.0; groups];
        let mut dbeta = vec![vec![0.0; p]; groups];
        let mut eta = vec![0.0; groups];
        let mut d = vec![0.0; groups];
        let mut lp = 0.0;
        let offset = spec.offset();

        for r in 0..obs.rows() {
            let lv = design.levels_of(r);
            let x = design.x_row(r);
            for (g, e) in effects.iter().enumerate() {
                let mut v = offset + e.alpha;
                for c in 0..ncomp {
                    v += e.gammas[c][lv[c] as usize];
                }
                for k in 0..p {
                    v += e.beta[k] * x[k];
                }
                eta[g] = v;
            }
            let n = obs.trials[r];
            match spec.likelihood {
                Likelihood::Bernoulli { choice, .. } => {
                    let k = obs.count(r, choice);
                    // one exp serves both log1p_exp and logistic
                    let v = eta[0];
                    let e = (-v.abs()).exp();
                    let p = if v >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                    lp += k * v - n * (v.max(0.0) + e.ln_1p());
                    d[0] = k - n * p;
                }
                Likelihood::Multinomial => {
                    let m = eta.iter().fold(0.0f64, |a, &b| a.max(b));
                    let mut s = (-m).exp();
                    for &e in &eta {
                        s += (e - m).exp();
                    }
                    let lse = m + s.ln();
                    for g in 0..groups {
                        let c = obs.count(r, g);
                        lp += c * eta[g];
                        d[g] = c - n * (eta[g] - lse).exp();
                    }
                    lp -= n * lse;
                }
            }
            for g in 0..groups {
                let dg = d[g];
                dalpha[g] += dg;
                for k in 0..p {
                    dbeta[g][k] += dg * x[k];
                }
                for c in 0..ncomp {
                    dgamma[g][c][lv[c] as usize] += dg;
                }
            }
        }

        for (g, gl) in self.layout.groups.iter().enumerate() {
            let e = &effects[g];
            grad[gl.alpha] += dalpha[g];
            for k in 0..p {
                grad[gl.beta + k] += dbeta[g][k];
            }
            if with_prior {
                let a = e.alpha;
                lp -= 0.5 * a * a / (ALPHA_SD * ALPHA_SD);
                grad[gl.alpha] -= a / (ALPHA_SD * ALPHA_SD);
                for k in 0..p {
                    let b = e.beta[k];
                    lp -= 0.5 * b * b;
                    grad[gl.beta + k] -= b;
                }
            }
            for (c, comp) in spec.components.iter().enumerate() {
                let cl = &gl.components[c];
                let dg = &dgamma[g][c];
                let gamma = &e.gammas[c];
                let s = q[cl.log_sigma];
                let sigma = s.exp();
                let k = comp.levels;
                // d gamma / d log_sigma = gamma for every prior kind.
                grad[cl.log_sigma] += gamma.iter().zip(dg).map(|(a, b)| a * b).sum::<f64>();
                match &comp.prior {
                    PriorKind::Unstructured | PriorKind::RandomWalk => {
                        for l in 0..k {
                            grad[cl.z + l] += sigma * dg[l];
                        }
                    }
                    PriorKind::Bym2 { scaling, .. } => {
                        let t = q[cl.xi.expect("bym2 layout")];
                        let psi0 = cl.psi.expect("bym2 layout");
                        let xi = logistic(t);
                        let a = (1.0 - xi).sqrt();
                        let sx = xi.sqrt();
                        let mut dt = 0.0;
                        for l in 0..k {
                            if scaling.island[l] {
                                grad[cl.z + l] += sigma * dg[l];
                                continue;
                            }
                            let inv = scaling.node_inv_sqrt[l];
                            let phi = q[cl.z + l];
                            let psi = q[psi0 + l];
                            grad[cl.z + l] += sigma * a * dg[l];
                            grad[psi0 + l] += sigma * sx * inv * dg[l];
                            dt += dg[l] * sigma * (-0.5 * phi * xi * a + 0.5 * psi * inv * sx * (1.0 - xi));
                        }
                        grad[cl.xi.unwrap()] += dt;
                    }
                }
                if !with_prior {
                    continue;
                }
                // half-normal scale on the log scale, with Jacobian
                lp += -0.5 * sigma * sigma + s;
                grad[cl.log_sigma] += 1.0 - sigma * sigma;
                match &comp.prior {
                    PriorKind::Unstructured => {
                        for l in 0..k {
                            let z = q[cl.z + l];
                            lp -= 0.5 * z * z;
                            grad[cl.z + l] -= z;
                        }
                    }
                    PriorKind::RandomWalk => {
                        lp += random_walk_logdensity(&q[cl.z..cl.z + k], &mut grad[cl.z..cl.z + k])
                            .expect("validated random-walk length");
                    }
                    PriorKind::Bym2 { graph, scaling } => {
                        for l in 0..k {
                            let phi = q[cl.z + l];
                            lp -= 0.5 * phi * phi;
                            grad[cl.z + l] -= phi;
                        }
                        let psi0 = cl.psi.unwrap();
                        let (psi, gpsi) = (&q[psi0..psi0 + k], &mut grad[psi0..psi0 + k]);
                        lp += icar_logdensity(psi, graph, gpsi).expect("graph matches levels");
                        lp += component_sum_to_zero(psi, scaling, gpsi);
                        // Beta(1/2, 1/2) on xi plus the logit Jacobian
                        let t = q[cl.xi.unwrap()];
                        lp += -0.5 * log1p_exp(-t) - 0.5 * log1p_exp(t);
                        grad[cl.xi.unwrap()] += 0.5 - logistic(t);
                    }
                }
            }
        }
        lp
    }
}

/// `q[start..start + k] = A w[start..start + k]` with `A = L^-T`, where
/// `P = L L'` is the block's prior precision.
struct Whitening {
    start: usize,
    a: DMatrix<f64>,
    at: DMatrix<f64>,
}

impl Whitening {
    fn new(start: usize, precision: DMatrix<f64>) -> Self {
        let l = precision.cholesky().expect("structured prior precision is positive definite").l();
        let a = l.transpose().try_inverse().expect("triangular factor with positive diagonal");
        let at = a.transpose();
        Whitening { start, a, at }
    }

    /// `forward = false` maps whitened to model coordinates; `true` applies
    /// `A'`, which is how gradients move the other way.
    fn apply(&self, v: &mut [f64], transpose: bool) {
        let k = self.a.nrows();
        let seg = &mut v[self.start..self.start + k];
        let x = DVector::from_column_slice(seg);
        let y = if transpose { &self.at * x } else { &self.a * x };
        seg.copy_from_slice(y.as_slice());
    }
}

struct Whitened<'p, 'a> {
    post: &'p Posterior<'a>,
    maps: Vec<Whitening>,
}

impl LogDensity for Whitened<'_, '_> {
    fn dim(&self) -> usize {
        self.post.layout.dim()
    }

    fn log_density_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let mut q = w.to_vec();
        for m in &self.maps {
            m.apply(&mut q, false);
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let lp = self.post.eval(&q, grad, true);
        for m in &self.maps {
            m.apply(grad, true);
        }
        lp
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.eval(q, grad, true)
    }
}

/// Linear predictor of group `group` on every design row, plus `offset`.
pub fn linear_predictor(spec: &ModelSpec, q: &[f64], design: &Design, group: usize, offset: f64) -> Vec<f64> {
    let layout = spec.layout();
    let e = &spec.effects(&layout, q)[group];
    (0..design.rows)
        .map(|r| {
            let lv = design.levels_of(r);
            let x = design.x_row(r);
            offset
                + e.alpha
                + e.gammas.iter().zip(lv).map(|(g, &l)| g[l as usize]).sum::<f64>()
                + e.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{AdjacencyGraph, Attribute, CovariateTables, DayDomain, Respondent, Schema, SurveyDataset};
    use crate::model::{unstructured_variant, Likelihood};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

    struct Fixture {
        schema: Schema,
        graph: AdjacencyGraph,
        cov: CovariateTables,
    }

    fn fixture() -> Fixture {
        let schema = Schema {
            attributes: vec![
                Attribute::new("area", 4, false),
                Attribute::new("age", 3, true),
                Attribute::new("sex", 2, false),
            ],
            area: "area".into(),
            day: Some(DayDomain { count: 3, column: "day".into() }),
            state_covariates: vec!["z".into()],
            day_covariates: vec!["w".into()],
            state_day_covariates: vec![],
            choices: vec!["a".into(), "b".into(), "c".into()],
            weight_column: "weight".into(),
            choice_column: "choice".into(),
        };
        // area 4 is an island
        let graph = AdjacencyGraph::from_edges(4, &[(1, 2), (2, 3)]).unwrap();
        let cov = CovariateTables::new(
            &schema,
            vec![vec![0.3], vec![-1.2], vec![2.0], vec![0.1]],
            vec![vec![1.0], vec![0.0], vec![-0.5]],
            vec![],
        )
        .unwrap();
        Fixture { schema, graph, cov }
    }

    fn random_survey(rng: &mut ChaCha8Rng, n: usize, choices: usize) -> SurveyDataset {
        let rs = (0..n)
            .map(|_| Respondent {
                choice: rng.random_range(0..choices),
                levels: vec![rng.random_range(0..4), rng.random_range(0..3), rng.random_range(0..2)],
                day: Some(rng.random_range(0..3)),
            })
            .collect();
        SurveyDataset::new(rs).unwrap()
    }

    fn random_q(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
        (0..dim).map(|_| sd * (2.0 * rng.random::<f64>() - 1.0)).collect()
    }

    fn specs(f: &Fixture) -> Vec<ModelSpec> {
        let bern = |c| Likelihood::Bernoulli { choice: c, offset: 0.0 };
        let mut out = Vec::new();
        for structured in [true, false] {
            let b = ModelSpec::from_schema(&f.schema, Some(&f.graph), bern(1), structured).unwrap();
            out.push(b.clone());
            out.push(b.with_offset(0.539).unwrap());
            out.push(ModelSpec::from_schema(&f.schema, Some(&f.graph), Likelihood::Multinomial, structured).unwrap());
        }
        out
    }

    fn build(f: &Fixture, spec: &mut ModelSpec, survey: &SurveyDataset) -> Observations {
        spec.fit_standardization(&f.schema, survey, &f.cov).unwrap();
        Observations::build(spec, &f.schema, survey, &f.cov).unwrap()
    }

    /// Straight-line log posterior, one respondent at a time.
    fn oracle(f: &Fixture, spec: &ModelSpec, survey: &SurveyDataset, q: &[f64]) -> f64 {
        let layout = spec.layout();
        let blk = |name: &str| layout.block(name).unwrap().start;
        let prefixes: Vec<String> = match spec.likelihood {
            Likelihood::Bernoulli { .. } => vec![String::new()],
            Likelihood::Multinomial => vec!["a:".into(), "b:".into()],
        };
        let mut lp = 0.0;
        let mut gammas = Vec::new();
        for pre in &prefixes {
            let a = q[blk(&format!("{pre}alpha"))];
            lp += -0.5 * (a / 10.0).powi(2);
            let b0 = blk(&format!("{pre}beta"));
            lp += -0.5 * (q[b0] * q[b0] + q[b0 + 1] * q[b0 + 1]);
            let mut gs = Vec::new();
            for c in &spec.components {
                let s = q[blk(&format!("{pre}log_sigma.{}", c.name))];
                let sigma = s.exp();
                lp += -0.5 * sigma * sigma + s;
                let k = c.levels;
                let g: Vec<f64> = match &c.prior {
                    PriorKind::Bym2 { scaling, .. } => {
                        let phi = &q[blk(&format!("{pre}phi.{}", c.name))..][..k];
                        let psi = &q[blk(&format!("{pre}psi.{}", c.name))..][..k];
                        let t = q[blk(&format!("{pre}logit_xi.{}", c.name))];
                        let xi = 1.0 / (1.0 + (-t).exp());
                        lp += 0.5 * xi.ln() + 0.5 * (1.0 - xi).ln();
                        lp += phi.iter().map(|p| -0.5 * p * p).sum::<f64>();
                        lp += -0.5 * (psi[0] - psi[1]).powi(2) - 0.5 * (psi[1] - psi[2]).powi(2);
                        let s1 = (psi[0] + psi[1] + psi[2]) / 0.03;
                        let s2 = psi[3] / 0.01;
                        lp += -0.5 * s1 * s1 - 0.5 * s2 * s2;
                        let eps = 1.0 / scaling.node_inv_sqrt[0].powi(2);
                        (0..k)
                            .map(|l| {
                                if l == 3 {
                                    sigma * phi[l]
                                } else {
                                    sigma * (phi[l] * (1.0 - xi).sqrt() + psi[l] * (xi / eps).sqrt())
                                }
                            })
                            .collect()
                    }
                    PriorKind::RandomWalk => {
                        let z = &q[blk(&format!("{pre}z.{}", c.name))..][..k];
                        for u in 1..k {
                            lp += -0.5 * (z[u] - z[u - 1]).powi(2) - LN_SQRT_2PI;
                        }
                        let sd = 0.01 * k as f64;
                        let sum: f64 = z.iter().sum();
                        lp += -0.5 * (sum / sd).powi(2) - sd.ln() - LN_SQRT_2PI;
                        z.iter().map(|v| sigma * v).collect()
                    }
                    PriorKind::Unstructured => {
                        let z = &q[blk(&format!("{pre}z.{}", c.name))..][..k];
                        lp += z.iter().map(|v| -0.5 * v * v).sum::<f64>();
                        z.iter().map(|v| sigma * v).collect()
                    }
                };
                gs.push(g);
            }
            gammas.push((a, [q[b0], q[b0 + 1]], gs));
        }
        let st = &spec.covariates;
        for r in &survey.respondents {
            let d = r.day.unwrap() as usize;
            let raw = [f.cov.state[r.levels[0] as usize][0], f.cov.day[d][0]];
            let x: Vec<f64> = (0..2).map(|k| (raw[k] - st.mean[k]) / st.sd[k]).collect();
            let eta: Vec<f64> = gammas
                .iter()
                .map(|(a, b, gs)| {
                    spec.offset()
                        + a
                        + b[0] * x[0]
                        + b[1] * x[1]
                        + gs[0][r.levels[0] as usize]
                        + gs[1][r.levels[1] as usize]
                        + gs[2][r.levels[2] as usize]
                        + gs[3][d]
                })
                .collect();
            match spec.likelihood {
                Likelihood::Bernoulli { choice, .. } => {
                    let p = 1.0 / (1.0 + (-eta[0]).exp());
                    lp += if r.choice == choice { p.ln() } else { (1.0 - p).ln() };
                }
                Likelihood::Multinomial => {
                    let denom = 1.0 + eta.iter().map(|e| e.exp()).sum::<f64>();
                    let num = if r.choice < 2 { eta[r.choice].exp() } else { 1.0 };
                    lp += (num / denom).ln();
                }
            }
        }
        lp
    }

    #[test]
    fn matches_straight_line_oracle() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for rep in 0..10 {
            let survey = random_survey(&mut rng, 5 + rep * 3, 3);
            for mut spec in specs(&f) {
                let obs = build(&f, &mut spec, &survey);
                let post = Posterior::new(&spec, &obs).unwrap();
                let q = random_q(&mut rng, spec.dim(), 1.0);
                let got = post.log_posterior(&q).unwrap();
                let want = oracle(&f, &spec, &survey, &q);
                assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let survey = random_survey(&mut rng, 40, 3);
        for mut spec in specs(&f) {
            let obs = build(&f, &mut spec, &survey);
            let post = Posterior::new(&spec, &obs).unwrap();
            for _ in 0..20 {
                let q = random_q(&mut rng, spec.dim(), 0.8);
                let g = post.grad_log_posterior(&q).unwrap();
                for i in 0..q.len() {
                    let h = 1e-5;
                    let (mut a, mut b) = (q.clone(), q.clone());
                    a[i] += h;
                    b[i] -= h;
                    let fd = (post.log_posterior(&a).unwrap() - post.log_posterior(&b).unwrap()) / (2.0 * h);
                    let err = (g[i] - fd).abs() / fd.abs().max(1.0);
                    assert!(err < 1e-5, "{}: {} vs {fd}", post.layout().block_of(i).name, g[i]);
                }
            }
        }
    }

    fn tiny_schema(choices: usize) -> Schema {
        Schema {
            attributes: vec![Attribute::new("area", 2, false), Attribute::new("sex", 2, false)],
            area: "area".into(),
            day: None,
            state_covariates: vec![],
            day_covariates: vec![],
            state_day_covariates: vec![],
            choices: (0..choices).map(|c| c.to_string()).collect(),
            weight_column: "weight".into(),
            choice_column: "choice".into(),
        }
    }

    fn one(choice: usize, sex: u32) -> Respondent {
        Respondent { choice, levels: vec![0, sex], day: None }
    }

    #[test]
    fn zero_predictor_likelihoods() {
        let cov = CovariateTables::empty();
        let s = tiny_schema(2);
        let spec = ModelSpec::from_schema(&s, None, Likelihood::Bernoulli { choice: 0, offset: 0.0 }, false).unwrap();
        let survey = SurveyDataset::new(vec![one(0, 0)]).unwrap();
        let obs = Observations::build(&spec, &s, &survey, &cov).unwrap();
        let post = Posterior::new(&spec, &obs).unwrap();
        let mut g = vec![0.0; spec.dim()];
        let ll = post.log_likelihood(&vec![0.0; spec.dim()], &mut g);
        assert!((ll + 2f64.ln()).abs() < 1e-15);

        let s = tiny_schema(3);
        let spec = ModelSpec::from_schema(&s, None, Likelihood::Multinomial, false).unwrap();
        let survey = SurveyDataset::new(vec![one(0, 0), one(2, 1), one(1, 1)]).unwrap();
        let obs = Observations::build(&spec, &s, &survey, &cov).unwrap();
        let post = Posterior::new(&spec, &obs).unwrap();
        let mut g = vec![0.0; spec.dim()];
        let ll = post.log_likelihood(&vec![0.0; spec.dim()], &mut g);
        assert!((ll + 3.0 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn hand_built_linear_predictor() {
        let s = tiny_schema(2);
        let spec = ModelSpec::from_schema(&s, None, Likelihood::Bernoulli { choice: 0, offset: 0.0 }, false).unwrap();
        let layout = spec.layout();
        let mut q = vec![0.0; spec.dim()];
        q[layout.block("alpha").unwrap().start] = 0.2;
        // sigma = 1 on the sex effect, z = (-1, 1); area effect stays 0
        let z = layout.block("z.sex").unwrap().start;
        q[z] = -1.0;
        q[z + 1] = 1.0;
        let design = Design { rows: 2, components: 2, covariates: 0, levels: vec![0, 0, 0, 1], x: vec![] };
        let mu = linear_predictor(&spec, &q, &design, 0, 0.0);
        assert!((mu[0] + 0.8).abs() < 1e-15 && (mu[1] - 1.2).abs() < 1e-15);
        let shifted = linear_predictor(&spec, &q, &design, 0, 0.539);
        for (a, b) in shifted.iter().zip(&mu) {
            assert!((a - b - 0.539).abs() < 1e-15);
        }
        let zero = linear_predictor(&spec, &vec![0.0; spec.dim()], &design, 0, 0.0);
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn intercept_score_without_data_is_gaussian() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let survey = random_survey(&mut rng, 10, 3);
        let mut spec = specs(&f).remove(0);
        let obs = build(&f, &mut spec, &survey);
        let post = Posterior::new(&spec, &obs).unwrap();
        let mut q = vec![0.0; spec.dim()];
        let a = post.layout().block("alpha").unwrap().start;
        q[a] = 1.7;
        let mut with = vec![0.0; q.len()];
        post.log_density_and_grad(&q, &mut with);
        let mut lik = vec![0.0; q.len()];
        post.log_likelihood(&q, &mut lik);
        assert!((with[a] - lik[a] + 1.7 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn two_choice_multinomial_matches_bernoulli() {
        let s = tiny_schema(2);
        let cov = CovariateTables::empty();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rs = (0..30).map(|_| one(rng.random_range(0..2), rng.random_range(0..2))).collect();
        let survey = SurveyDataset::new(rs).unwrap();
        let multi = ModelSpec::from_schema(&s, None, Likelihood::Multinomial, false).unwrap();
        let bern = multi.for_choice(0).unwrap();
        assert_eq!(multi.dim(), bern.dim());
        let om = Observations::build(&multi, &s, &survey, &cov).unwrap();
        let ob = Observations::build(&bern, &s, &survey, &cov).unwrap();
        let (pm, pb) = (Posterior::new(&multi, &om).unwrap(), Posterior::new(&bern, &ob).unwrap());
        for _ in 0..5 {
            let q = random_q(&mut rng, multi.dim(), 1.0);
            let (mut gm, mut gb) = (vec![0.0; q.len()], vec![0.0; q.len()]);
            let lm = pm.log_likelihood(&q, &mut gm);
            let lb = pb.log_likelihood(&q, &mut gb);
            assert!((lm - lb).abs() < 1e-10);
            for (a, b) in gm.iter().zip(&gb) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn respondent_order_does_not_matter() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let survey = random_survey(&mut rng, 60, 3);
        let mut rev = survey.respondents.clone();
        rev.reverse();
        let rev = SurveyDataset::new(rev).unwrap();
        for mut spec in specs(&f) {
            let a = build(&f, &mut spec, &survey);
            let b = Observations::build(&spec, &f.schema, &rev, &f.cov).unwrap();
            let q = random_q(&mut rng, spec.dim(), 1.0);
            let la = Posterior::new(&spec, &a).unwrap().log_posterior(&q).unwrap();
            let lb = Posterior::new(&spec, &b).unwrap().log_posterior(&q).unwrap();
            assert!((la - lb).abs() < 1e-9 * la.abs().max(1.0));
        }
    }

    /// Newton ascent on the intercept alone, all other parameters at 0.
    fn intercept_mle(post: &Posterior, a: usize) -> f64 {
        let mut q = vec![0.0; post.dim()];
        for _ in 0..100 {
            let h = 1e-4;
            let mut g = vec![0.0; q.len()];
            post.log_likelihood(&q, &mut g);
            let g0 = g[a];
            q[a] += h;
            post.log_likelihood(&q, &mut g);
            q[a] -= h;
            let hess = (g[a] - g0) / h;
            q[a] -= g0 / hess;
        }
        q[a]
    }

    #[test]
    fn offset_shifts_intercept_optimum() {
        let s = tiny_schema(2);
        let cov = CovariateTables::empty();
        let rs = vec![one(0, 0), one(0, 1), one(1, 0), one(0, 0), one(1, 1)];
        let survey = SurveyDataset::new(rs).unwrap();
        let spec = ModelSpec::from_schema(&s, None, Likelihood::Bernoulli { choice: 0, offset: 0.0 }, false).unwrap();
        let shifted = spec.clone().with_offset(0.539).unwrap();
        let obs = Observations::build(&spec, &s, &survey, &cov).unwrap();
        let a = spec.layout().block("alpha").unwrap().start;
        let m0 = intercept_mle(&Posterior::new(&spec, &obs).unwrap(), a);
        let m1 = intercept_mle(&Posterior::new(&shifted, &obs).unwrap(), a);
        assert!((m0 - (3.0f64 / 2.0).ln()).abs() < 1e-4);
        assert!((m1 - (m0 - 0.539)).abs() < 1e-4);
    }

    #[test]
    fn offset_gradient_equals_shifted_intercept_gradient() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let survey = random_survey(&mut rng, 30, 3);
        let mut plain = specs(&f).remove(0);
        let obs = build(&f, &mut plain, &survey);
        let shifted = plain.clone().with_offset(0.539).unwrap();
        let a = plain.layout().block("alpha").unwrap().start;
        let q = random_q(&mut rng, plain.dim(), 0.5);
        let mut q2 = q.clone();
        q2[a] += 0.539;
        let (mut g1, mut g2) = (vec![0.0; q.len()], vec![0.0; q.len()]);
        let l1 = Posterior::new(&shifted, &obs).unwrap().log_likelihood(&q, &mut g1);
        let l2 = Posterior::new(&plain, &obs).unwrap().log_likelihood(&q2, &mut g2);
        assert!((l1 - l2).abs() < 1e-10);
        for (x, y) in g1.iter().zip(&g2) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_input_names_the_block() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let survey = random_survey(&mut rng, 10, 3);
        let mut spec = unstructured_variant(&specs(&f).remove(0));
        let obs = build(&f, &mut spec, &survey);
        let post = Posterior::new(&spec, &obs).unwrap();
        let mut q = vec![0.0; spec.dim()];
        let b = post.layout().block("z.sex").unwrap().start;
        q[b] = f64::NAN;
        match post.log_posterior(&q) {
            Err(ModelError::NonFinite { block }) => assert_eq!(block, "z.sex"),
            other => panic!("{other:?}"),
        }
    }
}
