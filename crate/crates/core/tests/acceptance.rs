//! Acceptance criteria 1 to 10. Each prints one PASS/FAIL line; the test
//! fails if any criterion fails. `MRP_ACCEPTANCE=3,7` runs a subset while
//! iterating locally; the full run needs about 20 minutes on one core, most
//! of it in the desk-scale study.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use mrp_core::agreement::{
    fit_agreement_network, krippendorff_alpha, posterior_incidence, simulate_matrix, AgreementMatrix, Level,
    NetworkConfig, RatingPair,
};
use mrp_core::annotate::{
    annotate_batch, block_order, build_demo_prompt, build_location_prompt, load_users, parse_demo_answer, to_survey,
    user_seed, AnnotateConfig, FixtureTransport, UserRecord, BLOCKS,
};
use mrp_core::correction::{king_zeng_offset, load_prevalence};
use mrp_core::fixtures::write_election_fixture;
use mrp_core::frame::{
    load_covariates, load_frame, load_survey, AdjacencyGraph, Attribute, Cell, CovariateTables, DayDomain, Respondent,
    Schema, StratificationFrame, SurveyDataset,
};
use mrp_core::model::{Likelihood, ModelSpec, Observations, Posterior};
use mrp_core::par;
use mrp_core::poststrat::{aggregate, estimate_rows, normalize_turnout, predict_cells, CellPosterior};
use mrp_core::sampler::{ess, run_chains, LogDensity, SamplerConfig};
use mrp_core::simstudy::{run_study, summarize_study, ScenarioReport, ScenarioSpec, SimConfig};
use mrp_core::stats::{auc, spearman};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

// criterion 1
const C1_BIAS_GAP: f64 = 0.04;
const C1_S8_VS_S0: f64 = 0.02;
const C1_COVERAGE_GAP: f64 = 0.15;
const C1_REPLICATES: usize = 10;
// criterion 2
const C2_UNCORRECTED_RHO: f64 = 0.7;
const C2_CORRECTED_RHO: f64 = 0.4;
// criterion 3
const C3_REL_ERR: f64 = 1e-5;
const C3_POINTS: usize = 20;
// criterion 4
const C4_DIM: usize = 50;
const C4_Z: f64 = 4.0;
const C4_KS: f64 = 0.02;
const C4_DRAWS: usize = 10_000;
// criterion 5
const C5_REPLICATES: usize = 50;
const C5_DISTORTION: f64 = 3.0;
const C5_CORRECTED_COVERAGE: f64 = 0.8;
const C5_UNCORRECTED_COVERAGE: f64 = 0.3;
// criterion 6
const C6_FRAMES: usize = 100;
const C6_MAX_CELLS: usize = 20;
const C6_TOL: f64 = 1e-12;
// criterion 7
const C7_TOL: f64 = 1e-9;
const C7_UNITS: usize = 100_000;
const C7_INDEPENDENT: f64 = 0.02;
const C7_VOTE_ALPHA: f64 = 452003.0 / 706631.0;
// criterion 8
const C8_AUC: f64 = 0.9;
const C8_R: f64 = 5.0;
const C8_NULL_BAND: f64 = 0.05;
// criterion 9
const C9_SEEDS: usize = 10_000;
const C9_FIRST_BAND: f64 = 0.01;

struct Line {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: u8, name: &'static str, pass: bool, detail: String) -> Line {
    eprintln!("  [{id}] {} ({detail})", if pass { "pass" } else { "FAIL" });
    Line { id, name, pass, detail }
}

fn selected() -> Option<BTreeSet<u8>> {
    std::env::var("MRP_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
}

#[test]
fn acceptance() {
    let only = selected();
    let want = |id: u8| only.as_ref().is_none_or(|s| s.contains(&id));
    let mut lines = Vec::new();
    if want(3) {
        lines.push(gradients());
    }
    if want(4) {
        lines.push(sampler());
    }
    if want(5) {
        lines.push(king_zeng_recovery());
    }
    if want(6) {
        lines.push(poststrat_oracle());
    }
    if want(7) {
        lines.push(alpha_oracle());
    }
    if want(8) {
        lines.push(agreement_network());
    }
    if want(9) {
        lines.push(prompts());
    }
    if want(10) {
        lines.push(pipeline());
    }
    if want(1) || want(2) {
        let [a, b] = desk_study();
        lines.extend([a, b].into_iter().filter(|l| want(l.id)));
    }
    lines.sort_by_key(|l| l.id);
    // straight to the handle so the summary shows without --nocapture
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for l in &lines {
        let verdict = if l.pass { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {:>2} {:<31} {verdict}  {}", l.id, l.name, l.detail).unwrap();
    }
    drop(out);
    let failed: Vec<u8> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------- 1 and 2

fn theta_mean(summary: &[mrp_core::simstudy::SummaryRow], scenario: &str, metric: &str) -> f64 {
    summary
        .iter()
        .find(|r| r.scenario == scenario && r.target == "theta" && r.metric == metric)
        .map_or(f64::NAN, |r| r.mean)
}

fn rmse_vs_spb(reports: &[ScenarioReport], id: u8) -> f64 {
    let rows: Vec<_> = reports.iter().filter(|r| r.scenario.id() == id).flat_map(|r| &r.choices).collect();
    let rmse: Vec<f64> = rows.iter().map(|c| c.theta.rmse).collect();
    let spb: Vec<f64> = rows.iter().map(|c| c.sample_prevalence_bias.abs()).collect();
    spearman(&rmse, &spb).unwrap_or(f64::NAN)
}

fn desk_study() -> [Line; 2] {
    let t = Instant::now();
    let mut cfg = SimConfig { replicates: C1_REPLICATES, ..SimConfig::desk() };
    // four chains, thin 2: fits the single-core budget (see README)
    cfg.sampler.chains = 4;
    cfg.sampler.thin = 2;
    let p = &cfg.population;
    let setup = format!("N={} L={} n={} J={} reps={}", p.size, p.areas, cfg.n, p.choices, cfg.replicates);
    let scenarios = ScenarioSpec::parse_list("S.0,S.4,S.8").unwrap();
    let reports = run_study(&cfg, &AdjacencyGraph::us_states(), &scenarios).unwrap();
    let elapsed = t.elapsed().as_secs_f64() / 60.0;
    let s = summarize_study(&reports);
    let (b0, b4, b8) =
        (theta_mean(&s, "S.0", "abs_bias"), theta_mean(&s, "S.4", "abs_bias"), theta_mean(&s, "S.8", "abs_bias"));
    let (c4, c8) = (theta_mean(&s, "S.4", "coverage"), theta_mean(&s, "S.8", "coverage"));
    let pass1 = b4 - b8 >= C1_BIAS_GAP && (b8 - b0).abs() <= C1_S8_VS_S0 && c8 - c4 >= C1_COVERAGE_GAP;
    let flagged = reports.iter().filter(|r| r.flagged).count();
    let d1 = format!(
        "{setup}: |bias| S.0 {b0:.4} S.4 {b4:.4} S.8 {b8:.4} (gap {:.4} >= {C1_BIAS_GAP}, |S.8-S.0| {:.4} <= {C1_S8_VS_S0}); \
         coverage S.4 {c4:.3} S.8 {c8:.3} (gap {:.3} >= {C1_COVERAGE_GAP}); reference bias S.4 +0.093 S.8 +0.015; \
         {flagged} flagged fits; {elapsed:.1} min",
        b4 - b8,
        (b8 - b0).abs(),
        c8 - c4
    );
    let (r4, r8) = (rmse_vs_spb(&reports, 4), rmse_vs_spb(&reports, 8));
    let pass2 = r4 > C2_UNCORRECTED_RHO && r8 < C2_CORRECTED_RHO;
    let d2 = format!(
        "spearman(rmse, |sample prevalence bias|): S.4 {r4:.3} > {C2_UNCORRECTED_RHO}, S.8 {r8:.3} < {C2_CORRECTED_RHO}"
    );
    [line(1, "desk-scale bias and coverage", pass1, d1), line(2, "stimulus direction", pass2, d2)]
}

// ---------------------------------------------------------------------- 3

struct GradFixture {
    schema: Schema,
    graph: AdjacencyGraph,
    cov: CovariateTables,
    survey: SurveyDataset,
}

fn grad_fixture(rng: &mut ChaCha8Rng) -> GradFixture {
    let schema = Schema {
        attributes: vec![
            Attribute::new("area", 5, false),
            Attribute::new("age", 4, true),
            Attribute::new("sex", 2, false),
        ],
        area: "area".into(),
        day: Some(DayDomain { count: 4, column: "day".into() }),
        state_covariates: vec!["z".into()],
        day_covariates: vec!["w".into()],
        state_day_covariates: vec!["v".into()],
        choices: vec!["a".into(), "b".into(), "c".into()],
        weight_column: "weight".into(),
        choice_column: "choice".into(),
    };
    // a chain of four areas plus an island
    let graph = AdjacencyGraph::from_edges(5, &[(1, 2), (2, 3), (3, 4)]).unwrap();
    let mut r = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect() };
    let cov = CovariateTables::new(&schema, r(5), r(4), r(20)).unwrap();
    let respondents = (0..60)
        .map(|_| Respondent {
            choice: rng.random_range(0..3),
            levels: vec![rng.random_range(0..5), rng.random_range(0..4), rng.random_range(0..2)],
            day: Some(rng.random_range(0..4)),
        })
        .collect();
    GradFixture { schema, graph, cov, survey: SurveyDataset::new(respondents).unwrap() }
}

fn gradients() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let f = grad_fixture(&mut rng);
    let mut worst = 0.0f64;
    let mut configs = Vec::new();
    let mut rejected = 0;
    for multinomial in [false, true] {
        for structured in [true, false] {
            for offset in [false, true] {
                let lik = if multinomial {
                    Likelihood::Multinomial
                } else {
                    Likelihood::Bernoulli { choice: 1, offset: 0.0 }
                };
                let mut spec = ModelSpec::from_schema(&f.schema, Some(&f.graph), lik, structured).unwrap();
                spec.fit_standardization(&f.schema, &f.survey, &f.cov).unwrap();
                if offset {
                    match spec.clone().with_offset(0.731) {
                        Ok(s) => spec = s,
                        Err(_) => {
                            // the offset is defined for the one-vs-rest model only
                            rejected += 1;
                            continue;
                        }
                    }
                }
                let obs = Observations::build(&spec, &f.schema, &f.survey, &f.cov).unwrap();
                let post = Posterior::new(&spec, &obs).unwrap();
                let mut err_cfg = 0.0f64;
                for _ in 0..C3_POINTS {
                    let q: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-0.8..0.8)).collect();
                    let g = post.grad_log_posterior(&q).unwrap();
                    for i in 0..q.len() {
                        let h = 1e-5;
                        let (mut a, mut b) = (q.clone(), q.clone());
                        a[i] += h;
                        b[i] -= h;
                        let fd = (post.log_posterior(&a).unwrap() - post.log_posterior(&b).unwrap()) / (2.0 * h);
                        err_cfg = err_cfg.max((g[i] - fd).abs() / fd.abs().max(1.0));
                    }
                }
                worst = worst.max(err_cfg);
                configs.push(format!(
                    "{}{}{}",
                    if multinomial { "M" } else { "B" },
                    if structured { "s" } else { "u" },
                    if offset { "+o" } else { "" }
                ));
            }
        }
    }
    let pass = worst < C3_REL_ERR && configs.len() == 6 && rejected == 2;
    line(
        3,
        "gradient vs finite differences",
        pass,
        format!(
            "{} configs x {C3_POINTS} points [{}], max rel err {worst:.2e} < {C3_REL_ERR:e}; multinomial+offset rejected ({rejected})",
            configs.len(),
            configs.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------- 4

struct StdNormal(usize);

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }
    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for (g, x) in grad.iter_mut().zip(q) {
            lp -= 0.5 * x * x;
            *g = -x;
        }
        lp
    }
}

/// Two-sided KS statistic against the standard normal.
fn ks_normal(xs: &[f64]) -> f64 {
    let n = Normal::standard();
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = n.cdf(x);
            (c - i as f64 / m).abs().max(((i + 1) as f64 / m - c).abs())
        })
        .fold(0.0, f64::max)
}

fn sampler() -> Line {
    let cfg = SamplerConfig {
        chains: 4,
        iterations: 250 + C4_DRAWS / 4,
        warmup: 250,
        thin: 1,
        seed: 404,
        ..SamplerConfig::default()
    };
    let target = StdNormal(C4_DIM);
    let d = run_chains(&target, &cfg).unwrap();
    let mut zmax = 0.0f64;
    let mut ess_min = f64::INFINITY;
    for j in 0..C4_DIM {
        let col = d.column(j);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let e = ess(&d.chain_columns(j));
        ess_min = ess_min.min(e);
        zmax = zmax.max(mean.abs() / (sd / e.sqrt()));
    }
    let ks = ks_normal(&d.column(0));
    let short = SamplerConfig { iterations: 400, warmup: 200, seed: 405, ..cfg.clone() };
    let one = par::with_threads(1, || run_chains(&target, &short).unwrap());
    let four = par::with_threads(4, || run_chains(&target, &short).unwrap());
    let same = one.values == four.values && one.chain == four.chain;
    let pass = d.len() == C4_DRAWS && zmax < C4_Z && ks < C4_KS && same;
    line(
        4,
        "sampler on 50-dim normal",
        pass,
        format!(
            "{} draws, max |z| {zmax:.2} < {C4_Z} (min ess {ess_min:.0}), KS {ks:.4} < {C4_KS}, 1 vs 4 threads identical: {same}",
            d.len()
        ),
    )
}

// ---------------------------------------------------------------------- 5

const KZ_ALPHA: f64 = -2.0;
const KZ_BETA: f64 = 0.8;
const KZ_AREAS: usize = 20;
const KZ_POPULATION: usize = 100_000;
const KZ_SAMPLE: usize = 1_000;

/// One case-control replicate; returns whether the corrected and uncorrected
/// 90% intervals for the intercept contain the truth, and the offset used.
fn kz_replicate(rep: u64) -> (bool, bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(5_000 + rep);
    let x: Vec<f64> = (0..KZ_AREAS).map(|_| rng.sample(StandardNormal)).collect();
    let gamma: Vec<f64> = (0..KZ_AREAS).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut cases = Vec::new();
    let mut controls = Vec::new();
    for _ in 0..KZ_POPULATION {
        let a = rng.random_range(0..KZ_AREAS);
        let p = 1.0 / (1.0 + (-(KZ_ALPHA + KZ_BETA * x[a] + gamma[a])).exp());
        if rng.random_bool(p) {
            cases.push(a as u32);
        } else {
            controls.push(a as u32);
        }
    }
    let (big1, big0) = (cases.len() as f64, controls.len() as f64);
    // cases sampled at three times the rate of controls
    let n1 = (KZ_SAMPLE as f64 * C5_DISTORTION * big1 / (C5_DISTORTION * big1 + big0)).round() as usize;
    let n0 = KZ_SAMPLE - n1;
    let mut respondents = Vec::with_capacity(KZ_SAMPLE);
    for i in sample_indices(&mut rng, cases.len(), n1) {
        respondents.push(Respondent { choice: 0, levels: vec![cases[i]], day: None });
    }
    for i in sample_indices(&mut rng, controls.len(), n0) {
        respondents.push(Respondent { choice: 1, levels: vec![controls[i]], day: None });
    }
    let schema = Schema {
        attributes: vec![Attribute::new("area", KZ_AREAS, false)],
        area: "area".into(),
        day: None,
        state_covariates: vec!["x".into()],
        day_covariates: vec![],
        state_day_covariates: vec![],
        choices: vec!["case".into(), "control".into()],
        weight_column: "weight".into(),
        choice_column: "choice".into(),
    };
    let cov = CovariateTables::new(&schema, x.iter().map(|&v| vec![v]).collect(), vec![], vec![]).unwrap();
    let survey = SurveyDataset::new(respondents).unwrap();
    // covariates enter unstandardized so the intercept is the generating one
    let spec = ModelSpec::from_schema(&schema, None, Likelihood::Bernoulli { choice: 0, offset: 0.0 }, false).unwrap();
    let prevalence = big1 / KZ_POPULATION as f64;
    let offset = king_zeng_offset("case", n1 as f64, n0 as f64, prevalence, KZ_POPULATION as f64).unwrap();
    let obs = Observations::build(&spec, &schema, &survey, &cov).unwrap();
    let cfg = SamplerConfig {
        chains: 4,
        iterations: 1000,
        warmup: 500,
        thin: 1,
        seed: 6_000 + rep,
        ..SamplerConfig::default()
    };
    let covers = |s: &ModelSpec| {
        let draws = Posterior::new(s, &obs).unwrap().sample(&cfg).unwrap();
        let j = draws.names.iter().position(|n| n == "alpha").unwrap();
        let mut a = draws.column(j);
        a.sort_by(f64::total_cmp);
        let lo = mrp_core::stats::percentile_sorted(&a, 0.05);
        let hi = mrp_core::stats::percentile_sorted(&a, 0.95);
        lo < KZ_ALPHA && KZ_ALPHA < hi
    };
    let corrected = covers(&spec.clone().with_offset(offset).unwrap());
    let uncorrected = covers(&spec);
    (corrected, uncorrected, offset)
}

fn king_zeng_recovery() -> Line {
    let runs: Vec<(bool, bool, f64)> = (0..C5_REPLICATES as u64).map(kz_replicate).collect();
    let k = runs.len() as f64;
    let corrected = runs.iter().filter(|r| r.0).count() as f64 / k;
    let uncorrected = runs.iter().filter(|r| r.1).count() as f64 / k;
    let mean_offset = runs.iter().map(|r| r.2).sum::<f64>() / k;
    let pass = corrected >= C5_CORRECTED_COVERAGE && uncorrected <= C5_UNCORRECTED_COVERAGE;
    line(
        5,
        "case-control intercept recovery",
        pass,
        format!(
            "{C5_REPLICATES} replicates at {C5_DISTORTION}:1, mean offset {mean_offset:.3} (log 3 = {:.3}); \
             90% coverage corrected {corrected:.2} >= {C5_CORRECTED_COVERAGE}, uncorrected {uncorrected:.2} <= {C5_UNCORRECTED_COVERAGE}",
            C5_DISTORTION.ln()
        ),
    )
}

// ---------------------------------------------------------------------- 6

fn poststrat_oracle() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..C6_FRAMES {
        let (ka, kb) = (rng.random_range(1..=4u32), rng.random_range(1..=5u32));
        let schema = Schema {
            attributes: vec![Attribute::new("a", ka as usize, false), Attribute::new("b", kb as usize, false)],
            area: "a".into(),
            day: None,
            state_covariates: vec![],
            day_covariates: vec![],
            state_day_covariates: vec![],
            choices: (0..rng.random_range(2..=4)).map(|j| format!("c{j}")).collect(),
            weight_column: "weight".into(),
            choice_column: "choice".into(),
        };
        let all: Vec<(u32, u32)> = (0..ka).flat_map(|a| (0..kb).map(move |b| (a, b))).collect();
        let m = rng.random_range(1..=all.len().min(C6_MAX_CELLS));
        let cells: Vec<Cell> = sample_indices(&mut rng, all.len(), m)
            .into_iter()
            .map(|i| Cell { levels: vec![all[i].0, all[i].1], weight: rng.random_range(0.01..50.0) })
            .collect();
        let frame = StratificationFrame::new(&schema, cells).unwrap();
        let (j, n) = (schema.choices.len(), rng.random_range(1..=6));
        let values: Vec<f64> = (0..j * n * m).map(|_| rng.random_range(0.001..1.0)).collect();
        let cp = CellPosterior { choices: schema.choices.clone(), draws: n, cells: m, day: None, values };
        let parties: Vec<String> = schema.choices[..2].to_vec();
        let norm = normalize_turnout(&cp, &parties).unwrap();
        for margin in [vec![], vec!["a"], vec!["b"], vec!["a", "b"]] {
            let md = aggregate(&cp, &frame, &schema, &margin).unwrap();
            let cols: Vec<usize> = margin.iter().map(|x| schema.attribute_index(x).unwrap()).collect();
            for (l, key) in md.levels.iter().enumerate() {
                let members: Vec<usize> =
                    (0..m).filter(|&c| cols.iter().zip(key).all(|(&i, &v)| frame.cells()[c].levels[i] == v)).collect();
                let w: f64 = members.iter().map(|&c| frame.cells()[c].weight).sum();
                for choice in 0..j {
                    for d in 0..n {
                        let want: f64 =
                            members.iter().map(|&c| frame.cells()[c].weight * cp.get(choice, d, c)).sum::<f64>() / w;
                        worst = worst.max((md.series(l, choice)[d] - want).abs());
                        checked += 1;
                    }
                }
            }
            let nd = aggregate(&norm, &frame, &schema, &margin).unwrap();
            for l in 0..nd.levels.len() {
                for d in 0..n {
                    let s: f64 = (0..parties.len()).map(|p| nd.series(l, p)[d]).sum();
                    worst_sum = worst_sum.max((s - 1.0).abs());
                }
            }
        }
    }
    let pass = worst <= C6_TOL && worst_sum <= C6_TOL;
    line(
        6,
        "post-stratification oracle",
        pass,
        format!(
            "{C6_FRAMES} frames <= {C6_MAX_CELLS} cells, {checked} margin values: max |diff| {worst:.1e}, \
             max |turnout sum - 1| {worst_sum:.1e} (tol {C6_TOL:e})"
        ),
    )
}

// ---------------------------------------------------------------------- 7

/// Nominal alpha from a coincidence matrix built straight from a two-rater
/// contingency table.
fn coincidence_alpha(counts: &[u64], l: usize) -> f64 {
    let mut o = vec![0.0; l * l];
    for c in 0..l {
        for k in 0..l {
            let v = counts[c * l + k] as f64;
            o[c * l + k] += v;
            o[k * l + c] += v;
        }
    }
    let nc: Vec<f64> = (0..l).map(|c| (0..l).map(|k| o[c * l + k]).sum()).collect();
    let n: f64 = nc.iter().sum();
    let mut obs = 0.0;
    let mut exp = 0.0;
    for c in 0..l {
        for k in 0..l {
            if c != k {
                obs += o[c * l + k];
                exp += nc[c] * nc[k];
            }
        }
    }
    1.0 - (n - 1.0) * obs / exp
}

fn alpha_oracle() -> Line {
    let m = AgreementMatrix::vote_2020_example();
    let lib = krippendorff_alpha(&m.to_pairs(), Level::Nominal).unwrap();
    let oracle = coincidence_alpha(&m.counts, m.levels());
    let vote_ok =
        (lib.value - oracle).abs() < C7_TOL && (lib.value - C7_VOTE_ALPHA).abs() < C7_TOL && lib.pairable == 3537;

    let perfect: Vec<RatingPair> = (0..500).map(|i| (Some(i % 5), Some(i % 5))).collect();
    let one_label: Vec<RatingPair> = vec![(Some(2), Some(2)); 50];
    let p = krippendorff_alpha(&perfect, Level::Nominal).unwrap().value;
    let q = krippendorff_alpha(&one_label, Level::Nominal).unwrap().value;
    let perfect_ok = p == 1.0 && q == 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let indep: Vec<RatingPair> =
        (0..C7_UNITS).map(|_| (Some(rng.random_range(0..5)), Some(rng.random_range(0..5)))).collect();
    let r = krippendorff_alpha(&indep, Level::Nominal).unwrap().value;
    let pass = vote_ok && perfect_ok && r.abs() < C7_INDEPENDENT;
    line(
        7,
        "Krippendorff alpha",
        pass,
        format!(
            "vote table {:.12} vs oracle {oracle:.12} (|diff| {:.1e} < {C7_TOL:e}, 3537 units); perfect {p}, single label {q}; \
             independent raters ({C7_UNITS} units) {r:+.4}",
            lib.value,
            (lib.value - oracle).abs()
        ),
    )
}

// ---------------------------------------------------------------------- 8

fn agreement_network() -> Line {
    let l = 6;
    let labels: Vec<String> = (0..l).map(|i| format!("c{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth: Vec<bool> = (0..l * l).map(|k| k / l == k % l || rng.random_bool(0.2)).collect();
    let b1: Vec<f64> = (0..l).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let b2: Vec<f64> = (0..l).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let m = simulate_matrix(labels.clone(), 20f64.ln(), &b1, &b2, C8_R, &truth, &mut rng);
    let cfg = NetworkConfig { chains: 4, iterations: 1500, warmup: 1000, thin: 1, seed: 8, ..NetworkConfig::default() };
    let post = fit_agreement_network(&m, &cfg).unwrap();
    let inc = posterior_incidence(&post).concat();
    let a = auc(&inc, &truth).unwrap_or(f64::NAN);

    let null = simulate_matrix(labels, 20f64.ln(), &b1, &b2, 0.0, &truth, &mut rng);
    let ncfg = NetworkConfig { fixed_r: Some(0.0), chains: 4, iterations: 5000, warmup: 500, seed: 9, ..cfg };
    let npost = fit_agreement_network(&null, &ncfg).unwrap();
    let ninc = posterior_incidence(&npost).concat();
    let lo = ninc.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ninc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = a >= C8_AUC && (lo - 0.5).abs() <= C8_NULL_BAND && (hi - 0.5).abs() <= C8_NULL_BAND;
    line(
        8,
        "agreement network",
        pass,
        format!(
            "planted links, r={C8_R}: AUC {a:.3} >= {C8_AUC} over {} draws; r=0: incidence in [{lo:.3}, {hi:.3}] (0.5 +/- {C8_NULL_BAND})",
            post.len()
        ),
    )
}

// ---------------------------------------------------------------------- 9

const SAMPLE_ANSWER: &str = "HIGHEST EDUCATIONAL QUALIFICATION: Q2) completed high-school but did not go to college
THIS INDIVIDUAL IS REGISTERED AS: R2) a Democrat
ETHNICITY: E1) White
2016 US PRESIDENTIAL ELECTION VOTE: L3) voted for Hillary Clinton, the Democrat candidate
SEX: S1) Male
AGE: A5) 45 to 54 years old
MARITAL STATUS: M1) Married
2020 US PRESIDENTIAL ELECTION VOTE: V3) voted for Joe Biden, the Democrat candidate
2018 MIDTERM ELECTION VOTE: T3) voted for the Democratic Party
HOUSEHOLD INCOME BRACKET: H5) more than 100000 USD per year";

fn golden(name: &str) -> Vec<u8> {
    std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn prompts() -> Line {
    let user = UserRecord {
        id: "golden".into(),
        location: "Philly, PA".into(),
        bio: "Eagles fan. Philly born and raised.".into(),
        tweets: (1..=10).map(|k| format!("tweet number {k}: the debate was something else")).collect(),
        post_count: 10,
        day: None,
    };
    let loc_ok = build_location_prompt(&user).into_bytes() == golden("location_prompt.txt");
    let demo = build_demo_prompt(&user, 10, &mut ChaCha8Rng::seed_from_u64(2024)).unwrap();
    let demo_ok = demo.into_bytes() == golden("demo_prompt.txt");

    // the per-user seed derivation the annotator uses
    let mut first = [0usize; 10];
    for i in 0..C9_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(user_seed(1, &format!("user{i}")));
        first[block_order(&mut rng)[0]] += 1;
    }
    let freqs: Vec<f64> = first.iter().map(|&c| c as f64 / C9_SEEDS as f64).collect();
    let dev = freqs.iter().map(|f| (f - 0.1).abs()).fold(0.0, f64::max);

    let parsed = parse_demo_answer(SAMPLE_ANSWER).unwrap();
    let got: BTreeSet<String> = parsed.identifiers.iter().flatten().cloned().collect();
    let want: BTreeSet<String> =
        ["Q2", "R2", "E1", "L3", "S1", "A5", "M1", "V3", "T3", "H5"].iter().map(|s| s.to_string()).collect();
    let answer_ok = got == want && parsed.identifiers.len() == BLOCKS.len();
    let pass = loc_ok && demo_ok && dev <= C9_FIRST_BAND && answer_ok;
    line(
        9,
        "prompt fidelity",
        pass,
        format!(
            "golden location {loc_ok}, golden demographic {demo_ok}; first-block frequency over {C9_SEEDS} seeds \
             in [{:.4}, {:.4}] (0.1 +/- {C9_FIRST_BAND}); sample answer {:?}",
            freqs.iter().cloned().fold(f64::INFINITY, f64::min),
            freqs.iter().cloned().fold(0.0, f64::max),
            got
        ),
    )
}

// --------------------------------------------------------------------- 10

fn digest(paths: &[&Path]) -> Vec<Vec<u8>> {
    paths.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn pipeline() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let f = write_election_fixture(dir.path(), 400, 1010).unwrap();
    let inputs = [
        f.users.as_path(),
        f.replies.as_path(),
        f.frame.as_path(),
        f.survey.as_path(),
        f.prevalence.as_path(),
        f.state_covariates.as_path(),
        f.day_covariates.as_path(),
        f.state_day_covariates.as_path(),
    ];
    let before = digest(&inputs);
    let schema = Schema::election_2020();

    let users = load_users(&f.users).unwrap();
    let transport = FixtureTransport::load(&f.replies).unwrap();
    let ann =
        annotate_batch(&users, &transport, &AnnotateConfig { concurrency: 4, ..AnnotateConfig::default() }).unwrap();
    let survey = to_survey(&ann, &schema).unwrap();
    let decoded = survey.respondents == load_survey(&f.survey, &schema).unwrap().respondents;

    let cov =
        load_covariates(&schema, Some(&f.state_covariates), Some(&f.day_covariates), Some(&f.state_day_covariates))
            .unwrap();
    let frame = load_frame(&f.frame, &schema).unwrap();
    let graph = AdjacencyGraph::us_states();
    let table = load_prevalence(&f.prevalence, &schema.choices).unwrap();
    let j = schema.choices.len();
    let counts: Vec<f64> = survey.choice_counts(j).iter().map(|&c| c as f64).collect();
    let offsets = table.offsets(&schema.choices, &counts, frame.total_weight()).unwrap();
    let mut base = ModelSpec::from_schema(&schema, Some(&graph), Likelihood::Multinomial, true).unwrap();
    base.fit_standardization(&schema, &survey, &cov).unwrap();
    let specs: Vec<ModelSpec> = (0..j).map(|c| base.for_choice(c).unwrap().with_offset(offsets[c]).unwrap()).collect();
    let obs = Observations::build(&specs[0], &schema, &survey, &cov).unwrap();
    let cfg = SamplerConfig { chains: 2, iterations: 200, warmup: 100, thin: 1, seed: 10, ..SamplerConfig::default() };
    let fit = || -> Vec<_> { specs.iter().map(|s| Posterior::new(s, &obs).unwrap().sample(&cfg).unwrap()).collect() };
    let draws = fit();
    let repeat = fit().iter().zip(&draws).all(|(a, b)| a.values == b.values);
    let finite = draws.iter().all(|d| d.values.iter().all(|v| v.is_finite()));

    let last = Some(29);
    let parts: Vec<CellPosterior> =
        specs.iter().zip(&draws).map(|(s, d)| predict_cells(s, d, &schema, &frame, &cov, last).unwrap()).collect();
    let cp = CellPosterior::stack(parts).unwrap();
    let in_unit = cp.values.iter().all(|v| (0.0..=1.0).contains(v));
    let by_state = estimate_rows(&aggregate(&cp, &frame, &schema, &["state"]).unwrap(), &schema);
    let parties = vec!["R".to_string(), "D".to_string()];
    let two = aggregate(&normalize_turnout(&cp, &parties).unwrap(), &frame, &schema, &["state"]).unwrap();
    let mut worst_sum = 0.0f64;
    for l in 0..two.levels.len() {
        for d in 0..two.draws {
            worst_sum = worst_sum.max((two.series(l, 0)[d] + two.series(l, 1)[d] - 1.0).abs());
        }
    }
    let untouched = digest(&inputs) == before;
    let dropped = survey.dropped.len();
    let pass = decoded && repeat && finite && in_unit && by_state.len() == 51 * j && worst_sum <= C6_TOL && untouched;
    line(
        10,
        "synthetic end-to-end pipeline",
        pass,
        format!(
            "published election accuracy (e.g. D bias 0.02 for the 10-post annotated sample) is NOT reproducible: \
             the social-media corpus is unavailable. Synthetic corpus of {} users: decoded survey matches {decoded} \
             ({dropped} dropped), {} bias-corrected fits finite {finite} and repeatable {repeat}, {} state rows, \
             two-party sums within {worst_sum:.1e}, inputs untouched {untouched}",
            users.len(),
            draws.len(),
            by_state.len()
        ),
    )
}
