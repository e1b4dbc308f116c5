//! Desk-scale run of S.0, S.4 and S.8 with a printed summary.

use mrp_core::frame::AdjacencyGraph;
use mrp_core::simstudy::{run_study, summarize_study, ScenarioSpec, SimConfig};

fn main() {
    let replicates = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut cfg = SimConfig { replicates, ..SimConfig::desk() };
    cfg.sampler.chains = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    cfg.sampler.thin = 2;
    let scenarios = ScenarioSpec::parse_list("S.0,S.4,S.8").expect("valid ids");
    let t = std::time::Instant::now();
    let reports = run_study(&cfg, &AdjacencyGraph::us_states(), &scenarios).expect("study runs");
    for r in &reports {
        for c in &r.choices {
            println!(
                "rep {} {} {} spb {:+.3} theta bias {:+.4} rmse {:.4} cov {:.2} div {}",
                r.replicate,
                r.scenario.label(),
                c.choice,
                c.sample_prevalence_bias,
                c.theta.bias,
                c.theta.rmse,
                c.theta.coverage,
                r.divergences
            );
        }
    }
    for s in summarize_study(&reports) {
        if s.target == "theta" {
            println!("{} {} {:.4} (+/- {:.4})", s.scenario, s.metric, s.mean, s.mc_error);
        }
    }
    for id in [4u8, 8] {
        let rows: Vec<_> = reports.iter().filter(|r| r.scenario.id() == id).flat_map(|r| &r.choices).collect();
        let rmse: Vec<f64> = rows.iter().map(|c| c.theta.rmse).collect();
        let spb: Vec<f64> = rows.iter().map(|c| c.sample_prevalence_bias.abs()).collect();
        println!("S.{id} spearman(rmse, |spb|) = {:?}", mrp_core::stats::spearman(&rmse, &spb));
    }
    eprintln!("elapsed {:?}", t.elapsed());
}
