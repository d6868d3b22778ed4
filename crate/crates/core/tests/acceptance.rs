//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --release -p dame-core --test acceptance`.

mod common;

use std::time::Instant;

use common::{ari_by_pairs, emi_exhaustive, fd_relative_error, gp_dense_posterior, grad_instance, random_partition, random_similarity, tree_entropy};
use dame_core::bola::{expected_improvement, gpr_fit};
use dame_core::config::ExperimentConfig;
use dame_core::encoder::Encoder;
use dame_core::federation::{Role, Strategy};
use dame_core::harness::{execute, write_summary, RunResults};
use dame_core::metrics::{ari, nmi, Contingency};
use dame_core::sega::{delta_se, greedy_minimize, structural_entropy_2d, ClientGraph, PartitionSet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let worst = (0..20)
        .map(|seed| {
            let inst = grad_instance(seed);
            fd_relative_error(&inst.params, |p| inst.encoder_loss(p))
        })
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(worst < 1e-4 && secs < 30.0, format!("20 instances, max relative error {worst:.2e}, {secs:.1}s"))
}

fn gp_exactness() -> Verdict {
    let sets: [(&[f64], &[f64]); 4] = [
        (&[0.5, 1.0], &[0.2, 0.7]),
        (&[0.6, 0.9], &[0.9, 0.1]),
        (&[0.5, 0.75, 1.0], &[0.3, 0.8, 0.5]),
        (&[0.5, 0.665, 1.0], &[0.61, 0.6, 0.72]),
    ];
    let mut worst: f64 = 0.0;
    for (xs, ys) in sets {
        let gp = gpr_fit(xs, ys).expect("fit");
        let cands: Vec<f64> = (0..=50).map(|i| 0.5 + 0.01 * i as f64).collect();
        let (mu, sigma) = gp.posterior(&cands);
        for (i, &c) in cands.iter().enumerate() {
            let (m, v) = gp_dense_posterior(xs, ys, gp.kernel, c);
            worst = worst.max((mu[i] - m).abs()).max((sigma[i] * sigma[i] - v).abs());
        }
    }
    let ei = expected_improvement(0.0, 1.0, 0.0);
    verdict(
        worst < 1e-8 && (ei - 0.39894).abs() < 1e-4,
        format!("max posterior deviation {worst:.1e}, EI hand case {ei:.5}"),
    )
}

fn entropy_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_eval: f64 = 0.0;
    let mut worst_delta: f64 = 0.0;
    for case in 0..50 {
        let k = 2 + case % 7;
        let w = random_similarity(k, -0.5, &mut rng);
        let parts = random_partition(k, &mut rng);
        let g = ClientGraph::from_similarities(w.clone()).expect("graph");
        let ps = PartitionSet::new(parts.clone(), k).expect("partition");
        let h = structural_entropy_2d(&g, &ps).expect("entropy");
        worst_eval = worst_eval.max((h - tree_entropy(&w, &parts)).abs());
        if parts.len() >= 2 {
            let mut merged = parts[2..].to_vec();
            merged.push([parts[0].clone(), parts[1].clone()].concat());
            let after = structural_entropy_2d(&g, &PartitionSet::new(merged, k).expect("partition")).expect("entropy");
            worst_delta = worst_delta.max((after - h - delta_se(&g, &ps, 0, 1).expect("delta")).abs());
        }
    }
    let mut greedy_ok = true;
    for k in 2..=6 {
        for _ in 0..400 {
            let w = random_similarity(k, -1.0, &mut rng);
            let g = ClientGraph::from_similarities(w).expect("graph");
            let h = structural_entropy_2d(&g, &greedy_minimize(&g).expect("greedy")).expect("entropy");
            let single = structural_entropy_2d(&g, &PartitionSet::singletons(k)).expect("entropy");
            let whole = structural_entropy_2d(&g, &PartitionSet::whole(k)).expect("entropy");
            greedy_ok &= h <= single + 1e-12 && h <= whole + 1e-12;
        }
    }
    greedy_ok &= greedy_minimize(&ClientGraph::from_similarities(Array2::eye(1)).expect("graph")).expect("greedy").parts == vec![vec![0]];
    let mut w = Array2::eye(6);
    for i in 0..6 {
        for j in 0..6 {
            if i != j {
                w[[i, j]] = if (i < 3) == (j < 3) { 0.9 } else { 1e-6 };
            }
        }
    }
    w[[2, 3]] = 0.1;
    w[[3, 2]] = 0.1;
    let cliques = greedy_minimize(&ClientGraph::from_similarities(w).expect("graph")).expect("greedy").parts;
    let cliques_ok = cliques == vec![vec![0, 1, 2], vec![3, 4, 5]];
    verdict(
        worst_eval < 1e-9 && worst_delta < 1e-9 && greedy_ok && cliques_ok,
        format!(
            "evaluator gap {worst_eval:.1e}, delta gap {worst_delta:.1e}, greedy bound {}, cliques {cliques:?}",
            if greedy_ok { "holds" } else { "violated" }
        ),
    )
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ari: f64 = 0.0;
    for _ in 0..2000 {
        let n = rng.random_range(1..=12);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        worst_ari = worst_ari.max((ari(&a, &b).expect("ari") - ari_by_pairs(&a, &b)).abs());
    }
    let mut worst_emi: f64 = 0.0;
    for n in 2..=12usize {
        for a0 in 1..n {
            for b0 in 1..n {
                let p: Vec<usize> = (0..n).map(|i| usize::from(i >= a0)).collect();
                let t: Vec<usize> = (0..n).map(|i| usize::from(i >= b0)).collect();
                let emi = Contingency::new(&p, &t).expect("table").expected_mutual_info();
                worst_emi = worst_emi.max((emi - emi_exhaustive(n, a0, b0)).abs());
            }
        }
    }
    let labels = [0, 0, 1, 1, 2, 2, 2, 3];
    let renamed = [5, 5, 9, 9, 1, 1, 1, 0];
    let identity = nmi(&labels, &renamed).expect("nmi");
    verdict(
        worst_ari < 1e-12 && worst_emi < 1e-12 && identity == 1.0,
        format!("ARI gap {worst_ari:.1e}, EMI gap {worst_emi:.1e}, NMI(identical) {identity}"),
    )
}

fn short_run() -> RunResults {
    let mut cfg = ExperimentConfig::benchmark();
    cfg.seeds = vec![0];
    cfg.federation.rounds = 10;
    execute(&cfg, std::path::Path::new("")).expect("short run")
}

fn no_regression(run: &RunResults) -> Verdict {
    let dame = run.get(Strategy::Dame, 0).expect("dame run");
    let mut checked = 0;
    let mut bad = 0;
    for log in &dame.logs {
        for c in &log.clients {
            let (v, l) = (c.val_score.expect("val score"), c.val_local.expect("local score"));
            checked += 1;
            if v < l {
                bad += 1;
            }
        }
    }
    verdict(
        bad == 0 && checked == 60,
        format!("{checked} client-rounds, {bad} below the pure-local validation score"),
    )
}

fn communication(run: &RunResults) -> Verdict {
    let encoder = Encoder::new(run.config.federation.encoder.clone()).expect("encoder");
    let size = encoder.init_params(0).serialized_len() as u64;
    let mut bad = 0;
    for r in &run.runs {
        let expect = if r.strategy == Strategy::Local { 0 } else { 2 * size };
        bad += r.logs.iter().flat_map(|l| &l.clients).filter(|c| c.bytes != expect).count();
    }
    verdict(bad == 0, format!("parameter vector {size} bytes, {bad} mismatching client-rounds"))
}

fn determinism(first: &RunResults) -> Verdict {
    let second = short_run();
    let dir = tempfile::tempdir().expect("tempdir");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_summary(first, &a).expect("summary");
    write_summary(&second, &b).expect("summary");
    let same = std::fs::read(&a).expect("read") == std::fs::read(&b).expect("read");
    verdict(same, if same { "summaries byte-identical" } else { "summaries differ" })
}

/// Final-round NMI averaged over `clients`, then over seeds.
fn final_mean(run: &RunResults, strategy: Strategy, clients: &[usize]) -> f64 {
    let seeds = &run.config.seeds;
    seeds
        .iter()
        .map(|&s| {
            let last = run.get(strategy, s).expect("run").logs.last().expect("rounds");
            clients.iter().map(|&k| last.clients[k].scores.nmi).sum::<f64>() / clients.len() as f64
        })
        .sum::<f64>()
        / seeds.len() as f64
}

fn end_to_end(clean: &RunResults, secs: f64) -> Verdict {
    let all: Vec<usize> = (0..clean.roles.len()).collect();
    let local = final_mean(clean, Strategy::Local, &all);
    let fedavg = final_mean(clean, Strategy::FedAvg, &all);
    let dame = final_mean(clean, Strategy::Dame, &all);
    verdict(
        dame >= local + 0.02 && dame >= fedavg - 0.01 && secs < 600.0,
        format!("NMI local {local:.4}, fedavg {fedavg:.4}, dame {dame:.4} (gain {:+.4}), {secs:.0}s", dame - local),
    )
}

fn robustness(clean: &RunResults, attacked: &RunResults) -> Verdict {
    let honest: Vec<usize> = (0..attacked.roles.len()).filter(|&k| attacked.roles[k] == Role::Honest).collect();
    let poisoner = attacked.roles.iter().position(|&r| r == Role::ModelPoisoner).expect("poisoner");
    let drop = |s| final_mean(clean, s, &honest) - final_mean(attacked, s, &honest);
    let (d_fedavg, d_dame) = (drop(Strategy::FedAvg), drop(Strategy::Dame));
    let (mut isolated, mut rounds) = (0, 0);
    for &seed in &attacked.config.seeds {
        for log in attacked.get(Strategy::Dame, seed).expect("run").logs.iter().skip(2) {
            rounds += 1;
            if log.server.as_ref().expect("server log").partition.is_singleton(poisoner) {
                isolated += 1;
            }
        }
    }
    let rate = isolated as f64 / rounds as f64;
    verdict(
        d_dame <= d_fedavg && rate >= 0.9,
        format!("honest NMI drop fedavg {d_fedavg:+.4}, dame {d_dame:+.4}; poisoner isolated in {isolated}/{rounds} rounds ({:.0}%)", 100.0 * rate),
    )
}

fn main() {
    let mut lines: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |n, name, v: Verdict| {
        println!("criterion {n} {:<24} {} {}", name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        lines.push((n, name, v));
    };
    report(1, "gradient correctness", gradients());
    report(2, "GP exactness", gp_exactness());
    report(3, "structural entropy", entropy_oracle());
    report(4, "metric oracles", metric_oracles());
    let short = short_run();
    report(5, "BOLA no-regression", no_regression(&short));

    let start = Instant::now();
    let clean = execute(&ExperimentConfig::benchmark(), std::path::Path::new("")).expect("benchmark run");
    let secs = start.elapsed().as_secs_f64();
    report(6, "end-to-end gain", end_to_end(&clean, secs));
    let mut attack = ExperimentConfig::benchmark();
    attack.strategies = vec![Strategy::FedAvg, Strategy::Dame];
    attack.roles.model_poisoners = vec![5];
    let attacked = execute(&attack.normalized(), std::path::Path::new("")).expect("attack run");
    report(7, "robustness", robustness(&clean, &attacked));
    report(8, "communication bytes", communication(&short));
    report(9, "determinism", determinism(&short));

    let failed: Vec<usize> = lines.iter().filter(|(_, _, v)| !v.pass).map(|(n, _, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", lines.len());
    } else {
        println!("acceptance: {} of {} criteria fail: {failed:?}", failed.len(), lines.len());
        std::process::exit(1);
    }
}
