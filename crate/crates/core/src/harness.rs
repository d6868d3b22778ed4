//! Batch entry points behind the command-line tool.
//!
//! `synth` writes generated corpora, `run` executes every configured
//! strategy for every repetition seed and writes per-seed logs plus a
//! summary, and `report` turns a finished run directory into curve and
//! comparison tables. Every file carries the config hash and the seed(s) it
//! was produced from. Wall-clock timings go to their own file so the other
//! outputs are byte-identical across reruns.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{hash_json, ExperimentConfig};
use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::federation::{run_experiment, RoundLog, Role, Strategy};
use crate::metrics::ClusterScores;

pub const MANIFEST: &str = "manifest.json";
pub const RUN_MANIFEST: &str = "run.json";
pub const SUMMARY: &str = "summary.csv";
pub const TIMINGS: &str = "timings.csv";
pub const CURVES: &str = "curves.csv";
pub const COMPARISON: &str = "comparison.csv";

const METRICS: [&str; 3] = ["nmi", "ami", "ari"];

fn metric(s: &ClusterScores, name: &str) -> f64 {
    match name {
        "nmi" => s.nmi,
        "ami" => s.ami,
        _ => s.ari,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFile {
    pub client: usize,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config_hash: String,
    pub seed: u64,
    pub spec_hash: String,
    pub spec: SynthSpec,
    pub text_dim: usize,
    pub files: Vec<SynthFile>,
}

/// Writes one record file per client and a manifest. `seed` replaces the
/// generation seed of the spec when given.
pub fn cmd_synth(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<SynthManifest> {
    let mut config = config.clone();
    let Some(spec) = config.data.synth.as_mut() else {
        return Err(Error::Config("synth needs a [data.synth] section".into()));
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let spec = spec.clone();
    config.data.validate()?;
    create_dir(out)?;
    let datasets = config.data.load(Path::new(""))?;
    let mut files = Vec::with_capacity(datasets.len());
    for (k, ds) in datasets.iter().enumerate() {
        let name = format!("client{k}.jsonl");
        let path = out.join(&name);
        ds.write_records(&path)?;
        files.push(SynthFile {
            client: k,
            file: name,
            sha256: file_sha256(&path)?,
        });
    }
    let manifest = SynthManifest {
        config_hash: config.hash(),
        seed: spec.seed,
        spec_hash: hash_json(&spec),
        text_dim: spec.embed_dim,
        spec,
        files,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    log::info!("wrote {} client files to {}", manifest.files.len(), out.display());
    Ok(manifest)
}

/// Logs of one strategy under one repetition seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub strategy: Strategy,
    pub seed: u64,
    pub logs: Vec<RoundLog>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub roles: Vec<Role>,
    /// Ordered by seed, then by strategy as listed in the config.
    pub runs: Vec<SeedRun>,
}

impl RunResults {
    pub fn get(&self, strategy: Strategy, seed: u64) -> Option<&SeedRun> {
        self.runs.iter().find(|r| r.strategy == strategy && r.seed == seed)
    }
}

/// Runs every (seed, strategy) pair of `config`. Pairs run concurrently;
/// results do not depend on scheduling.
pub fn execute(config: &ExperimentConfig, base: &Path) -> Result<RunResults> {
    config.validate()?;
    let datasets = config.data.load(base)?;
    let roles = config.roles()?;
    let jobs: Vec<(u64, Strategy)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.strategies.iter().map(move |&st| (s, st)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(seed, strategy)| {
            let start = Instant::now();
            let logs = run_experiment(strategy, &config.federation, datasets.clone(), &roles, seed)?;
            log::info!("{strategy} seed {seed} finished in {:.1}s", start.elapsed().as_secs_f64());
            Ok(SeedRun {
                strategy,
                seed,
                logs,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResults {
        config: config.clone(),
        config_hash: config.hash(),
        roles,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub config_hash: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub round: usize,
    pub client: usize,
    pub role: Role,
    pub nmi: f64,
    pub ami: f64,
    pub ari: f64,
    pub lambda: Option<f64>,
    pub val_score: Option<f64>,
    pub val_local: Option<f64>,
    pub bytes: u64,
    pub mean_loss: f64,
}

#[derive(Debug, Serialize)]
struct BolaRow<'a> {
    config_hash: &'a str,
    seed: u64,
    round: usize,
    client: usize,
    iteration: usize,
    acquisition: &'static str,
    lambda: f64,
    score: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ServerRow<'a> {
    config_hash: &'a str,
    seed: u64,
    round: usize,
    client: usize,
    part: usize,
    partition: String,
    similarity: String,
    weights: String,
}

#[derive(Debug, Serialize)]
struct TrainRow<'a> {
    config_hash: &'a str,
    seed: u64,
    strategy: Strategy,
    round: usize,
    client: usize,
    batch: usize,
    loss_local: f64,
    loss_global: Option<f64>,
    gate: f64,
    glecc: f64,
    total: f64,
}

#[derive(Debug, Serialize)]
struct TimingRow<'a> {
    config_hash: &'a str,
    seed: u64,
    strategy: Strategy,
    round: usize,
    upload: f64,
    server: f64,
    local_agg: f64,
    train: f64,
    eval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub roles: Vec<Role>,
    pub rounds: usize,
    pub config: ExperimentConfig,
}

pub fn rounds_file(seed: u64) -> String {
    format!("rounds_seed{seed}.csv")
}

fn seeds_label(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

/// Writes per-seed round, BOLA, server and training logs, the timing file,
/// the summary and the run manifest.
pub fn write_results(results: &RunResults, out: &Path) -> Result<()> {
    create_dir(out)?;
    let hash = results.config_hash.as_str();
    for &seed in &results.config.seeds {
        let runs: Vec<&SeedRun> = results.runs.iter().filter(|r| r.seed == seed).collect();
        let mut rounds = csv_writer(&out.join(rounds_file(seed)))?;
        let mut bola = csv_writer(&out.join(format!("bola_seed{seed}.csv")))?;
        let mut server = csv_writer(&out.join(format!("server_seed{seed}.csv")))?;
        let mut train = csv_writer(&out.join(format!("train_seed{seed}.csv")))?;
        for run in &runs {
            for log in &run.logs {
                for c in &log.clients {
                    rounds.serialize(RoundRow {
                        config_hash: hash.to_string(),
                        seed,
                        strategy: run.strategy,
                        round: log.round,
                        client: c.client,
                        role: c.role,
                        nmi: c.scores.nmi,
                        ami: c.scores.ami,
                        ari: c.scores.ari,
                        lambda: c.lambda,
                        val_score: c.val_score,
                        val_local: c.val_local,
                        bytes: c.bytes,
                        mean_loss: c.mean_loss,
                    })?;
                }
                for (client, trace) in log.bola_traces.iter().enumerate() {
                    for t in trace {
                        bola.serialize(BolaRow {
                            config_hash: hash,
                            seed,
                            round: log.round,
                            client,
                            iteration: t.iteration,
                            acquisition: t.acquisition.as_str(),
                            lambda: t.lambda,
                            score: t.score,
                        })?;
                    }
                }
                if let Some(sv) = &log.server {
                    let partition = sv.partition.render();
                    for (client, row) in sv.similarity.iter().enumerate() {
                        server.serialize(ServerRow {
                            config_hash: hash,
                            seed,
                            round: log.round,
                            client,
                            part: sv.partition.part_of(client),
                            partition: partition.clone(),
                            similarity: row.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
                            weights: sv.weights[client].iter().map(|(v, a)| format!("{v}:{a}")).collect::<Vec<_>>().join(" "),
                        })?;
                    }
                }
                for (client, batches) in log.train_logs.iter().enumerate() {
                    for b in batches {
                        train.serialize(TrainRow {
                            config_hash: hash,
                            seed,
                            strategy: run.strategy,
                            round: log.round,
                            client,
                            batch: b.batch,
                            loss_local: b.loss_local,
                            loss_global: b.loss_global.is_finite().then_some(b.loss_global),
                            gate: b.gate,
                            glecc: b.glecc,
                            total: b.total,
                        })?;
                    }
                }
            }
        }
        for w in [&mut rounds, &mut bola, &mut server, &mut train] {
            w.flush().map_err(|e| Error::io(out, e))?;
        }
    }

    let mut timings = csv_writer(&out.join(TIMINGS))?;
    for run in &results.runs {
        for log in &run.logs {
            let t = log.timings;
            timings.serialize(TimingRow {
                config_hash: hash,
                seed: run.seed,
                strategy: run.strategy,
                round: log.round,
                upload: t.upload,
                server: t.server,
                local_agg: t.local_agg,
                train: t.train,
                eval: t.eval,
            })?;
        }
    }
    timings.flush().map_err(|e| Error::io(out, e))?;

    write_summary(results, &out.join(SUMMARY))?;
    write_json(
        &out.join(RUN_MANIFEST),
        &RunManifest {
            config_hash: results.config_hash.clone(),
            seeds: results.config.seeds.clone(),
            strategies: results.config.strategies.clone(),
            roles: results.roles.clone(),
            rounds: results.config.federation.rounds,
            config: results.config.clone(),
        },
    )
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Final-round score of one client, or the honest-client mean when
/// `client` is `None`.
fn final_score(logs: &[RoundLog], client: Option<usize>, name: &str) -> f64 {
    let last = logs.last().expect("runs have at least one round");
    match client {
        Some(k) => metric(&last.clients[k].scores, name),
        None => {
            let vals: Vec<f64> = last
                .clients
                .iter()
                .filter(|c| c.role == Role::Honest)
                .map(|c| metric(&c.scores, name))
                .collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        }
    }
}

/// One row per client plus a final `mean` row over honest clients. Each
/// strategy gets a mean and a standard deviation across seeds per metric;
/// `gain_*` is the DAMe mean minus the Local mean.
pub fn write_summary(results: &RunResults, path: &Path) -> Result<()> {
    let cfg = &results.config;
    let has_gain = cfg.strategies.contains(&Strategy::Dame);
    let mut header = vec!["config_hash".to_string(), "seeds".into(), "client".into(), "role".into()];
    for s in &cfg.strategies {
        for m in METRICS {
            header.push(format!("{s}_{m}_mean"));
            header.push(format!("{s}_{m}_std"));
        }
    }
    if has_gain {
        header.extend(METRICS.iter().map(|m| format!("gain_{m}")));
    }
    let mut w = csv_writer(path)?;
    w.write_record(&header)?;
    let seeds = seeds_label(&cfg.seeds);
    let rows = (0..results.roles.len()).map(Some).chain(std::iter::once(None));
    for client in rows {
        let mut rec = vec![
            results.config_hash.clone(),
            seeds.clone(),
            client.map_or("mean".into(), |k| k.to_string()),
            client.map_or("honest".into(), |k| results.roles[k].as_str().to_string()),
        ];
        let mut means = BTreeMap::new();
        for &s in &cfg.strategies {
            for m in METRICS {
                let vals: Vec<f64> = cfg
                    .seeds
                    .iter()
                    .map(|&seed| final_score(&results.get(s, seed).expect("every pair ran").logs, client, m))
                    .collect();
                let (mean, std) = mean_std(&vals);
                means.insert((s, m), mean);
                rec.push(format!("{mean:.6}"));
                rec.push(format!("{std:.6}"));
            }
        }
        if has_gain {
            for m in METRICS {
                rec.push(format!("{:.6}", means[&(Strategy::Dame, m)] - means[&(Strategy::Local, m)]));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads the config at `config_path`, applies the overrides, runs it and
/// writes every output under `out`.
pub fn cmd_run(
    config_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
    strategy_override: Option<Vec<Strategy>>,
) -> Result<RunResults> {
    let config = ExperimentConfig::load(config_path)?
        .with_seed_override(seed_override)
        .with_strategy_override(strategy_override);
    config.validate()?;
    let results = execute(&config, &base_dir(config_path))?;
    write_results(&results, out)?;
    Ok(results)
}

fn read_rounds(path: &Path) -> Result<Vec<RoundRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
        .collect()
}

/// Writes `curves.csv` (one row per round, strategy and client with scores
/// averaged over seeds) and `comparison.csv` (final scores per metric and
/// client, one column per strategy, plus a DAMe − Local gain column).
pub fn cmd_report(out: &Path) -> Result<()> {
    let manifest_path = out.join(RUN_MANIFEST);
    if !manifest_path.is_file() {
        return Err(Error::Data(format!("{} holds no completed run", out.display())));
    }
    let manifest: RunManifest = read_json(&manifest_path)?;
    let k = manifest.roles.len();
    // (strategy, round, client) -> per-seed scores
    let mut cells: BTreeMap<(Strategy, usize, usize), Vec<ClusterScores>> = BTreeMap::new();
    for &seed in &manifest.seeds {
        for row in read_rounds(&out.join(rounds_file(seed)))? {
            if row.config_hash != manifest.config_hash {
                return Err(Error::Data(format!("{} mixes config hashes", rounds_file(seed))));
            }
            cells.entry((row.strategy, row.round, row.client)).or_default().push(ClusterScores {
                nmi: row.nmi,
                ami: row.ami,
                ari: row.ari,
            });
        }
    }
    let expected = manifest.strategies.len() * manifest.rounds * k;
    if cells.len() != expected || cells.values().any(|v| v.len() != manifest.seeds.len()) {
        return Err(Error::Data(format!("round logs in {} are incomplete", out.display())));
    }
    let avg = |v: &[ClusterScores], m: &str| v.iter().map(|s| metric(s, m)).sum::<f64>() / v.len() as f64;
    let seeds = seeds_label(&manifest.seeds);

    let curves_path = out.join(CURVES);
    let mut curves = csv_writer(&curves_path)?;
    curves.write_record(["config_hash", "seeds", "round", "strategy", "client", "role", "nmi", "ami", "ari"])?;
    for round in 0..manifest.rounds {
        for &s in &manifest.strategies {
            for client in 0..k {
                let v = &cells[&(s, round, client)];
                let mut rec = vec![
                    manifest.config_hash.clone(),
                    seeds.clone(),
                    round.to_string(),
                    s.to_string(),
                    client.to_string(),
                    manifest.roles[client].as_str().to_string(),
                ];
                rec.extend(METRICS.iter().map(|m| format!("{:.6}", avg(v, m))));
                curves.write_record(&rec)?;
            }
        }
    }
    curves.flush().map_err(|e| Error::io(&curves_path, e))?;

    let has_gain = manifest.strategies.contains(&Strategy::Dame);
    let last = manifest.rounds - 1;
    let cmp_path = out.join(COMPARISON);
    let mut cmp = csv_writer(&cmp_path)?;
    let mut header: Vec<String> = ["config_hash", "seeds", "metric", "client"].map(String::from).to_vec();
    header.extend(manifest.strategies.iter().map(Strategy::to_string));
    if has_gain {
        header.push("gain".into());
    }
    cmp.write_record(&header)?;
    let honest: Vec<usize> = (0..k).filter(|&c| manifest.roles[c] == Role::Honest).collect();
    for m in METRICS {
        for client in (0..k).map(Some).chain(std::iter::once(None)) {
            let score = |s: Strategy| match client {
                Some(c) => avg(&cells[&(s, last, c)], m),
                None => honest.iter().map(|&c| avg(&cells[&(s, last, c)], m)).sum::<f64>() / honest.len().max(1) as f64,
            };
            let mut rec = vec![
                manifest.config_hash.clone(),
                seeds.clone(),
                m.to_string(),
                client.map_or("mean".into(), |c| c.to_string()),
            ];
            rec.extend(manifest.strategies.iter().map(|&s| format!("{:.6}", score(s))));
            if has_gain {
                rec.push(format!("{:.6}", score(Strategy::Dame) - score(Strategy::Local)));
            }
            cmp.write_record(&rec)?;
        }
    }
    cmp.flush().map_err(|e| Error::io(&cmp_path, e))
}
