//! Communication rounds over simulated clients and one server.
//!
//! Three strategies share the client set: `Local` never communicates,
//! `FedAvg` overwrites every client with the sample-weighted mean, and
//! `Dame` combines personalized server aggregation, client-side λ search
//! and constrained local training. Clients only ever exchange
//! [`ParamVector`]s with the server; no code path reads another client's
//! data.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{default_trigger, poison_data, poison_model, DataPoisonConfig};
use crate::bola::{bola_search, BolaConfig, TraceEntry, Validation};
use crate::data::{project_homogeneous, Dataset, MessageGraph};
use crate::encoder::{AdamState, Encoder, EncoderConfig, ParamVector};
use crate::error::{Error, Result};
use crate::local_opt::{local_train_epoch, BatchLog, TrainConfig};
use crate::metrics::{cluster_and_score, ClusterScores};
use crate::sega::{
    aggregate_global, aggregation_weights, client_representation, gen_probe, greedy_minimize, similarity_matrix,
    PartitionSet, ProbeConfig,
};

/// Mixes a base seed with a path of identifiers (SplitMix64 finalizer).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

// purpose tags for derive_seed
const SEED_INIT: u64 = 1;
const SEED_TRAIN: u64 = 2;
const SEED_VAL: u64 = 3;
const SEED_EVAL: u64 = 4;
const SEED_MODEL_POISON: u64 = 5;
const SEED_DATA_POISON: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Local,
    FedAvg,
    Dame,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Local, Strategy::FedAvg, Strategy::Dame];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Local => "local",
            Strategy::FedAvg => "fedavg",
            Strategy::Dame => "dame",
        }
    }

    pub fn communicates(self) -> bool {
        self != Strategy::Local
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "local" => Ok(Strategy::Local),
            "fedavg" => Ok(Strategy::FedAvg),
            "dame" => Ok(Strategy::Dame),
            other => Err(Error::Config(format!("unknown strategy {other:?} (expected local, fedavg or dame)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    ModelPoisoner,
    DataPoisoner,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Honest => "honest",
            Role::ModelPoisoner => "model_poisoner",
            Role::DataPoisoner => "data_poisoner",
        }
    }
}

/// Everything a run needs besides the data, the roles and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    pub encoder: EncoderConfig,
    pub bola: BolaConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub data_poison: DataPoisonConfig,
    /// Maximum nodes per forward pass during validation and evaluation.
    pub eval_chunk: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            encoder: EncoderConfig::default(),
            bola: BolaConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            data_poison: DataPoisonConfig::default(),
            eval_chunk: 1024,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.eval_chunk == 0 {
            return Err(Error::Config("eval_chunk must be at least 1".into()));
        }
        self.encoder.validate()?;
        self.bola.validate()?;
        self.train.validate()?;
        self.probe.validate()
    }
}

/// Sample-count weighted mean `Σ_k (N_k / N) θ_k`.
pub fn fedavg_aggregate(locals: &[ParamVector], counts: &[usize]) -> Result<ParamVector> {
    if locals.len() != counts.len() || locals.is_empty() {
        return Err(Error::Data(format!("{} models with {} sample counts", locals.len(), counts.len())));
    }
    if counts.contains(&0) {
        return Err(Error::Data("every client needs a positive sample count".into()));
    }
    let total: usize = counts.iter().sum();
    let terms: Vec<(&ParamVector, f64)> = locals
        .iter()
        .zip(counts)
        .map(|(p, &n)| (p, n as f64 / total as f64))
        .collect();
    ParamVector::weighted_sum(&terms)
}

/// A simulated client. Its dataset and graph never leave this struct.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub role: Role,
    dataset: Dataset,
    graph: MessageGraph,
    pub theta: ParamVector,
    pub adam: AdamState,
    pub seed: u64,
}

impl ClientState {
    /// `dataset` is the client's clean corpus; data poisoners corrupt their
    /// own copy here.
    pub fn new(
        id: usize,
        dataset: Dataset,
        role: Role,
        theta0: ParamVector,
        run_seed: u64,
        poison: &DataPoisonConfig,
    ) -> Result<Self> {
        let dataset = if role == Role::DataPoisoner {
            let seed = derive_seed(run_seed, &[SEED_DATA_POISON, id as u64]);
            let target = match poison.target_event {
                Some(t) => t,
                None => *dataset
                    .event_ids()
                    .iter()
                    .next()
                    .ok_or_else(|| Error::Data("empty dataset".into()))?,
            };
            let trigger = default_trigger(&dataset, seed);
            poison_data(&dataset, poison.rate, target, &trigger, seed)?
        } else {
            dataset
        };
        if dataset.splits.train.is_empty() || dataset.splits.val.is_empty() || dataset.splits.test.is_empty() {
            return Err(Error::Data(format!("client {id}: every split must be non-empty")));
        }
        let graph = project_homogeneous(&dataset.messages)?;
        let adam = AdamState::new(theta0.len());
        Ok(Self {
            id,
            role,
            dataset,
            graph,
            theta: theta0,
            adam,
            seed: derive_seed(run_seed, &[id as u64]),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn graph(&self) -> &MessageGraph {
        &self.graph
    }

    pub fn train_count(&self) -> usize {
        self.dataset.splits.train.len()
    }

    fn validation<'a>(&'a self, encoder: &'a Encoder, cfg: &FederationConfig, round: usize) -> Validation<'a> {
        Validation {
            encoder,
            graph: &self.graph,
            nodes: &self.dataset.splits.val,
            fanouts: cfg.train.fanouts,
            chunk: cfg.eval_chunk,
            seed: derive_seed(self.seed, &[SEED_VAL, round as u64]),
        }
    }

    /// Parameters sent to the server this round.
    fn upload(&self, round: usize) -> Result<ParamVector> {
        match self.role {
            Role::ModelPoisoner => poison_model(&self.theta, derive_seed(self.seed, &[SEED_MODEL_POISON, round as u64])),
            _ => Ok(self.theta.clone()),
        }
    }

    fn train(&mut self, encoder: &Encoder, global: Option<&ParamVector>, cfg: &FederationConfig, round: usize) -> Result<Vec<BatchLog>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[SEED_TRAIN, round as u64]));
        let (theta, logs) = local_train_epoch(
            encoder,
            &self.theta,
            &mut self.adam,
            global,
            &self.graph,
            &self.dataset.splits.train,
            &cfg.train,
            &mut rng,
        )?;
        self.theta = theta;
        Ok(logs)
    }

    /// Clustering scores of the current model on the test split.
    pub fn evaluate(&self, encoder: &Encoder, cfg: &FederationConfig, round: usize) -> Result<ClusterScores> {
        let seed = derive_seed(self.seed, &[SEED_EVAL, round as u64]);
        let nodes = &self.dataset.splits.test;
        let h = encoder.embed(&self.theta, &self.graph, nodes, cfg.train.fanouts, cfg.eval_chunk, seed)?;
        let labels: Vec<u64> = nodes.iter().map(|&n| self.graph.labels[n]).collect();
        cluster_and_score(&h, &labels, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub upload: f64,
    pub server: f64,
    pub local_agg: f64,
    pub train: f64,
    pub eval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRound {
    pub client: usize,
    pub role: Role,
    pub scores: ClusterScores,
    /// Chosen interpolation weight (DAMe only).
    pub lambda: Option<f64>,
    /// Validation score at the chosen weight (DAMe only).
    pub val_score: Option<f64>,
    /// Validation score at λ = 1 (DAMe only).
    pub val_local: Option<f64>,
    pub bytes: u64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerLog {
    pub similarity: Vec<Vec<f64>>,
    pub partition: PartitionSet,
    /// `weights[u]` lists `(v, α_uv)` for the model dispatched to `u`.
    pub weights: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub clients: Vec<ClientRound>,
    pub server: Option<ServerLog>,
    pub bola_traces: Vec<Vec<TraceEntry>>,
    pub train_logs: Vec<Vec<BatchLog>>,
    pub timings: PhaseTimings,
}

/// Bytes moved per client per round: upload plus dispatch.
pub fn round_bytes(strategy: Strategy, params: &ParamVector) -> u64 {
    if strategy.communicates() {
        2 * params.serialized_len() as u64
    } else {
        0
    }
}

/// Simulation state for one strategy, one seed.
pub struct Federation {
    pub strategy: Strategy,
    pub config: FederationConfig,
    pub encoder: Encoder,
    pub clients: Vec<ClientState>,
    pub seed: u64,
}

impl Federation {
    pub fn new(strategy: Strategy, config: FederationConfig, datasets: Vec<Dataset>, roles: &[Role], seed: u64) -> Result<Self> {
        config.validate()?;
        if datasets.is_empty() {
            return Err(Error::Config("no clients".into()));
        }
        if roles.len() != datasets.len() {
            return Err(Error::Config(format!("{} roles for {} clients", roles.len(), datasets.len())));
        }
        let d_in = datasets[0].text_dim + 2;
        if config.encoder.d_in != d_in {
            return Err(Error::Config(format!(
                "encoder d_in is {} but the data has {} text dimensions (+2 temporal)",
                config.encoder.d_in, datasets[0].text_dim
            )));
        }
        let encoder = Encoder::new(config.encoder.clone())?;
        let theta0 = encoder.init_params(derive_seed(seed, &[SEED_INIT]));
        let clients = datasets
            .into_iter()
            .zip(roles)
            .enumerate()
            .map(|(id, (ds, &role))| ClientState::new(id, ds, role, theta0.clone(), seed, &config.data_poison))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            strategy,
            config,
            encoder,
            clients,
            seed,
        })
    }

    fn uploads(&self, round: usize) -> Result<Vec<ParamVector>> {
        self.clients
            .par_iter()
            .map(|c| c.upload(round).map_err(|e| e.in_phase(Some(c.id), round, "upload")))
            .collect()
    }

    fn sega(&self, uploads: &[ParamVector], round: usize) -> Result<(Vec<ParamVector>, ServerLog)> {
        let at = |e: Error| e.in_phase(None, round, "server");
        let probe = gen_probe(self.seed.wrapping_add(round as u64), self.encoder.config().d_in, &self.config.probe).map_err(at)?;
        let reps = uploads
            .par_iter()
            .map(|p| client_representation(&self.encoder, p, &probe))
            .collect::<Result<Vec<_>>>()
            .map_err(at)?;
        let graph = similarity_matrix(&reps).map_err(at)?;
        let partition = greedy_minimize(&graph).map_err(at)?;
        let weights = aggregation_weights(&graph, &partition).map_err(at)?;
        let globals = aggregate_global(&partition, &graph, uploads).map_err(at)?;
        let similarity = graph.w.rows().into_iter().map(|r| r.to_vec()).collect();
        Ok((
            globals,
            ServerLog {
                similarity,
                partition,
                weights,
            },
        ))
    }

    /// Uploads, averages and overwrites every client's parameters.
    pub fn fedavg_dispatch(&mut self, round: usize, timings: &mut PhaseTimings) -> Result<()> {
        let t = Instant::now();
        let ups = self.uploads(round)?;
        timings.upload = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let counts: Vec<usize> = self.clients.iter().map(|c| c.train_count()).collect();
        let g = fedavg_aggregate(&ups, &counts).map_err(|e| e.in_phase(None, round, "server"))?;
        timings.server = t.elapsed().as_secs_f64();
        for c in &mut self.clients {
            c.theta = g.clone();
        }
        Ok(())
    }

    /// Runs one communication round and returns its log.
    pub fn run_round(&mut self, round: usize) -> Result<RoundLog> {
        let mut timings = PhaseTimings::default();
        let k = self.clients.len();
        let mut server = None;
        let mut bola_traces = vec![Vec::new(); k];
        let mut picks: Vec<Option<(f64, f64, Option<f64>)>> = vec![None; k];

        let globals: Option<Vec<ParamVector>> = match self.strategy {
            Strategy::Local => None,
            Strategy::FedAvg => {
                self.fedavg_dispatch(round, &mut timings)?;
                None
            }
            Strategy::Dame => {
                let t = Instant::now();
                let ups = self.uploads(round)?;
                timings.upload = t.elapsed().as_secs_f64();
                let t = Instant::now();
                let (globals, log) = self.sega(&ups, round)?;
                timings.server = t.elapsed().as_secs_f64();
                server = Some(log);

                let t = Instant::now();
                let encoder = &self.encoder;
                let cfg = &self.config;
                let outcomes = self
                    .clients
                    .par_iter()
                    .zip(&globals)
                    .map(|(c, g)| {
                        bola_search(&c.theta, g, &c.validation(encoder, cfg, round), &cfg.bola)
                            .map_err(|e| e.in_phase(Some(c.id), round, "local aggregation"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                timings.local_agg = t.elapsed().as_secs_f64();
                for (u, out) in outcomes.into_iter().enumerate() {
                    let val_local = out.trace.iter().find(|e| e.lambda == 1.0).and_then(|e| e.score);
                    picks[u] = Some((out.lambda, out.score, val_local));
                    bola_traces[u] = out.trace;
                    self.clients[u].theta = out.theta;
                }
                Some(globals)
            }
        };

        let t = Instant::now();
        let encoder = &self.encoder;
        let cfg = &self.config;
        let train_logs = self
            .clients
            .par_iter_mut()
            .enumerate()
            .map(|(u, c)| {
                let g = globals.as_ref().map(|gs| &gs[u]);
                c.train(encoder, g, cfg, round).map_err(|e| e.in_phase(Some(u), round, "train"))
            })
            .collect::<Result<Vec<_>>>()?;
        timings.train = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let scores = self
            .clients
            .par_iter()
            .map(|c| c.evaluate(encoder, cfg, round).map_err(|e| e.in_phase(Some(c.id), round, "eval")))
            .collect::<Result<Vec<_>>>()?;
        timings.eval = t.elapsed().as_secs_f64();

        let clients = self
            .clients
            .iter()
            .zip(scores)
            .zip(&train_logs)
            .map(|((c, scores), logs)| {
                let pick = picks[c.id];
                ClientRound {
                    client: c.id,
                    role: c.role,
                    scores,
                    lambda: pick.map(|p| p.0),
                    val_score: pick.map(|p| p.1),
                    val_local: pick.and_then(|p| p.2),
                    bytes: round_bytes(self.strategy, &c.theta),
                    mean_loss: logs.iter().map(|l| l.total).sum::<f64>() / logs.len().max(1) as f64,
                }
            })
            .collect();
        Ok(RoundLog {
            round,
            clients,
            server,
            bola_traces,
            train_logs,
            timings,
        })
    }

    pub fn run(&mut self) -> Result<Vec<RoundLog>> {
        (0..self.config.rounds)
            .map(|r| {
                let log = self.run_round(r)?;
                let honest: Vec<f64> = log
                    .clients
                    .iter()
                    .filter(|c| c.role == Role::Honest)
                    .map(|c| c.scores.nmi)
                    .collect();
                log::info!(
                    "{} seed {} round {}: honest mean NMI {:.4}",
                    self.strategy,
                    self.seed,
                    r,
                    honest.iter().sum::<f64>() / honest.len().max(1) as f64
                );
                Ok(log)
            })
            .collect()
    }
}

/// Builds a federation and runs every round.
pub fn run_experiment(
    strategy: Strategy,
    config: &FederationConfig,
    datasets: Vec<Dataset>,
    roles: &[Role],
    seed: u64,
) -> Result<Vec<RoundLog>> {
    Federation::new(strategy, config.clone(), datasets, roles, seed)?.run()
}

/// Mean test score of the clients with role `Honest` in the last round.
pub fn final_honest_mean(logs: &[RoundLog], metric: impl Fn(&ClusterScores) -> f64) -> Option<f64> {
    let last = logs.last()?;
    let vals: Vec<f64> = last
        .clients
        .iter()
        .filter(|c| c.role == Role::Honest)
        .map(|c| metric(&c.scores))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Similarity rows of a server log as a matrix.
pub fn similarity_array(log: &ServerLog) -> Array2<f64> {
    let k = log.similarity.len();
    Array2::from_shape_fn((k, k), |(i, j)| log.similarity[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_clients, SplitFractions, SynthSpec};
    use crate::encoder::{Layout, Segment};
    use std::sync::Arc;

    fn pv(v: &[f64]) -> ParamVector {
        let layout = Arc::new(Layout::new(vec![Segment::new("x", &[v.len()])]));
        ParamVector::new(layout, v.to_vec()).unwrap()
    }

    #[test]
    fn fedavg_examples() {
        let m = fedavg_aggregate(&[pv(&[1.0, 1.0]), pv(&[3.0, 3.0])], &[5, 5]).unwrap();
        assert_eq!(m.values(), &[2.0, 2.0]);
        let m = fedavg_aggregate(&[pv(&[0.0, 0.0]), pv(&[4.0, 4.0])], &[1, 3]).unwrap();
        assert_eq!(m.values(), &[3.0, 3.0]);
        let one = pv(&[0.3, -2.0]);
        assert_eq!(fedavg_aggregate(&[one.clone()], &[7]).unwrap(), one);
        assert!(fedavg_aggregate(&[pv(&[1.0]), pv(&[1.0, 2.0])], &[1, 1]).is_err());
    }

    #[test]
    fn seeds_differ_by_path() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_eq!(derive_seed(9, &[4, 4]), derive_seed(9, &[4, 4]));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("FedAvg".parse::<Strategy>().unwrap(), Strategy::FedAvg);
        assert!("ditto".parse::<Strategy>().is_err());
    }

    pub(crate) fn tiny(k: usize) -> (FederationConfig, Vec<Dataset>) {
        let spec = SynthSpec {
            num_clients: k,
            events_per_client: 4,
            messages_per_event: 12,
            embed_dim: 4,
            ..SynthSpec::default()
        };
        let data = synthesize_clients(&spec, SplitFractions::default()).unwrap();
        let cfg = FederationConfig {
            rounds: 2,
            encoder: EncoderConfig {
                d_in: 6,
                d_hidden: 4,
                d_out: 4,
                heads: 2,
                ..EncoderConfig::default()
            },
            train: TrainConfig {
                batch_size: 16,
                fanouts: (8, 4),
                ..TrainConfig::default()
            },
            ..FederationConfig::default()
        };
        (cfg, data)
    }

    #[test]
    fn local_never_communicates() {
        let (cfg, data) = tiny(2);
        let logs = run_experiment(Strategy::Local, &cfg, data, &[Role::Honest; 2], 0).unwrap();
        assert!(logs.iter().flat_map(|l| &l.clients).all(|c| c.bytes == 0 && c.lambda.is_none()));
    }

    #[test]
    fn fedavg_clients_identical_after_dispatch() {
        let (cfg, data) = tiny(3);
        let mut fed = Federation::new(Strategy::FedAvg, cfg, data, &[Role::Honest; 3], 1).unwrap();
        fed.run_round(0).unwrap();
        assert_ne!(fed.clients[0].theta, fed.clients[1].theta);
        let ups: Vec<ParamVector> = fed.clients.iter().map(|c| c.theta.clone()).collect();
        let counts: Vec<usize> = fed.clients.iter().map(|c| c.train_count()).collect();
        let expect = fedavg_aggregate(&ups, &counts).unwrap();
        fed.fedavg_dispatch(1, &mut PhaseTimings::default()).unwrap();
        assert!(fed.clients.iter().all(|c| c.theta == expect));
    }

    #[test]
    fn dame_round_contract() {
        let (cfg, data) = tiny(3);
        let logs = run_experiment(Strategy::Dame, &cfg, data, &[Role::Honest; 3], 2).unwrap();
        for l in &logs {
            assert_eq!(l.clients.len(), 3);
            for c in &l.clients {
                let lambda = c.lambda.unwrap();
                assert!((0.5..=1.0).contains(&lambda));
                assert!(c.val_score.unwrap() >= c.val_local.unwrap());
                assert!(c.bytes > 0);
            }
            assert!(l.server.is_some());
        }
    }

    #[test]
    fn single_client_dame_reduces_to_local() {
        let (cfg, data) = tiny(1);
        let logs = run_experiment(Strategy::Dame, &cfg, data, &[Role::Honest], 3).unwrap();
        let server = logs[0].server.as_ref().unwrap();
        assert_eq!(server.partition, PartitionSet::singletons(1));
        assert_eq!(server.weights[0], vec![(0, 1.0)]);
    }

    #[test]
    fn data_poisoning_stays_on_its_client() {
        let (cfg, data) = tiny(3);
        let before: Vec<String> = data.iter().map(|d| serde_json::to_string(&d.messages).unwrap()).collect();
        let fed = Federation::new(
            Strategy::Dame,
            cfg,
            data,
            &[Role::Honest, Role::DataPoisoner, Role::Honest],
            0,
        )
        .unwrap();
        for c in &fed.clients {
            let now = serde_json::to_string(&c.dataset().messages).unwrap();
            assert_eq!(now == before[c.id], c.role == Role::Honest);
        }
    }

    #[test]
    fn mismatched_width_is_config_error() {
        let (mut cfg, data) = tiny(2);
        cfg.encoder.d_in = 9;
        let err = Federation::new(Strategy::Local, cfg, data, &[Role::Honest; 2], 0).err().unwrap();
        assert_eq!(err.kind(), crate::ErrorKind::Config);
    }
}
