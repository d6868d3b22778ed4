//! Client-side training objective.
//!
//! Each mini-batch is encoded by the trainable model and by the frozen
//! global model. Besides the triplet loss, the trainable model is pulled
//! toward the global model's per-event centroids, weighted by a gate that
//! only switches the pull fully on when the global model does at least as
//! well on the batch's triplets.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_neighborhood, ComputationGraph, MessageGraph};
use crate::encoder::{adam_step, mine_triplets, triplet_loss_with, AdamConfig, AdamState, EmbeddingBatch, Encoder, ParamVector, Triplet};
use crate::error::{Error, Result};

/// Per-event means of a batch, rows in ascending event id.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCentroids {
    pub event_ids: Vec<u64>,
    pub h: Array2<f64>,
    /// Batch rows belonging to each event.
    pub members: Vec<Vec<usize>>,
}

/// `labels[i]` is the event of batch row `i`.
pub fn event_representation(batch: &EmbeddingBatch, labels: &[u64]) -> Result<EventCentroids> {
    if batch.h.nrows() == 0 {
        return Err(Error::Degenerate("event centroids of an empty batch".into()));
    }
    if labels.len() != batch.h.nrows() {
        return Err(Error::Data(format!("{} labels for {} rows", labels.len(), batch.h.nrows())));
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut h = Array2::zeros((groups.len(), batch.h.ncols()));
    for (row, rows) in groups.values().enumerate() {
        let mut acc = h.row_mut(row);
        for &i in rows {
            acc += &batch.h.row(i);
        }
        acc /= rows.len() as f64;
    }
    Ok(EventCentroids {
        event_ids: groups.keys().copied().collect(),
        h,
        members: groups.into_values().collect(),
    })
}

/// Mean Euclidean distance between the global and local event centroids,
/// and its gradient with respect to the local batch embeddings. The global
/// branch is a constant.
pub fn glecc_loss_and_grad(
    global: &EmbeddingBatch,
    local: &EmbeddingBatch,
    labels: &[u64],
) -> Result<(f64, Array2<f64>)> {
    if global.node_ids != local.node_ids {
        return Err(Error::Data("global and local batches cover different nodes".into()));
    }
    let cg = event_representation(global, labels)?;
    let cl = event_representation(local, labels)?;
    let n_events = cl.event_ids.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(local.h.raw_dim());
    for (e, members) in cl.members.iter().enumerate() {
        let diff = &cl.h.row(e) - &cg.h.row(e);
        let dist = diff.dot(&diff).sqrt();
        loss += dist;
        if dist > 0.0 {
            let d_centroid = diff / (dist * n_events * members.len() as f64);
            for &i in members {
                grad.row_mut(i).assign(&d_centroid);
            }
        }
    }
    Ok((loss / n_events, grad))
}

pub fn glecc_loss(global: &EmbeddingBatch, local: &EmbeddingBatch, labels: &[u64]) -> Result<f64> {
    glecc_loss_and_grad(global, local, labels).map(|(l, _)| l)
}

/// `exp(min(L_local − L_global, 0))`.
pub fn glecc_gate(loss_local: f64, loss_global: f64) -> f64 {
    (loss_local - loss_global).min(0.0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub fanouts: (usize, usize),
    /// When false the constraint weight is forced to 0.
    pub glecc: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            fanouts: (800, 100),
            glecc: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.fanouts.0 == 0 || self.fanouts.1 == 0 {
            return Err(Error::Config("fanouts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub loss_local: f64,
    pub loss_global: f64,
    pub gate: f64,
    pub glecc: f64,
    pub total: f64,
}

/// Total loss `L_t + gate·L_glecc` of one batch with fixed triplets and a
/// fixed gate, and its gradient with respect to `params`. `global` holds
/// the frozen model's embeddings of the same batch.
#[allow(clippy::too_many_arguments)]
pub fn gated_objective(
    encoder: &Encoder,
    params: &ParamVector,
    cg: &ComputationGraph,
    features: &Array2<f64>,
    batch_labels: &[u64],
    triplets: &[Triplet],
    global: Option<&EmbeddingBatch>,
    gate: f64,
) -> Result<(f64, ParamVector)> {
    let (local, cache) = encoder.forward_with_cache(params, cg, features)?;
    let (lt, mut d_h) = triplet_loss_with(&local.h, triplets, encoder.config().margin);
    let mut total = lt;
    if let Some(g) = global {
        let (lg, d_g) = glecc_loss_and_grad(g, &local, batch_labels)?;
        total += gate * lg;
        d_h.scaled_add(gate, &d_g);
    }
    let grad = encoder.backprop(params, &cache, &d_h)?;
    Ok((total, grad))
}

/// One pass over `train_nodes` in shuffled mini-batches with one Adam step
/// per batch. `theta_g` is the frozen global model; without it (or with
/// the constraint disabled) training is triplet-only.
#[allow(clippy::too_many_arguments)]
pub fn local_train_epoch<R: Rng + ?Sized>(
    encoder: &Encoder,
    theta: &ParamVector,
    adam: &mut AdamState,
    theta_g: Option<&ParamVector>,
    graph: &MessageGraph,
    train_nodes: &[usize],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(ParamVector, Vec<BatchLog>)> {
    config.validate()?;
    if train_nodes.is_empty() {
        return Err(Error::Degenerate("empty training split".into()));
    }
    if let Some(g) = theta_g {
        theta.check_layout(g)?;
    }
    let mut params = theta.clone();
    let mut order = train_nodes.to_vec();
    order.shuffle(rng);
    let mut logs = Vec::new();
    for (b, batch) in order.chunks(config.batch_size).enumerate() {
        let cg = sample_neighborhood(graph, batch, config.fanouts, rng);
        let (local, cache) = encoder.forward_with_cache(&params, &cg, &graph.features)?;
        let labels: Vec<u64> = local.node_ids.iter().map(|&n| graph.labels[n]).collect();
        let triplets = mine_triplets(&local.h, &labels, rng);
        let margin = encoder.config().margin;
        let (loss_local, mut d_h) = triplet_loss_with(&local.h, &triplets, margin);

        let mut log = BatchLog {
            batch: b,
            loss_local,
            loss_global: f64::NAN,
            gate: 0.0,
            glecc: 0.0,
            total: loss_local,
        };
        if let Some(g) = theta_g {
            let global = encoder.forward(g, &cg, &graph.features)?;
            let (loss_global, _) = triplet_loss_with(&global.h, &triplets, margin);
            let (glecc, d_g) = glecc_loss_and_grad(&global, &local, &labels)?;
            let gate = if config.glecc { glecc_gate(loss_local, loss_global) } else { 0.0 };
            d_h.scaled_add(gate, &d_g);
            log.loss_global = loss_global;
            log.gate = gate;
            log.glecc = glecc;
            log.total = loss_local + gate * glecc;
        }
        if log.total > 0.0 {
            let grad = encoder.backprop(&params, &cache, &d_h)?;
            adam_step(&mut params, &grad, adam, config.lr, AdamConfig::default())?;
        } else {
            let zero = ParamVector::zeros(params.layout().clone());
            adam_step(&mut params, &zero, adam, config.lr, AdamConfig::default())?;
        }
        logs.push(log);
    }
    Ok((params, logs))
}
