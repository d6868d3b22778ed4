//! Homogeneous message graph and neighborhood sampling.

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;

use super::{normalize_temporal, temporal_embedding, Message};
use crate::error::{Error, Result};

/// Message-message graph: an edge joins two messages sharing a user,
/// hashtag or entity.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageGraph {
    pub n: usize,
    /// Undirected edges as `(i, j)` with `i < j`, sorted and deduplicated.
    pub edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists.
    pub adjacency: Vec<Vec<usize>>,
    /// Rows are `text_embedding ++ normalized (day, day fraction)`.
    pub features: Array2<f64>,
    pub labels: Vec<u64>,
}

impl MessageGraph {
    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, features: Array2<f64>, labels: Vec<u64>) -> Self {
        let set: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            n,
            edges: set.into_iter().collect(),
            adjacency,
            features,
            labels,
        }
    }
}

/// Projects the message-attribute graph onto messages. Attribute values are
/// compared case-insensitively within their kind.
pub fn project_homogeneous(messages: &[Message]) -> Result<MessageGraph> {
    if messages.is_empty() {
        return Err(Error::Data("cannot build a graph from zero messages".into()));
    }
    let dim = messages[0].embedding.len();
    if let Some((i, _)) = messages.iter().enumerate().find(|(_, m)| m.embedding.len() != dim) {
        return Err(Error::Data(format!(
            "message {i} has embedding length {}, expected {dim}",
            messages[i].embedding.len()
        )));
    }

    // (kind, value) -> members; kind 0 = user, 1 = hashtag, 2 = entity
    let mut index: HashMap<(u8, String), Vec<usize>> = HashMap::new();
    for (i, m) in messages.iter().enumerate() {
        let mut attrs: BTreeSet<(u8, String)> = BTreeSet::new();
        attrs.insert((0, m.user.to_lowercase()));
        attrs.extend(m.hashtags.iter().map(|h| (1, h.to_lowercase())));
        attrs.extend(m.entities.iter().map(|e| (2, e.to_lowercase())));
        for key in attrs {
            index.entry(key).or_default().push(i);
        }
    }

    let mut edges = Vec::new();
    for members in index.values() {
        for (p, &a) in members.iter().enumerate() {
            for &b in &members[p + 1..] {
                edges.push((a, b));
            }
        }
    }

    let temporal: Vec<[f64; 2]> = messages
        .iter()
        .map(|m| temporal_embedding(m.timestamp))
        .collect::<Result<_>>()?;
    let temporal = normalize_temporal(&temporal);

    let mut features = Array2::zeros((messages.len(), dim + 2));
    for (i, m) in messages.iter().enumerate() {
        let mut row = features.row_mut(i);
        for (c, v) in m.embedding.iter().enumerate() {
            row[c] = *v;
        }
        row[dim] = temporal[i][0];
        row[dim + 1] = temporal[i][1];
    }
    let labels = messages.iter().map(|m| m.event_id).collect();
    Ok(MessageGraph::from_edges(messages.len(), edges, features, labels))
}

/// Two-hop computation graph for a batch.
///
/// Local node order is `[batch | hop1 | hop2]`. The first `num_hidden` local
/// nodes (batch and hop1) receive a first-layer representation; the first
/// `num_batch` receive the output embedding. Every source list starts with
/// the destination itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputationGraph {
    pub nodes: Vec<usize>,
    pub num_batch: usize,
    pub num_hidden: usize,
    /// `layer1[i]` lists local sources attended by hidden node `i`.
    pub layer1: Vec<Vec<usize>>,
    /// `layer2[i]` lists local sources (all `< num_hidden`) attended by batch node `i`.
    pub layer2: Vec<Vec<usize>>,
}

impl ComputationGraph {
    pub fn batch(&self) -> &[usize] {
        &self.nodes[..self.num_batch]
    }

    /// Global ids per layer: batch, sampled direct neighbors, sampled
    /// neighbors of those.
    pub fn layers(&self) -> [&[usize]; 3] {
        [
            &self.nodes[..self.num_batch],
            &self.nodes[self.num_batch..self.num_hidden],
            &self.nodes[self.num_hidden..],
        ]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Computation graph that keeps every neighbor.
    pub fn full(graph: &MessageGraph, batch: &[usize]) -> Self {
        sample_with(graph, batch, usize::MAX, usize::MAX, &mut |cands: &[usize], _| cands.to_vec())
    }
}

/// Samples up to `fanouts.0` direct neighbors per batch node and up to
/// `fanouts.1` further neighbors (outside the batch) per direct neighbor,
/// uniformly without replacement.
pub fn sample_neighborhood<R: Rng + ?Sized>(
    graph: &MessageGraph,
    batch: &[usize],
    fanouts: (usize, usize),
    rng: &mut R,
) -> ComputationGraph {
    let mut pick = |cands: &[usize], k: usize| -> Vec<usize> {
        if cands.len() <= k {
            cands.to_vec()
        } else {
            let mut chosen: Vec<usize> = cands.choose_multiple(rng, k).copied().collect();
            chosen.sort_unstable();
            chosen
        }
    };
    sample_with(graph, batch, fanouts.0.max(1), fanouts.1.max(1), &mut pick)
}

fn sample_with(
    graph: &MessageGraph,
    batch: &[usize],
    f1: usize,
    f2: usize,
    pick: &mut dyn FnMut(&[usize], usize) -> Vec<usize>,
) -> ComputationGraph {
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut nodes = Vec::new();
    for &b in batch {
        if let std::collections::hash_map::Entry::Vacant(e) = local.entry(b) {
            e.insert(nodes.len());
            nodes.push(b);
        }
    }
    let num_batch = nodes.len();

    let mut layer2 = Vec::with_capacity(num_batch);
    for i in 0..num_batch {
        let g = nodes[i];
        let mut srcs = vec![i];
        for nb in pick(&graph.adjacency[g], f1) {
            let id = *local.entry(nb).or_insert_with(|| {
                nodes.push(nb);
                nodes.len() - 1
            });
            srcs.push(id);
        }
        layer2.push(srcs);
    }
    let num_hidden = nodes.len();

    let mut layer1: Vec<Vec<usize>> = layer2.clone();
    for i in num_batch..num_hidden {
        let g = nodes[i];
        let cands: Vec<usize> = graph.adjacency[g]
            .iter()
            .copied()
            .filter(|nb| local.get(nb).is_none_or(|&l| l >= num_batch))
            .collect();
        let mut srcs = vec![i];
        for nb in pick(&cands, f2) {
            let id = *local.entry(nb).or_insert_with(|| {
                nodes.push(nb);
                nodes.len() - 1
            });
            srcs.push(id);
        }
        layer1.push(srcs);
    }

    ComputationGraph {
        nodes,
        num_batch,
        num_hidden,
        layer1,
        layer2,
    }
}
