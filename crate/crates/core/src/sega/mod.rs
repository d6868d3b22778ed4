//! Server-side personalized aggregation.
//!
//! Every uploaded model encodes the same random probe graph; the cosine
//! similarities of the mean-pooled outputs form a weighted client graph.
//! Clients are partitioned by greedily minimizing the graph's
//! two-dimensional structural entropy, and each client then receives a
//! softmax-weighted mixture of the models in its own partition.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ComputationGraph, MessageGraph};
use crate::encoder::{Encoder, ParamVector};
use crate::error::{Error, Result};

/// Floor applied to off-diagonal similarities before entropy arithmetic.
pub const SIM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            blocks: 2,
            block_size: 16,
            p_in: 0.5,
            p_out: 0.05,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.block_size == 0 {
            return Err(Error::Config("probe graph needs at least one non-empty block".into()));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(Error::Config("probe edge probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Random graph shared by all clients in one round. Node labels are block
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGraph {
    pub graph: MessageGraph,
    pub seed: u64,
}

/// Stochastic block model with standard-normal node features. Each block
/// is made connected by linking its components in index order.
pub fn gen_probe(seed: u64, d_in: usize, config: &ProbeConfig) -> Result<ProbeGraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.blocks * config.block_size;
    let block = |i: usize| i / config.block_size;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block(i) == block(j) { config.p_in } else { config.p_out };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    for b in 0..config.blocks {
        let lo = b * config.block_size;
        connect_block(&mut edges, lo, lo + config.block_size);
    }
    let features = Array2::from_shape_simple_fn((n, d_in), || StandardNormal.sample(&mut rng));
    let labels = (0..n).map(|i| block(i) as u64).collect();
    Ok(ProbeGraph {
        graph: MessageGraph::from_edges(n, edges, features, labels),
        seed,
    })
}

fn connect_block(edges: &mut Vec<(usize, usize)>, lo: usize, hi: usize) {
    let mut parent: Vec<usize> = (lo..hi).collect();
    fn find(parent: &mut [usize], lo: usize, x: usize) -> usize {
        let mut r = x;
        while parent[r - lo] != r {
            r = parent[r - lo];
        }
        parent[x - lo] = r;
        r
    }
    for &(a, b) in edges.iter() {
        if (lo..hi).contains(&a) && (lo..hi).contains(&b) {
            let (ra, rb) = (find(&mut parent, lo, a), find(&mut parent, lo, b));
            parent[ra.max(rb) - lo] = ra.min(rb);
        }
    }
    let mut roots: Vec<usize> = (lo..hi).filter(|&x| find(&mut parent, lo, x) == x).collect();
    roots.sort_unstable();
    for w in roots.windows(2) {
        edges.push((w[0], w[1]));
    }
}

/// Mean of the encoder outputs over all probe nodes, every neighbor kept.
pub fn client_representation(encoder: &Encoder, params: &ParamVector, probe: &ProbeGraph) -> Result<Vec<f64>> {
    let nodes: Vec<usize> = (0..probe.graph.n).collect();
    let cg = ComputationGraph::full(&probe.graph, &nodes);
    let out = encoder.forward(params, &cg, &probe.graph.features)?;
    Ok(out.h.mean_axis(ndarray::Axis(0)).expect("probe has nodes").to_vec())
}

/// Weighted client graph. `w` holds raw cosine similarities with a unit
/// diagonal; `w_pos` floors the off-diagonal at [`SIM_FLOOR`] and is the
/// only matrix entropy is computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientGraph {
    pub w: Array2<f64>,
    pub w_pos: Array2<f64>,
}

impl ClientGraph {
    pub fn from_similarities(w: Array2<f64>) -> Result<Self> {
        let k = w.nrows();
        if w.ncols() != k {
            return Err(Error::Data(format!("similarity matrix is {}x{}", k, w.ncols())));
        }
        let mut w_pos = w.mapv(|v| v.max(SIM_FLOOR));
        for u in 0..k {
            w_pos[[u, u]] = 1.0;
        }
        Ok(Self { w, w_pos })
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    /// Weighted degree from `w_pos`, self-loop excluded.
    pub fn degree(&self, u: usize) -> f64 {
        (0..self.len()).filter(|&v| v != u).map(|v| self.w_pos[[u, v]]).sum()
    }

    pub fn volume(&self) -> f64 {
        (0..self.len()).map(|u| self.degree(u)).sum()
    }

    /// Total `w_pos` weight between two disjoint client sets.
    pub fn cross_weight(&self, a: &[usize], b: &[usize]) -> f64 {
        a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| self.w_pos[[i, j]]).sum()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn similarity_matrix(reps: &[Vec<f64>]) -> Result<ClientGraph> {
    let k = reps.len();
    for (u, r) in reps.iter().enumerate() {
        if r.len() != reps[0].len() {
            return Err(Error::Data(format!("client {u} representation has length {}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("representation of client {u}")));
        }
        if r.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(format!("client {u} has a zero-norm representation")));
        }
    }
    let mut w = Array2::<f64>::eye(k);
    for u in 0..k {
        for v in u + 1..k {
            let s = cosine(&reps[u], &reps[v]);
            w[[u, v]] = s;
            w[[v, u]] = s;
        }
    }
    ClientGraph::from_similarities(w)
}

/// Disjoint cover of the clients. Members of each part are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSet {
    pub parts: Vec<Vec<usize>>,
}

impl PartitionSet {
    pub fn singletons(k: usize) -> Self {
        Self {
            parts: (0..k).map(|u| vec![u]).collect(),
        }
    }

    pub fn whole(k: usize) -> Self {
        Self {
            parts: vec![(0..k).collect()],
        }
    }

    pub fn new(parts: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let mut seen = vec![false; k];
        let mut parts = parts;
        for p in &mut parts {
            if p.is_empty() {
                return Err(Error::Data("empty partition".into()));
            }
            p.sort_unstable();
            for &u in p.iter() {
                if u >= k || std::mem::replace(&mut seen[u], true) {
                    return Err(Error::Data(format!("client {u} out of range or repeated")));
                }
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("client {u} not covered by the partition")));
        }
        Ok(Self { parts })
    }

    /// Index of the part containing `u`.
    pub fn part_of(&self, u: usize) -> usize {
        self.parts.iter().position(|p| p.contains(&u)).expect("cover")
    }

    pub fn is_singleton(&self, u: usize) -> bool {
        self.parts[self.part_of(u)].len() == 1
    }

    /// `[[0, 2], [1]]` style rendering.
    pub fn render(&self) -> String {
        let inner: Vec<String> = self
            .parts
            .iter()
            .map(|p| format!("[{}]", p.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" ")))
            .collect();
        format!("[{}]", inner.join(" "))
    }
}

/// Per-part quantities from which the part's entropy contribution follows.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Module {
    vol: f64,
    cut: f64,
    /// `Σ d_i log2 d_i` over members.
    s: f64,
}

impl Module {
    fn of(graph: &ClientGraph, members: &[usize]) -> Result<Self> {
        let mut vol = 0.0;
        let mut s = 0.0;
        for &u in members {
            let d = graph.degree(u);
            if d <= 0.0 {
                return Err(Error::Degenerate(format!("client {u} has zero degree")));
            }
            vol += d;
            s += d * d.log2();
        }
        let inner: f64 = members
            .iter()
            .flat_map(|&i| members.iter().map(move |&j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| graph.w_pos[[i, j]])
            .sum();
        Ok(Self { vol, cut: vol - inner, s })
    }

    fn entropy(&self, total: f64) -> f64 {
        -(self.s - self.vol * self.vol.log2()) / total - (self.cut / total) * (self.vol / total).log2()
    }

    fn merge(&self, other: &Module, between: f64) -> Module {
        Module {
            vol: self.vol + other.vol,
            cut: self.cut + other.cut - 2.0 * between,
            s: self.s + other.s,
        }
    }
}

fn check_cover(graph: &ClientGraph, parts: &PartitionSet) -> Result<()> {
    PartitionSet::new(parts.parts.clone(), graph.len()).map(|_| ())
}

/// Two-dimensional structural entropy, in bits, of `graph` under `parts`.
pub fn structural_entropy_2d(graph: &ClientGraph, parts: &PartitionSet) -> Result<f64> {
    check_cover(graph, parts)?;
    let total = graph.volume();
    let mut h = 0.0;
    for p in &parts.parts {
        h += Module::of(graph, p)?.entropy(total);
    }
    Ok(h)
}

/// Entropy change from merging parts `i` and `j`, computed from the two
/// affected parts only.
pub fn delta_se(graph: &ClientGraph, parts: &PartitionSet, i: usize, j: usize) -> Result<f64> {
    if i == j || i >= parts.parts.len() || j >= parts.parts.len() {
        return Err(Error::Data(format!("invalid merge pair ({i}, {j})")));
    }
    let total = graph.volume();
    let a = Module::of(graph, &parts.parts[i])?;
    let b = Module::of(graph, &parts.parts[j])?;
    let between = graph.cross_weight(&parts.parts[i], &parts.parts[j]);
    Ok(a.merge(&b, between).entropy(total) - a.entropy(total) - b.entropy(total))
}

/// Largest entropy change the [`SIM_FLOOR`] weights can cause on their own.
/// A client whose similarities are all floored has degree `(K−1)·ε`, and
/// moving it between parts changes the entropy by at most about
/// `K·ε·(1 + log2 K) / vol(G)`; merges gaining less than this bound are
/// artifacts of the floor and are not taken.
pub fn floor_tolerance(graph: &ClientGraph) -> f64 {
    let k = graph.len() as f64;
    let total = graph.volume();
    if total <= 0.0 {
        return 0.0;
    }
    k * k * SIM_FLOOR * (1.0 + k.log2()) / total
}

/// Greedy agglomeration from singletons: merge the pair with the smallest
/// entropy change while that change is negative beyond
/// [`floor_tolerance`]. Ties go to the lexicographically smallest pair; the
/// later part joins the earlier one.
pub fn greedy_minimize(graph: &ClientGraph) -> Result<PartitionSet> {
    let k = graph.len();
    let total = graph.volume();
    let tol = floor_tolerance(graph);
    let mut parts = PartitionSet::singletons(k);
    if k < 2 {
        return Ok(parts);
    }
    let mut modules: Vec<Module> = parts
        .parts
        .iter()
        .map(|p| Module::of(graph, p))
        .collect::<Result<_>>()?;
    loop {
        let mut best: Option<(f64, usize, usize, Module)> = None;
        for i in 0..modules.len() {
            for j in i + 1..modules.len() {
                let between = graph.cross_weight(&parts.parts[i], &parts.parts[j]);
                let merged = modules[i].merge(&modules[j], between);
                let d = merged.entropy(total) - modules[i].entropy(total) - modules[j].entropy(total);
                if best.as_ref().is_none_or(|(b, ..)| d < *b) {
                    best = Some((d, i, j, merged));
                }
            }
        }
        match best {
            Some((d, i, j, merged)) if d < -tol => {
                let moved = parts.parts.remove(j);
                parts.parts[i].extend(moved);
                parts.parts[i].sort_unstable();
                modules.remove(j);
                modules[i] = merged;
            }
            _ => break,
        }
    }
    Ok(parts)
}

/// Softmax weights over each client's partition, itself included, from
/// the raw similarities. Entry `u` lists `(v, α_uv)` in ascending `v`.
pub fn aggregation_weights(graph: &ClientGraph, parts: &PartitionSet) -> Result<Vec<Vec<(usize, f64)>>> {
    check_cover(graph, parts)?;
    let k = graph.len();
    let mut out = Vec::with_capacity(k);
    for u in 0..k {
        let members = &parts.parts[parts.part_of(u)];
        let logits: Vec<f64> = members.iter().map(|&v| graph.w[[u, v]]).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.push(members.iter().zip(&exps).map(|(&v, e)| (v, e / z)).collect());
    }
    Ok(out)
}

/// One personalized global model per client.
pub fn aggregate_global(parts: &PartitionSet, graph: &ClientGraph, locals: &[ParamVector]) -> Result<Vec<ParamVector>> {
    if locals.len() != graph.len() {
        return Err(Error::Data(format!("{} models for {} clients", locals.len(), graph.len())));
    }
    aggregation_weights(graph, parts)?
        .iter()
        .map(|ws| {
            let terms: Vec<(&ParamVector, f64)> = ws.iter().map(|&(v, a)| (&locals[v], a)).collect();
            ParamVector::weighted_sum(&terms)
        })
        .collect()
}
