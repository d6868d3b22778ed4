//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use dame_core::bola::Kernel;
use dame_core::data::{ComputationGraph, MessageGraph};
use dame_core::encoder::{mine_triplets, triplet_loss_with, EmbeddingBatch, Encoder, EncoderConfig, ParamVector, Triplet};
use dame_core::local_opt::gated_objective;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
/// Instances with an attention score or a hinge this close to its kink
/// are redrawn.
pub const KINK_GAP: f64 = 1e-3;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random 8-node graph with a small encoder, fixed triplets and a random
/// linear read-out, all away from every non-differentiable point.
pub struct GradInstance {
    pub encoder: Encoder,
    pub params: ParamVector,
    pub cg: ComputationGraph,
    pub features: Array2<f64>,
    pub labels: Vec<u64>,
    pub triplets: Vec<Triplet>,
    pub readout: Array2<f64>,
    pub global: EmbeddingBatch,
    pub gate: f64,
}

pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = 8;
        let d = 6;
        let margin = rng.random_range(0.05..2.0);
        let encoder = Encoder::new(EncoderConfig {
            d_in: d,
            d_hidden: 4,
            d_out: 3,
            heads: 2,
            margin,
            ..EncoderConfig::default()
        })
        .unwrap();
        let mut params = encoder.init_params(rng.random());
        params.values_mut().iter_mut().for_each(|v| *v += 0.3 * normal(&mut rng));
        let features = Array2::from_shape_fn((n, d), |_| normal(&mut rng));
        let labels: Vec<u64> = (0..n).map(|i| (i % 3) as u64).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.4) {
                    edges.push((i, j));
                }
            }
        }
        let graph = MessageGraph::from_edges(n, edges, features.clone(), labels.clone());
        let batch: Vec<usize> = (0..n).collect();
        let cg = ComputationGraph::full(&graph, &batch);
        let (out, cache) = encoder.forward_with_cache(&params, &cg, &features).unwrap();
        if cache.min_abs_attention_score() < KINK_GAP {
            continue;
        }
        let batch_labels: Vec<u64> = out.node_ids.iter().map(|&i| labels[i]).collect();
        let triplets = mine_triplets(&out.h, &batch_labels, &mut rng);
        let row = |i: usize| out.h.row(i).to_owned();
        let dist = |a: usize, b: usize| (&row(a) - &row(b)).mapv(|x| x * x).sum().sqrt();
        let near_kink = triplets.iter().any(|t| {
            let (dp, dn) = (dist(t.anchor, t.positive), dist(t.anchor, t.negative));
            dp < KINK_GAP || dn < KINK_GAP || (dp - dn + margin).abs() < KINK_GAP
        });
        if near_kink || triplets.is_empty() {
            continue;
        }
        let readout = Array2::from_shape_fn(out.h.dim(), |_| normal(&mut rng));
        let mut other = params.clone();
        other.values_mut().iter_mut().for_each(|v| *v += 0.5 * normal(&mut rng));
        let global = encoder.forward(&other, &cg, &features).unwrap();
        let gate = rng.random_range(0.1..1.0);
        return GradInstance {
            encoder,
            params,
            cg,
            features,
            labels: batch_labels,
            triplets,
            readout,
            global,
            gate,
        };
    }
}

impl GradInstance {
    /// Triplet loss on fixed triplets plus a random linear read-out.
    pub fn encoder_loss(&self, params: &ParamVector) -> (f64, ParamVector) {
        let (out, cache) = self.encoder.forward_with_cache(params, &self.cg, &self.features).unwrap();
        let (lt, mut d_h) = triplet_loss_with(&out.h, &self.triplets, self.encoder.config().margin);
        let lin = (&out.h * &self.readout).sum();
        d_h += &self.readout;
        let grad = self.encoder.backprop(params, &cache, &d_h).unwrap();
        (lt + lin, grad)
    }

    /// Triplet loss plus the gated centroid-alignment term.
    pub fn gated_loss(&self, params: &ParamVector) -> (f64, ParamVector) {
        gated_objective(
            &self.encoder,
            params,
            &self.cg,
            &self.features,
            &self.labels,
            &self.triplets,
            Some(&self.global),
            self.gate,
        )
        .unwrap()
    }
}

/// `‖g_analytic − g_fd‖ / max(‖g_analytic‖, ‖g_fd‖)` with central
/// differences of step [`FD_STEP`].
pub fn fd_relative_error(params: &ParamVector, f: impl Fn(&ParamVector) -> (f64, ParamVector)) -> f64 {
    let (_, analytic) = f(params);
    let mut num = vec![0.0; params.len()];
    let mut probe = params.clone();
    for (i, slot) in num.iter_mut().enumerate() {
        let v = params.values()[i];
        probe.values_mut()[i] = v + FD_STEP;
        let up = f(&probe).0;
        probe.values_mut()[i] = v - FD_STEP;
        let down = f(&probe).0;
        probe.values_mut()[i] = v;
        *slot = (up - down) / (2.0 * FD_STEP);
    }
    let diff: f64 = analytic.values().iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na = analytic.norm();
    let nn = num.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-12)
}

/// Two-level encoding-tree entropy computed straight from a raw similarity
/// matrix: every tree node `α` below the root contributes
/// `−(g_α / V) log2(vol α / vol parent(α))`, where a leaf's cut is its
/// degree.
pub fn tree_entropy(w: &Array2<f64>, parts: &[Vec<usize>]) -> f64 {
    let k = w.nrows();
    let weight = |i: usize, j: usize| if i == j { 0.0 } else { w[[i, j]].max(1e-6) };
    let deg: Vec<f64> = (0..k).map(|i| (0..k).map(|j| weight(i, j)).sum()).collect();
    let total: f64 = deg.iter().sum();
    let mut h = 0.0;
    for part in parts {
        let vol: f64 = part.iter().map(|&i| deg[i]).sum();
        let cut: f64 = part
            .iter()
            .flat_map(|&i| (0..k).filter(|j| !part.contains(j)).map(move |j| (i, j)))
            .map(|(i, j)| weight(i, j))
            .sum();
        h -= cut / total * (vol / total).log2();
        for &i in part {
            h -= deg[i] / total * (deg[i] / vol).log2();
        }
    }
    h
}

/// Every set partition of `0..k`, via restricted growth strings.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn grow(i: usize, k: usize, rgs: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            let blocks = rgs.iter().max().map_or(0, |m| m + 1);
            let mut parts = vec![Vec::new(); blocks];
            for (node, &b) in rgs.iter().enumerate() {
                parts[b].push(node);
            }
            out.push(parts);
            return;
        }
        let limit = rgs.iter().max().map_or(0, |m| m + 1);
        for b in 0..=limit {
            rgs.push(b);
            grow(i + 1, k, rgs, out);
            rgs.pop();
        }
    }
    let mut out = Vec::new();
    grow(0, k, &mut Vec::new(), &mut out);
    out
}

/// Random symmetric similarity matrix with a unit diagonal and entries in
/// `[lo, 1]`.
pub fn random_similarity(k: usize, lo: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut w = Array2::eye(k);
    for i in 0..k {
        for j in i + 1..k {
            let v = rng.random_range(lo..1.0);
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    w
}

pub fn random_partition(k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let blocks = rng.random_range(1..=k);
    let mut parts = vec![Vec::new(); blocks];
    for i in 0..k {
        parts[if i < blocks { i } else { rng.random_range(0..blocks) }].push(i);
    }
    parts.into_iter().filter(|p| !p.is_empty()).collect()
}

/// Adjusted Rand index by enumerating all pairs of items.
pub fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            pairs += 1.0;
            in_a += f64::from(u8::from(sa));
            in_b += f64::from(u8::from(sb));
            both += f64::from(u8::from(sa && sb));
        }
    }
    let identical = (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])));
    if identical {
        return 1.0;
    }
    let expected = in_a * in_b / pairs;
    let max = 0.5 * (in_a + in_b);
    if (max - expected).abs() < 1e-15 {
        return 0.0;
    }
    (both - expected) / (max - expected)
}

fn mutual_info(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0.0 {
                mi += c / n * (n * c / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

/// Expected mutual information of two-cluster labelings with `a0` items in
/// the first cluster of one labeling and `b0` in the first cluster of the
/// other, by averaging over every placement of the first labeling's
/// cluster among `n` items.
pub fn emi_exhaustive(n: usize, a0: usize, b0: usize) -> f64 {
    let b: Vec<usize> = (0..n).map(|i| usize::from(i >= b0)).collect();
    let (mut sum, mut count) = (0.0, 0.0);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a0 {
            continue;
        }
        let a: Vec<usize> = (0..n).map(|i| usize::from(mask & (1 << i) == 0)).collect();
        sum += mutual_info(&a, &b);
        count += 1.0;
    }
    sum / count
}

/// GP posterior mean and variance in raw units with the same
/// standardization as the library, solved by Gaussian elimination.
pub fn gp_dense_posterior(xs: &[f64], ys: &[f64], kernel: Kernel, at: f64) -> (f64, f64) {
    let n = xs.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let scale = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let z: Vec<f64> = ys.iter().map(|y| (y - mean) / scale).collect();
    let k = |a: f64, b: f64| kernel.signal_var * (-(a - b).powi(2) / (2.0 * kernel.lengthscale.powi(2))).exp();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| k(xs[i], xs[j]) + if i == j { kernel.noise_var } else { 0.0 }).collect())
        .collect();
    let ks: Vec<f64> = xs.iter().map(|&x| k(x, at)).collect();
    let alpha = solve(gram.clone(), z);
    let v = solve(gram, ks.clone());
    let mu: f64 = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let var = k(at, at) - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    (mean + scale * mu, scale * scale * var.max(0.0))
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}
