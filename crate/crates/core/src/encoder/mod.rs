//! Two-layer graph-attention encoder.
//!
//! Layer 1 runs `heads` attention heads whose outputs are concatenated and
//! passed through ELU; layer 2 is a single head producing the message
//! representation. Each node attends to itself and its sampled neighbors.
//! Gradients are derived by hand (see [`gat`]) and checked against finite
//! differences in the test suite.

pub mod adam;
mod gat;
pub mod params;
pub mod triplet;

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_neighborhood, ComputationGraph, MessageGraph};
use crate::error::{Error, Result};
use gat::{attn_backward, attn_forward, elu, elu_grad, AttnCache, AttnParams, Csr};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::{Layout, ParamVector, Segment};
pub use triplet::{mine_triplets, triplet_loss, triplet_loss_with, Triplet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Input width: text embedding width + 2 temporal components.
    pub d_in: usize,
    /// Width of each first-layer head.
    pub d_hidden: usize,
    pub d_out: usize,
    pub heads: usize,
    pub leaky_slope: f64,
    /// Triplet margin.
    pub margin: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_in: crate::data::DEFAULT_TEXT_DIM + 2,
            d_hidden: 64,
            d_out: 64,
            heads: 4,
            leaky_slope: 0.2,
            margin: 3.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_hidden == 0 || self.d_out == 0 || self.heads == 0 {
            return Err(Error::Config(format!("encoder widths must be at least 1: {self:?}")));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("triplet margin must be positive, got {}", self.margin)));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!("leaky slope {} outside [0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn hidden_width(&self) -> usize {
        self.heads * self.d_hidden
    }

    pub fn layout(&self) -> Layout {
        let hw = self.hidden_width();
        Layout::new(vec![
            Segment::new("gat1.weight", &[self.d_in, hw]),
            Segment::new("gat1.attn_src", &[self.heads, self.d_hidden]),
            Segment::new("gat1.attn_dst", &[self.heads, self.d_hidden]),
            Segment::new("gat1.bias", &[hw]),
            Segment::new("gat2.weight", &[hw, self.d_out]),
            Segment::new("gat2.attn_src", &[1, self.d_out]),
            Segment::new("gat2.attn_dst", &[1, self.d_out]),
            Segment::new("gat2.bias", &[self.d_out]),
        ])
    }
}

/// Output embeddings of a batch, row `i` belonging to `node_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub node_ids: Vec<usize>,
    pub h: Array2<f64>,
}

/// Intermediate values kept from a forward pass for backpropagation.
pub struct ForwardCache {
    x: Array2<f64>,
    csr1: Csr,
    csr2: Csr,
    cache1: AttnCache,
    pre1: Array2<f64>,
    h1: Array2<f64>,
    cache2: AttnCache,
}

impl ForwardCache {
    /// Distance of the closest attention score to the leaky-ReLU kink.
    pub fn min_abs_attention_score(&self) -> f64 {
        self.cache1.min_abs_score().min(self.cache2.min_abs_score())
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    layout: Arc<Layout>,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = Arc::new(config.layout());
        Ok(Self { config, layout })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// Fan-in scaled uniform initialization; biases start at zero.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamVector::zeros(self.layout.clone());
        let fans = [
            ("gat1.weight", self.config.d_in),
            ("gat1.attn_src", self.config.d_hidden),
            ("gat1.attn_dst", self.config.d_hidden),
            ("gat2.weight", self.config.hidden_width()),
            ("gat2.attn_src", self.config.d_out),
            ("gat2.attn_dst", self.config.d_out),
        ];
        for (name, fan_in) in fans {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in p.segment_mut(name) {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    fn check(&self, params: &ParamVector) -> Result<()> {
        if **params.layout() != *self.layout {
            return Err(Error::LayoutMismatch("parameters do not match encoder config".into()));
        }
        Ok(())
    }

    fn layer_params<'a>(&self, params: &'a ParamVector, layer: usize) -> AttnParams<'a> {
        let (rows, heads, width) = match layer {
            1 => (self.config.d_in, self.config.heads, self.config.d_hidden),
            _ => (self.config.hidden_width(), 1, self.config.d_out),
        };
        let seg = |s: &str| params.segment(&format!("gat{layer}.{s}"));
        AttnParams {
            weight: ArrayView2::from_shape((rows, heads * width), seg("weight")).expect("layout shape"),
            attn_src: seg("attn_src"),
            attn_dst: seg("attn_dst"),
            bias: seg("bias"),
            heads,
            width,
            slope: self.config.leaky_slope,
        }
    }

    pub fn forward(&self, params: &ParamVector, cg: &ComputationGraph, features: &Array2<f64>) -> Result<EmbeddingBatch> {
        self.forward_with_cache(params, cg, features).map(|(b, _)| b)
    }

    pub fn forward_with_cache(
        &self,
        params: &ParamVector,
        cg: &ComputationGraph,
        features: &Array2<f64>,
    ) -> Result<(EmbeddingBatch, ForwardCache)> {
        self.check(params)?;
        if features.ncols() != self.config.d_in {
            return Err(Error::Data(format!(
                "feature width {} does not match encoder input width {}",
                features.ncols(),
                self.config.d_in
            )));
        }
        let x = features.select(Axis(0), &cg.nodes);
        let csr1 = Csr::from_lists(&cg.layer1);
        let csr2 = Csr::from_lists(&cg.layer2);

        let p1 = self.layer_params(params, 1);
        let (pre1, cache1) = attn_forward(x.view(), &p1, &csr1);
        if pre1.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attention layer 1".into()));
        }
        let h1 = pre1.mapv(elu);

        let p2 = self.layer_params(params, 2);
        let (out, cache2) = attn_forward(h1.view(), &p2, &csr2);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attention layer 2".into()));
        }
        let batch = EmbeddingBatch {
            node_ids: cg.batch().to_vec(),
            h: out,
        };
        Ok((
            batch,
            ForwardCache {
                x,
                csr1,
                csr2,
                cache1,
                pre1,
                h1,
                cache2,
            },
        ))
    }

    /// Gradient of a scalar loss with respect to the parameters, given the
    /// loss gradient `d_h` with respect to the batch embeddings.
    pub fn backprop(&self, params: &ParamVector, cache: &ForwardCache, d_h: &Array2<f64>) -> Result<ParamVector> {
        self.check(params)?;
        let p2 = self.layer_params(params, 2);
        let g2 = attn_backward(cache.h1.view(), &p2, &cache.csr2, &cache.cache2, d_h.view(), true);
        let mut d_pre1 = g2.input.expect("requested input gradient");
        d_pre1.zip_mut_with(&cache.pre1, |d, &pre| *d *= elu_grad(pre));

        let p1 = self.layer_params(params, 1);
        let g1 = attn_backward(cache.x.view(), &p1, &cache.csr1, &cache.cache1, d_pre1.view(), false);

        let mut grad = ParamVector::zeros(self.layout.clone());
        let parts: [(&str, &[f64]); 8] = [
            ("gat1.weight", g1.weight.as_slice().expect("contiguous")),
            ("gat1.attn_src", &g1.attn_src),
            ("gat1.attn_dst", &g1.attn_dst),
            ("gat1.bias", &g1.bias),
            ("gat2.weight", g2.weight.as_slice().expect("contiguous")),
            ("gat2.attn_src", &g2.attn_src),
            ("gat2.attn_dst", &g2.attn_dst),
            ("gat2.bias", &g2.bias),
        ];
        for (name, g) in parts {
            grad.segment_mut(name).copy_from_slice(g);
        }
        if grad.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok(grad)
    }

    /// Triplet loss of a batch and its gradient. Triplets are mined with
    /// `rng` on the current embeddings.
    pub fn backward<R: Rng + ?Sized>(
        &self,
        params: &ParamVector,
        cg: &ComputationGraph,
        features: &Array2<f64>,
        labels: &[u64],
        rng: &mut R,
    ) -> Result<(f64, ParamVector)> {
        let (batch, cache) = self.forward_with_cache(params, cg, features)?;
        let batch_labels: Vec<u64> = batch.node_ids.iter().map(|&n| labels[n]).collect();
        let triplets = mine_triplets(&batch.h, &batch_labels, rng);
        let (loss, d_h) = triplet_loss_with(&batch.h, &triplets, self.config.margin);
        if triplets.is_empty() || loss == 0.0 {
            return Ok((loss, ParamVector::zeros(self.layout.clone())));
        }
        let grad = self.backprop(params, &cache, &d_h)?;
        Ok((loss, grad))
    }

    /// Embeddings of `nodes` (global ids, output rows in the same order),
    /// computed in chunks of at most `chunk` nodes over neighborhoods
    /// sampled with a generator seeded by `seed`.
    pub fn embed(
        &self,
        params: &ParamVector,
        graph: &MessageGraph,
        nodes: &[usize],
        fanouts: (usize, usize),
        chunk: usize,
        seed: u64,
    ) -> Result<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Array2::zeros((nodes.len(), self.config.d_out));
        for (c, part) in nodes.chunks(chunk.max(1)).enumerate() {
            let cg = sample_neighborhood(graph, part, fanouts, &mut rng);
            let emb = self.forward(params, &cg, &graph.features)?;
            let offset = c * chunk.max(1);
            out.slice_mut(ndarray::s![offset..offset + part.len(), ..]).assign(&emb.h);
        }
        Ok(out)
    }
}
