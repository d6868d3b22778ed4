//! Multi-head graph attention layer with hand-written backward pass.

use ndarray::{Array2, ArrayView2, Axis};

/// Destination-major adjacency: sources of destination `i` are
/// `srcs[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub offsets: Vec<usize>,
    pub srcs: Vec<usize>,
}

impl Csr {
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut srcs = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for l in lists {
            srcs.extend_from_slice(l);
            offsets.push(srcs.len());
        }
        Self { offsets, srcs }
    }

    pub fn num_dst(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.srcs.len()
    }
}

/// Borrowed parameters of one attention layer. `weight` is
/// `d_in × (heads·width)`; attention vectors and bias are `heads·width`.
pub(crate) struct AttnParams<'a> {
    pub weight: ArrayView2<'a, f64>,
    pub attn_src: &'a [f64],
    pub attn_dst: &'a [f64],
    pub bias: &'a [f64],
    pub heads: usize,
    pub width: usize,
    pub slope: f64,
}

pub(crate) struct AttnGrads {
    pub weight: Array2<f64>,
    pub attn_src: Vec<f64>,
    pub attn_dst: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Array2<f64>>,
}

pub(crate) struct AttnCache {
    pub z: Array2<f64>,
    /// `heads × nnz` attention weights.
    pub alpha: Vec<f64>,
    /// `heads × nnz` pre-activation scores.
    pub score: Vec<f64>,
}

impl AttnCache {
    /// Smallest absolute pre-activation score (distance to the leaky-ReLU kink).
    pub fn min_abs_score(&self) -> f64 {
        self.score.iter().fold(f64::INFINITY, |m, s| m.min(s.abs()))
    }
}

pub(crate) fn attn_forward(x: ArrayView2<f64>, p: &AttnParams, csr: &Csr) -> (Array2<f64>, AttnCache) {
    let hw = p.heads * p.width;
    let z = x.dot(&p.weight);
    let n_src = z.nrows();
    let n_dst = csr.num_dst();
    let nnz = csr.nnz();

    let mut s_src = vec![0.0; p.heads * n_src];
    let mut s_dst = vec![0.0; p.heads * n_dst];
    for j in 0..n_src {
        let row = z.row(j);
        for h in 0..p.heads {
            let cols = h * p.width..(h + 1) * p.width;
            let mut a = 0.0;
            let mut b = 0.0;
            for c in cols {
                a += row[c] * p.attn_src[c];
                b += row[c] * p.attn_dst[c];
            }
            s_src[h * n_src + j] = a;
            if j < n_dst {
                s_dst[h * n_dst + j] = b;
            }
        }
    }

    let mut alpha = vec![0.0; p.heads * nnz];
    let mut score = vec![0.0; p.heads * nnz];
    let mut out = Array2::zeros((n_dst, hw));
    for i in 0..n_dst {
        let (lo, hi) = (csr.offsets[i], csr.offsets[i + 1]);
        for h in 0..p.heads {
            let base = h * nnz;
            let mut max = f64::NEG_INFINITY;
            for k in lo..hi {
                let e = s_dst[h * n_dst + i] + s_src[h * n_src + csr.srcs[k]];
                score[base + k] = e;
                let l = if e > 0.0 { e } else { p.slope * e };
                alpha[base + k] = l;
                max = max.max(l);
            }
            let mut total = 0.0;
            for k in lo..hi {
                let v = (alpha[base + k] - max).exp();
                alpha[base + k] = v;
                total += v;
            }
            let mut orow = out.row_mut(i);
            for k in lo..hi {
                let a = alpha[base + k] / total;
                alpha[base + k] = a;
                let zrow = z.row(csr.srcs[k]);
                for c in h * p.width..(h + 1) * p.width {
                    orow[c] += a * zrow[c];
                }
            }
        }
    }
    for mut row in out.rows_mut() {
        for (v, b) in row.iter_mut().zip(p.bias) {
            *v += b;
        }
    }
    (out, AttnCache { z, alpha, score })
}

pub(crate) fn attn_backward(
    x: ArrayView2<f64>,
    p: &AttnParams,
    csr: &Csr,
    cache: &AttnCache,
    d_out: ArrayView2<f64>,
    need_input_grad: bool,
) -> AttnGrads {
    let hw = p.heads * p.width;
    let z = &cache.z;
    let n_src = z.nrows();
    let n_dst = csr.num_dst();
    let nnz = csr.nnz();

    let mut dz = Array2::<f64>::zeros((n_src, hw));
    let mut ds_src = vec![0.0; p.heads * n_src];
    let mut ds_dst = vec![0.0; p.heads * n_dst];
    let mut d_alpha = Vec::new();

    for i in 0..n_dst {
        let (lo, hi) = (csr.offsets[i], csr.offsets[i + 1]);
        let drow = d_out.row(i);
        for h in 0..p.heads {
            let base = h * nnz;
            let cols = h * p.width..(h + 1) * p.width;
            d_alpha.clear();
            let mut weighted = 0.0;
            for k in lo..hi {
                let j = csr.srcs[k];
                let a = cache.alpha[base + k];
                let zrow = z.row(j);
                let mut da = 0.0;
                {
                    let mut dzrow = dz.row_mut(j);
                    for c in cols.clone() {
                        dzrow[c] += a * drow[c];
                        da += drow[c] * zrow[c];
                    }
                }
                weighted += a * da;
                d_alpha.push(da);
            }
            for (idx, k) in (lo..hi).enumerate() {
                let a = cache.alpha[base + k];
                let slope = if cache.score[base + k] > 0.0 { 1.0 } else { p.slope };
                let de = a * (d_alpha[idx] - weighted) * slope;
                ds_dst[h * n_dst + i] += de;
                ds_src[h * n_src + csr.srcs[k]] += de;
            }
        }
    }

    let mut d_attn_src = vec![0.0; hw];
    let mut d_attn_dst = vec![0.0; hw];
    for j in 0..n_src {
        let zrow = z.row(j);
        let mut dzrow = dz.row_mut(j);
        for h in 0..p.heads {
            let gs = ds_src[h * n_src + j];
            let gd = if j < n_dst { ds_dst[h * n_dst + j] } else { 0.0 };
            for c in h * p.width..(h + 1) * p.width {
                d_attn_src[c] += gs * zrow[c];
                d_attn_dst[c] += gd * zrow[c];
                dzrow[c] += gs * p.attn_src[c] + gd * p.attn_dst[c];
            }
        }
    }

    let bias = d_out.sum_axis(Axis(0)).to_vec();
    let weight = x.t().dot(&dz);
    let input = need_input_grad.then(|| dz.dot(&p.weight.t()));
    AttnGrads {
        weight,
        attn_src: d_attn_src,
        attn_dst: d_attn_dst,
        bias,
        input,
    }
}

pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub(crate) fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}
