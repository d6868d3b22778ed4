//! Triplet margin loss with in-batch semi-hard negative mining.

use ndarray::{Array2, ArrayView1};
use rand::seq::IndexedRandom;
use rand::Rng;

use super::EmbeddingBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One triplet per anchor that has both a positive and a negative in the
/// batch: a random positive, and the closest negative that is still farther
/// than that positive (a random negative if there is none).
pub fn mine_triplets<R: Rng + ?Sized>(h: &Array2<f64>, labels: &[u64], rng: &mut R) -> Vec<Triplet> {
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
        let negatives: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        let p = *positives.choose(rng).expect("nonempty");
        let d_ap = dist(h.row(a), h.row(p));
        let semi_hard = negatives
            .iter()
            .map(|&j| (j, dist(h.row(a), h.row(j))))
            .filter(|&(_, d)| d > d_ap)
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(j, _)| j);
        let negative = match semi_hard {
            Some(j) => j,
            None => *negatives.choose(rng).expect("nonempty"),
        };
        out.push(Triplet {
            anchor: a,
            positive: p,
            negative,
        });
    }
    out
}

/// Mean hinge `max(D(a,p) − D(a,n) + margin, 0)` over the given triplets,
/// with its gradient with respect to `h`.
pub fn triplet_loss_with(h: &Array2<f64>, triplets: &[Triplet], margin: f64) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(h.dim());
    if triplets.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut total = 0.0;
    for t in triplets {
        let d_ap = dist(h.row(t.anchor), h.row(t.positive));
        let d_an = dist(h.row(t.anchor), h.row(t.negative));
        let term = d_ap - d_an + margin;
        if term <= 0.0 {
            continue;
        }
        total += term;
        let (a, p, n) = (t.anchor, t.positive, t.negative);
        for c in 0..h.ncols() {
            let mut ga = 0.0;
            if d_ap > 0.0 {
                let u = (h[[a, c]] - h[[p, c]]) / d_ap * scale;
                ga += u;
                grad[[p, c]] -= u;
            }
            if d_an > 0.0 {
                let v = (h[[a, c]] - h[[n, c]]) / d_an * scale;
                ga -= v;
                grad[[n, c]] += v;
            }
            grad[[a, c]] += ga;
        }
    }
    (total * scale, grad)
}

/// Mines triplets on `batch` and returns the mean loss with the triplets used.
pub fn triplet_loss<R: Rng + ?Sized>(batch: &EmbeddingBatch, labels: &[u64], margin: f64, rng: &mut R) -> (f64, Vec<Triplet>) {
    let triplets = mine_triplets(&batch.h, labels, rng);
    let (loss, _) = triplet_loss_with(&batch.h, &triplets, margin);
    (loss, triplets)
}
