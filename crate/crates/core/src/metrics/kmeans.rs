use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const RESTARTS: usize = 10;
pub const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances of each point to the mean of its cluster.
pub fn inertia(points: &Array2<f64>, labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let d = points.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in points.rows().into_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    points
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row.as_slice().expect("standard layout"), &sums[l]))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding, best of [`RESTARTS`] runs.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::Degenerate("k-means needs k >= 1".into()));
    }
    if n < k {
        return Err(Error::Degenerate(format!("k-means with {n} points and k = {k}")));
    }
    let pts = points.as_standard_layout();
    let rows: Vec<&[f64]> = pts.rows().into_iter().map(|r| r.to_slice().expect("contiguous row")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(&rows, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(rows: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers: Vec<Vec<f64>> = vec![rows[rng.random_range(0..n)].to_vec()];
    let mut closest: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = closest.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in closest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[idx].to_vec();
        for (d, r) in closest.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(rows: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = rows.len();
    let d = rows[0].len();
    let mut centers = plus_plus(rows, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let (mut bl, mut bd) = (0, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let dd = sq_dist(r, center);
                if dd < bd {
                    bd = dd;
                    bl = c;
                }
            }
            if labels[i] != bl {
                labels[i] = bl;
                changed = true;
            }
            dists[i] = bd;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n).max_by(|&a, &b| dists[a].total_cmp(&dists[b])).expect("n > 0");
                centers[c] = rows[far].to_vec();
                dists[far] = 0.0;
            }
        }
    }
    let inertia = rows
        .iter()
        .zip(&labels)
        .map(|(r, &l)| sq_dist(r, &centers[l]))
        .sum();
    KMeansResult { labels, inertia }
}
