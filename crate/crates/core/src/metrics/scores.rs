//! NMI, AMI and ARI from the contingency table of two labelings.
//!
//! NMI uses the geometric-mean normalizer, AMI the arithmetic mean with the
//! exact permutation-model expectation of mutual information. Entropies are
//! in nats.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Contingency table between two labelings.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub n: usize,
    pub table: Vec<Vec<usize>>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

fn compact<L: Hash + Eq + Copy>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<L, usize> = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

impl Contingency {
    pub fn new<A: Hash + Eq + Copy, B: Hash + Eq + Copy>(pred: &[A], truth: &[B]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Data(format!(
                "label length mismatch: {} predicted vs {} true",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Degenerate("cannot score an empty labeling".into()));
        }
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut table = vec![vec![0usize; kt]; kp];
        for (&i, &j) in p.iter().zip(&t) {
            table[i][j] += 1;
        }
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..kt).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            n: pred.len(),
            table,
            rows,
            cols,
        })
    }

    /// True when the labelings are identical up to renaming clusters.
    pub fn is_identity(&self) -> bool {
        self.rows.len() == self.cols.len()
            && self.table.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }

    pub fn entropy_rows(&self) -> f64 {
        entropy(&self.rows, self.n)
    }

    pub fn entropy_cols(&self) -> f64 {
        entropy(&self.cols, self.n)
    }

    pub fn mutual_info(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.table.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    let c = c as f64;
                    mi += c / n * (n * c / (self.rows[i] as f64 * self.cols[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }

    /// Expected mutual information under random permutations with the
    /// marginals held fixed.
    pub fn expected_mutual_info(&self) -> f64 {
        let n = self.n;
        let lf = log_factorials(n);
        let nf = n as f64;
        let mut emi = 0.0;
        for &a in &self.rows {
            for &b in &self.cols {
                let lo = (a + b).saturating_sub(n).max(1);
                let hi = a.min(b);
                for nij in lo..=hi {
                    let x = nij as f64;
                    let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                    let log_p = lf[a] + lf[b] + lf[n - a] + lf[n - b]
                        - lf[n]
                        - lf[nij]
                        - lf[a - nij]
                        - lf[b - nij]
                        - lf[n + nij - a - b];
                    emi += term * log_p.exp();
                }
            }
        }
        emi
    }
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `MI / sqrt(H(U)·H(V))`; exactly 1 when the labelings agree up to
/// renaming, 0 when exactly one of them is a single cluster.
pub fn nmi<A: Hash + Eq + Copy, B: Hash + Eq + Copy>(pred: &[A], truth: &[B]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.is_identity() {
        return Ok(1.0);
    }
    let (single_p, single_t) = (c.rows.len() == 1, c.cols.len() == 1);
    if single_p && single_t {
        return Ok(1.0);
    }
    if single_p || single_t {
        return Ok(0.0);
    }
    let denom = (c.entropy_rows() * c.entropy_cols()).sqrt();
    Ok((c.mutual_info() / denom).clamp(0.0, 1.0))
}

/// `(MI − E[MI]) / (mean(H(U), H(V)) − E[MI])`.
pub fn ami<A: Hash + Eq + Copy, B: Hash + Eq + Copy>(pred: &[A], truth: &[B]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.is_identity() {
        return Ok(1.0);
    }
    let emi = c.expected_mutual_info();
    let denom = 0.5 * (c.entropy_rows() + c.entropy_cols()) - emi;
    if denom.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok(((c.mutual_info() - emi) / denom).min(1.0))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Hubert-Arabie adjusted Rand index.
pub fn ari<A: Hash + Eq + Copy, B: Hash + Eq + Copy>(pred: &[A], truth: &[B]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.is_identity() {
        return Ok(1.0);
    }
    let index: f64 = c.table.iter().flatten().map(|&x| comb2(x)).sum();
    let a: f64 = c.rows.iter().map(|&x| comb2(x)).sum();
    let b: f64 = c.cols.iter().map(|&x| comb2(x)).sum();
    let expected = a * b / comb2(c.n);
    let max = 0.5 * (a + b);
    let denom = max - expected;
    if denom.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok(((index - expected) / denom).min(1.0))
}
