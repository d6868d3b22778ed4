//! Message datasets: loading, splitting and temporal features.
//!
//! A client's corpus is a list of [`Message`]s stored one JSON record per
//! line. Loading validates every record and assigns a seeded train/test/val
//! split; [`graph`] turns the messages into the homogeneous message graph the
//! encoder consumes and [`synth`] generates non-IID corpora for experiments.

pub mod graph;
pub mod synth;

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use graph::{project_homogeneous, sample_neighborhood, ComputationGraph, MessageGraph};
pub use synth::{synthesize_clients, SynthSpec};

/// Default width of the text embedding.
pub const DEFAULT_TEXT_DIM: usize = 384;

/// One social post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub id: String,
    pub embedding: Vec<f64>,
    /// OLE automation date: fractional days since 1899-12-30T00:00 UTC.
    pub timestamp: f64,
    pub user: String,
    pub hashtags: BTreeSet<String>,
    pub entities: BTreeSet<String>,
    pub event_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            test: 0.2,
            val: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.test, self.val];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("split fractions out of range: {self:?}")));
        }
        if ((self.train + self.test + self.val) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub val: Vec<usize>,
}

impl Splits {
    /// Seeded random assignment. Test and validation sizes are the floor of
    /// their fraction (at least one each once the dataset has 10 messages);
    /// training takes the remainder.
    pub fn assign(n: usize, fractions: SplitFractions, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);

        let floor_at_least_one = |frac: f64| {
            let k = (frac * n as f64 + 1e-9).floor() as usize;
            if n >= 10 && frac > 0.0 {
                k.max(1)
            } else {
                k
            }
        };
        let n_test = floor_at_least_one(fractions.test);
        let n_val = floor_at_least_one(fractions.val).min(n - n_test.min(n));
        let n_test = n_test.min(n);

        let mut test = order[..n_test].to_vec();
        let mut val = order[n_test..n_test + n_val].to_vec();
        let mut train = order[n_test + n_val..].to_vec();
        test.sort_unstable();
        val.sort_unstable();
        train.sort_unstable();
        Self { train, test, val }
    }
}

/// A client's private corpus together with its split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub messages: Vec<Message>,
    pub text_dim: usize,
    pub splits: Splits,
    pub num_events: usize,
}

impl Dataset {
    pub fn new(
        messages: Vec<Message>,
        text_dim: usize,
        fractions: SplitFractions,
        seed: u64,
    ) -> Result<Self> {
        fractions.validate()?;
        for (i, m) in messages.iter().enumerate() {
            validate_message(m, text_dim).map_err(|msg| Error::Data(format!("message {i}: {msg}")))?;
        }
        let num_events = messages.iter().map(|m| m.event_id).collect::<HashSet<_>>().len();
        let splits = Splits::assign(messages.len(), fractions, seed);
        Ok(Self {
            messages,
            text_dim,
            splits,
            num_events,
        })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn labels(&self) -> Vec<u64> {
        self.messages.iter().map(|m| m.event_id).collect()
    }

    pub fn event_ids(&self) -> BTreeSet<u64> {
        self.messages.iter().map(|m| m.event_id).collect()
    }

    /// Writes the messages in the line-delimited record format.
    pub fn write_records(&self, path: &Path) -> Result<()> {
        write_messages(path, &self.messages)
    }
}

fn validate_message(m: &Message, text_dim: usize) -> std::result::Result<(), String> {
    if m.embedding.len() != text_dim {
        return Err(format!(
            "embedding has length {}, expected {text_dim}",
            m.embedding.len()
        ));
    }
    if m.embedding.iter().any(|v| !v.is_finite()) {
        return Err("embedding contains a non-finite value".into());
    }
    if !m.timestamp.is_finite() {
        return Err("timestamp is not finite".into());
    }
    Ok(())
}

/// Reads a line-delimited record file into a validated, split dataset.
pub fn load_dataset(
    path: &Path,
    text_dim: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut messages = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let load_err = |message: String| Error::Load {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let msg: Message = serde_json::from_str(&line).map_err(|e| load_err(e.to_string()))?;
        validate_message(&msg, text_dim).map_err(load_err)?;
        messages.push(msg);
    }
    Dataset::new(messages, text_dim, fractions, seed)
}

pub fn write_messages(path: &Path, messages: &[Message]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for m in messages {
        let line = serde_json::to_string(m).expect("message serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Splits an OLE timestamp into (whole days, day fraction).
pub fn temporal_embedding(timestamp: f64) -> Result<[f64; 2]> {
    if !timestamp.is_finite() {
        return Err(Error::Data(format!("non-finite timestamp {timestamp}")));
    }
    let day = timestamp.floor();
    Ok([day, timestamp - day])
}

/// Min-max normalizes each temporal component over the given rows. A
/// component with zero range maps to 0.
pub fn normalize_temporal(raw: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for r in raw {
        for c in 0..2 {
            lo[c] = lo[c].min(r[c]);
            hi[c] = hi[c].max(r[c]);
        }
    }
    raw.iter()
        .map(|r| {
            let mut out = [0.0; 2];
            for c in 0..2 {
                let span = hi[c] - lo[c];
                out[c] = if span > 0.0 { (r[c] - lo[c]) / span } else { 0.0 };
            }
            out
        })
        .collect()
}
