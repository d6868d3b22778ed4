//! Synthetic non-IID client corpora.
//!
//! Every event is an isotropic Gaussian cloud around its own mean. A fraction
//! `overlap` of each client's events comes from a pool shared by all clients
//! (same global id, same mean, same time window); the rest are private. Each
//! client adds its own shift vector to all of its means. Attributes are drawn
//! from small per-event pools with probability `p_in` and from a per-client
//! background pool with probability `p_out`, so messages of one event are
//! linked far more often than messages of different events. With
//! `signal_dim` set, all event means lie in one random subspace of that rank
//! shared by every client, while message noise stays isotropic.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Message, SplitFractions};
use crate::error::{Error, Result};

/// OLE date of 2019-01-01.
const BASE_DAY: f64 = 43466.0;
const ATTR_POOL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_clients: usize,
    pub events_per_client: usize,
    pub messages_per_event: usize,
    pub embed_dim: usize,
    /// Fraction of each client's events drawn from the shared pool.
    pub overlap: f64,
    /// Per-dimension standard deviation of each client's mean shift.
    pub shift: f64,
    /// Per-dimension standard deviation of messages around their event mean.
    pub noise: f64,
    pub p_in: f64,
    pub p_out: f64,
    /// Standard deviation of message times around the event date, in days.
    pub time_spread: f64,
    /// Rank of the subspace holding the event means; full rank when absent.
    pub signal_dim: Option<usize>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_clients: 6,
            events_per_client: 20,
            messages_per_event: 30,
            embed_dim: 32,
            overlap: 0.5,
            shift: 0.5,
            noise: 1.0,
            p_in: 0.25,
            p_out: 0.05,
            time_spread: 10.0,
            signal_dim: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        if !(0.0..=1.0).contains(&self.overlap) {
            return bad(&format!("overlap {} outside [0, 1]", self.overlap));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return bad("attribute probabilities must lie in [0, 1]");
        }
        if self.p_out >= self.p_in {
            return bad(&format!("p_out ({}) must be below p_in ({})", self.p_out, self.p_in));
        }
        if self.num_clients == 0 || self.events_per_client < 2 || self.messages_per_event == 0 {
            return bad("need at least one client, two events per client and one message per event");
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive");
        }
        if self.signal_dim.is_some_and(|r| r == 0 || r > self.embed_dim) {
            return bad("signal_dim must lie in [1, embed_dim]");
        }
        if !(self.shift >= 0.0 && self.noise >= 0.0 && self.time_spread >= 0.0) {
            return bad("shift, noise and time_spread must be non-negative");
        }
        Ok(())
    }

    pub fn shared_events(&self) -> usize {
        (self.overlap * self.events_per_client as f64).round() as usize
    }
}

struct EventProto {
    id: u64,
    mean: Vec<f64>,
    day: f64,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Maps latent event coordinates to embedding space. Entries have variance
/// `1/r`, so means have the same expected squared norm at every rank.
struct MeanBasis {
    cols: Option<Vec<Vec<f64>>>,
}

impl MeanBasis {
    fn new(rng: &mut ChaCha8Rng, dim: usize, rank: Option<usize>) -> Self {
        let cols = rank.map(|r| (0..r).map(|_| gaussian_vec(rng, dim, 1.0 / (r as f64).sqrt())).collect());
        Self { cols }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        match &self.cols {
            None => gaussian_vec(rng, dim, 1.0),
            Some(cols) => {
                let z = gaussian_vec(rng, cols.len(), 1.0);
                (0..dim).map(|d| cols.iter().zip(&z).map(|(c, zi)| c[d] * zi).sum()).collect()
            }
        }
    }
}

fn new_event(rng: &mut ChaCha8Rng, basis: &MeanBasis, id: u64, dim: usize) -> EventProto {
    EventProto {
        id,
        mean: basis.draw(rng, dim),
        day: BASE_DAY + rng.random_range(0.0..365.0),
    }
}

/// Generates `num_clients` datasets. Output depends only on `spec`.
pub fn synthesize_clients(spec: &SynthSpec, fractions: SplitFractions) -> Result<Vec<Dataset>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_shared = spec.shared_events();
    let n_private = spec.events_per_client - n_shared;
    let basis = MeanBasis::new(&mut rng, spec.embed_dim, spec.signal_dim);

    let shared: Vec<EventProto> = (0..n_shared)
        .map(|e| new_event(&mut rng, &basis, e as u64, spec.embed_dim))
        .collect();

    let time_noise = Normal::new(0.0, spec.time_spread.max(1e-12)).expect("valid normal");
    let mut out = Vec::with_capacity(spec.num_clients);
    for k in 0..spec.num_clients {
        let private: Vec<EventProto> = (0..n_private)
            .map(|j| new_event(&mut rng, &basis, (n_shared + k * n_private + j) as u64, spec.embed_dim))
            .collect();
        let client_shift = gaussian_vec(&mut rng, spec.embed_dim, spec.shift);

        let mut messages = Vec::with_capacity(spec.events_per_client * spec.messages_per_event);
        for ev in shared.iter().chain(&private) {
            for _ in 0..spec.messages_per_event {
                let noise = gaussian_vec(&mut rng, spec.embed_dim, spec.noise);
                let embedding: Vec<f64> = ev
                    .mean
                    .iter()
                    .zip(&client_shift)
                    .zip(&noise)
                    .map(|((m, s), z)| m + s + z)
                    .collect();
                let timestamp = ev.day + time_noise.sample(&mut rng);
                let idx = messages.len();

                let user = if rng.random_bool(spec.p_in) {
                    format!("user_e{}_{}", ev.id, rng.random_range(0..ATTR_POOL))
                } else if rng.random_bool(spec.p_out) {
                    format!("user_bg{k}_{}", rng.random_range(0..spec.events_per_client))
                } else {
                    format!("user_c{k}_m{idx}")
                };
                let mut hashtags = BTreeSet::new();
                let mut entities = BTreeSet::new();
                for (set, kind) in [(&mut hashtags, "tag"), (&mut entities, "ent")] {
                    if rng.random_bool(spec.p_in) {
                        set.insert(format!("{kind}_e{}_{}", ev.id, rng.random_range(0..ATTR_POOL)));
                    }
                    if rng.random_bool(spec.p_out) {
                        set.insert(format!("{kind}_bg{k}_{}", rng.random_range(0..spec.events_per_client)));
                    }
                }
                messages.push(Message {
                    id: format!("c{k}_m{idx}"),
                    embedding,
                    timestamp,
                    user,
                    hashtags,
                    entities,
                    event_id: ev.id,
                });
            }
        }
        messages.shuffle(&mut rng);
        for (i, m) in messages.iter_mut().enumerate() {
            m.id = format!("c{k}_m{i}");
        }
        out.push(Dataset::new(
            messages,
            spec.embed_dim,
            fractions,
            spec.seed.wrapping_add(k as u64),
        )?);
    }
    Ok(out)
}
