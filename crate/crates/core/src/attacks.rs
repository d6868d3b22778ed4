//! Poisoning transforms for robustness experiments.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoder::ParamVector;
use crate::error::{Error, Result};

/// Standard-normal noise with the layout and Euclidean norm of `theta`.
pub fn poison_model(theta: &ParamVector, seed: u64) -> Result<ParamVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..theta.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nn = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if nn > 0.0 { theta.norm() / nn } else { 0.0 };
    noise.iter_mut().for_each(|v| *v *= scale);
    ParamVector::new(theta.layout().clone(), noise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPoisonConfig {
    /// Fraction of training records altered.
    pub rate: f64,
    /// Label given to poisoned records; the smallest event id of the
    /// client's dataset when absent.
    pub target_event: Option<u64>,
}

impl Default for DataPoisonConfig {
    fn default() -> Self {
        Self {
            rate: 0.3,
            target_event: None,
        }
    }
}

/// Random direction scaled to the mean embedding norm of `dataset`.
pub fn default_trigger(dataset: &Dataset, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: Vec<f64> = (0..dataset.text_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean_norm = dataset
        .messages
        .iter()
        .map(|m| m.embedding.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / dataset.len().max(1) as f64;
    let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if tn > 0.0 {
        t.iter_mut().for_each(|v| *v *= mean_norm / tn);
    }
    t
}

/// Adds `trigger` to the embeddings of `⌊rate·|train|⌋` uniformly chosen
/// training records and relabels them `target_event`. Validation and test
/// records are untouched.
pub fn poison_data(dataset: &Dataset, rate: f64, target_event: u64, trigger: &[f64], seed: u64) -> Result<Dataset> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!("poison rate {rate} outside (0, 1]")));
    }
    if trigger.len() != dataset.text_dim {
        return Err(Error::Config(format!(
            "trigger has length {}, embeddings have {}",
            trigger.len(),
            dataset.text_dim
        )));
    }
    if !dataset.messages.iter().any(|m| m.event_id == target_event) {
        return Err(Error::Data(format!("target event {target_event} does not occur in the dataset")));
    }
    let train = &dataset.splits.train;
    let count = (rate * train.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    for i in sample(&mut rng, train.len(), count) {
        let m = &mut out.messages[train[i]];
        m.embedding.iter_mut().zip(trigger).for_each(|(e, t)| *e += t);
        m.event_id = target_event;
    }
    Ok(out)
}
