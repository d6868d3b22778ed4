//! Experiment configuration files.
//!
//! An experiment is described by one TOML document: which strategies to run,
//! the repetition seeds, where the client corpora come from, which clients
//! are adversarial and the [`FederationConfig`] shared by every run. The
//! encoder input width is always derived from the data.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, synthesize_clients, Dataset, SplitFractions, SynthSpec};
use crate::error::{Error, Result};
use crate::federation::{FederationConfig, Role, Strategy};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Generate the corpora instead of reading them.
    pub synth: Option<SynthSpec>,
    /// One record file per client, relative to the config file.
    pub files: Vec<PathBuf>,
    /// Embedding width of the record files.
    pub text_dim: Option<usize>,
    /// Client `k` splits its file with seed `split_seed + k`.
    pub split_seed: u64,
    pub fractions: SplitFractions,
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        self.fractions.validate()?;
        match (&self.synth, self.files.is_empty()) {
            (Some(spec), true) => spec.validate(),
            (None, false) => match self.text_dim {
                Some(d) if d > 0 => Ok(()),
                _ => Err(Error::Config("data.text_dim is required with data.files".into())),
            },
            (Some(_), false) => Err(Error::Config("set either data.synth or data.files, not both".into())),
            (None, true) => Err(Error::Config("no data source: set data.synth or data.files".into())),
        }
    }

    pub fn num_clients(&self) -> usize {
        self.synth.as_ref().map_or(self.files.len(), |s| s.num_clients)
    }

    pub fn text_dim(&self) -> usize {
        self.synth.as_ref().map_or(self.text_dim.unwrap_or(0), |s| s.embed_dim)
    }

    /// Generates or loads the client corpora. Relative file paths are
    /// resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<Vec<Dataset>> {
        self.validate()?;
        if let Some(spec) = &self.synth {
            return synthesize_clients(spec, self.fractions);
        }
        let text_dim = self.text_dim();
        self.files
            .iter()
            .enumerate()
            .map(|(k, f)| load_dataset(&base.join(f), text_dim, self.fractions, self.split_seed.wrapping_add(k as u64)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolesConfig {
    pub model_poisoners: Vec<usize>,
    pub data_poisoners: Vec<usize>,
}

impl RolesConfig {
    pub fn assign(&self, num_clients: usize) -> Result<Vec<Role>> {
        let mut roles = vec![Role::Honest; num_clients];
        let lists = [(&self.model_poisoners, Role::ModelPoisoner), (&self.data_poisoners, Role::DataPoisoner)];
        for (ids, role) in lists {
            for &k in ids {
                match roles.get_mut(k) {
                    None => return Err(Error::Config(format!("{} client {k} out of range (K = {num_clients})", role.as_str()))),
                    Some(r) if *r != Role::Honest => {
                        return Err(Error::Config(format!("client {k} is given more than one adversarial role")))
                    }
                    Some(r) => *r = role,
                }
            }
        }
        Ok(roles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub roles: RolesConfig,
    pub federation: FederationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            data: DataConfig {
                synth: Some(SynthSpec::default()),
                ..DataConfig::default()
            },
            roles: RolesConfig::default(),
            federation: FederationConfig::default(),
        }
        .normalized()
    }
}

impl ExperimentConfig {
    /// The six-client synthetic benchmark: event means confined to a rank-4
    /// subspace of a 32-dimensional embedding, so a learned projection pays
    /// off and pooling data across clients helps learn it.
    pub fn benchmark() -> Self {
        let mut cfg = Self {
            data: DataConfig {
                synth: Some(SynthSpec {
                    noise: 1.5,
                    signal_dim: Some(4),
                    ..SynthSpec::default()
                }),
                ..DataConfig::default()
            },
            ..Self::default()
        };
        cfg.federation.train.lr = 5e-3;
        cfg.federation.train.batch_size = 64;
        cfg.normalized()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = cfg.normalized();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Puts Local first, drops duplicate strategies and derives the encoder
    /// input width from the data.
    pub fn normalized(mut self) -> Self {
        let mut strategies = vec![Strategy::Local];
        for s in &self.strategies {
            if !strategies.contains(s) {
                strategies.push(*s);
            }
        }
        self.strategies = strategies;
        self.federation.encoder.d_in = self.data.text_dim() + 2;
        self
    }

    pub fn with_seed_override(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seeds = vec![s];
        }
        self
    }

    pub fn with_strategy_override(mut self, strategies: Option<Vec<Strategy>>) -> Self {
        if let Some(s) = strategies {
            self.strategies = s;
        }
        self.normalized()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        self.data.validate()?;
        self.roles.assign(self.data.num_clients())?;
        self.federation.validate()
    }

    pub fn roles(&self) -> Result<Vec<Role>> {
        self.roles.assign(self.data.num_clients())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(&json))
}
