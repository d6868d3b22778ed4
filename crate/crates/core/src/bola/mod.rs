//! Local aggregation by one-dimensional Bayesian optimization.
//!
//! A client receives a global model θ^g and holds its own θ^l. It searches
//! the interpolation weight λ ∈ [α, 1] of `λ·θ^l + (1−λ)·θ^g` that maximizes
//! clustering quality on its validation split. The search evaluates an
//! evenly spaced initial design, then alternates expected improvement and
//! upper-confidence-bound proposals from a Gaussian-process surrogate.

pub mod acquisition;
pub mod gp;

use serde::{Deserialize, Serialize};

use crate::data::MessageGraph;
use crate::encoder::{Encoder, ParamVector};
use crate::error::{Error, Result};
use crate::metrics::{kmeans, nmi};

pub use acquisition::{acquire_ei, acquire_ucb, expected_improvement, normal_cdf, normal_pdf, ucb_beta};
pub use gp::{gpr_fit, GprState, Kernel, LENGTHSCALE_GRID, NOISE_VAR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BolaConfig {
    /// Lower end of the search interval.
    pub alpha: f64,
    pub n_init: usize,
    pub n_iter: usize,
    /// Number of candidate points spanning `[alpha, 1]`.
    pub grid: usize,
    pub ucb_delta: f64,
}

impl Default for BolaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            n_init: 4,
            n_iter: 6,
            grid: 101,
            ucb_delta: 0.1,
        }
    }
}

impl BolaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("bola: {m}")));
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1)", self.alpha));
        }
        if self.n_init < 2 {
            return bad(format!("n_init must be at least 2, got {}", self.n_init));
        }
        if self.grid < self.n_init {
            return bad(format!("grid ({}) smaller than n_init ({})", self.grid, self.n_init));
        }
        if !(self.ucb_delta > 0.0 && self.ucb_delta < 1.0) {
            return bad(format!("ucb_delta {} outside (0, 1)", self.ucb_delta));
        }
        Ok(())
    }

    /// Candidate λ values, ascending from `alpha` to exactly 1.
    pub fn candidates(&self) -> Vec<f64> {
        let step = (1.0 - self.alpha) / (self.grid - 1) as f64;
        (0..self.grid)
            .map(|i| if i + 1 == self.grid { 1.0 } else { self.alpha + step * i as f64 })
            .collect()
    }

    /// Grid indices of the initial design, both endpoints included.
    pub fn initial_design(&self) -> Vec<usize> {
        let last = (self.grid - 1) as f64;
        (0..self.n_init)
            .map(|i| (i as f64 * last / (self.n_init - 1) as f64).round() as usize)
            .collect()
    }
}

/// `λ·θ^l + (1−λ)·θ^g`.
pub fn interpolate(theta_l: &ParamVector, theta_g: &ParamVector, lambda: f64) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Numerical(format!("interpolation weight {lambda} outside [0, 1]")));
    }
    theta_l.lerp(theta_g, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    Init,
    Ei,
    Ucb,
}

impl Acquisition {
    pub fn as_str(self) -> &'static str {
        match self {
            Acquisition::Init => "init",
            Acquisition::Ei => "ei",
            Acquisition::Ucb => "ucb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub acquisition: Acquisition,
    pub lambda: f64,
    /// `None` when the objective failed at this point.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub lambda: f64,
    pub score: f64,
    pub trace: Vec<TraceEntry>,
}

/// Maximizes `objective` over the λ grid. Objective failures are recorded
/// in the trace and skipped; the search fails only if every evaluation
/// fails. The returned λ is the first among the best observed.
pub fn search(config: &BolaConfig, mut objective: impl FnMut(f64) -> Result<f64>) -> Result<SearchOutcome> {
    config.validate()?;
    let grid = config.candidates();
    let mut visited = vec![false; grid.len()];
    let mut trace = Vec::with_capacity(config.n_init + config.n_iter);
    let mut last_err = None;

    let mut evaluate = |lambda: f64| match objective(lambda) {
        Ok(s) if s.is_finite() => Some(s),
        Ok(_) => {
            last_err = Some(Error::NonFinite(format!("objective at lambda {lambda}")));
            None
        }
        Err(e) => {
            log::warn!("objective failed at lambda {lambda}: {e}");
            last_err = Some(e);
            None
        }
    };

    for (i, idx) in config.initial_design().into_iter().enumerate() {
        visited[idx] = true;
        trace.push(TraceEntry {
            iteration: i,
            acquisition: Acquisition::Init,
            lambda: grid[idx],
            score: evaluate(grid[idx]),
        });
    }

    for t in 0..config.n_iter {
        let open: Vec<usize> = (0..grid.len()).filter(|&i| !visited[i]).collect();
        if open.is_empty() {
            break;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = trace
            .iter()
            .filter_map(|e: &TraceEntry| e.score.map(|s| (e.lambda, s)))
            .unzip();
        let acquisition = if t % 2 == 0 { Acquisition::Ei } else { Acquisition::Ucb };
        let pick = if xs.len() < 2 {
            open[0]
        } else {
            let gp = gpr_fit(&xs, &ys)?;
            let cand: Vec<f64> = open.iter().map(|&i| grid[i]).collect();
            let (mu, sigma) = gp.posterior(&cand);
            let k = match acquisition {
                Acquisition::Ucb => acquire_ucb(&mu, &sigma, ucb_beta(grid.len(), t + 1, config.ucb_delta)),
                _ => {
                    let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    acquire_ei(&mu, &sigma, best)
                }
            };
            open[k.expect("non-empty candidate set")]
        };
        visited[pick] = true;
        trace.push(TraceEntry {
            iteration: config.n_init + t,
            acquisition,
            lambda: grid[pick],
            score: evaluate(grid[pick]),
        });
    }

    let mut best: Option<(f64, f64)> = None;
    for e in &trace {
        if let Some(s) = e.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((e.lambda, s));
            }
        }
    }
    match best {
        Some((lambda, score)) => Ok(SearchOutcome { lambda, score, trace }),
        None => Err(last_err.unwrap_or_else(|| Error::Degenerate("no objective evaluations".into()))),
    }
}

/// A client's validation split together with the settings that make its
/// objective deterministic.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub encoder: &'a Encoder,
    pub graph: &'a MessageGraph,
    pub nodes: &'a [usize],
    pub fanouts: (usize, usize),
    pub chunk: usize,
    pub seed: u64,
}

impl Validation<'_> {
    /// Number of distinct events among the validation nodes.
    pub fn num_events(&self) -> usize {
        let mut ids: Vec<u64> = self.nodes.iter().map(|&n| self.graph.labels[n]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Validation NMI of the given parameters.
    pub fn score(&self, params: &ParamVector) -> Result<f64> {
        let k = self.num_events();
        if k < 2 {
            return Err(Error::Degenerate(format!("validation split has {k} event(s), need at least 2")));
        }
        let h = self.encoder.embed(params, self.graph, self.nodes, self.fanouts, self.chunk, self.seed)?;
        let truth: Vec<u64> = self.nodes.iter().map(|&n| self.graph.labels[n]).collect();
        let pred = kmeans(&h, k, self.seed)?.labels;
        nmi(&pred, &truth)
    }
}

/// Validation NMI of `interpolate(theta_l, theta_g, lambda)`.
pub fn objective(theta_l: &ParamVector, theta_g: &ParamVector, lambda: f64, val: &Validation<'_>) -> Result<f64> {
    val.score(&interpolate(theta_l, theta_g, lambda)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BolaOutcome {
    pub lambda: f64,
    pub score: f64,
    pub theta: ParamVector,
    pub trace: Vec<TraceEntry>,
}

/// Searches λ for one client and returns the interpolated parameters.
pub fn bola_search(
    theta_l: &ParamVector,
    theta_g: &ParamVector,
    val: &Validation<'_>,
    config: &BolaConfig,
) -> Result<BolaOutcome> {
    theta_l.check_layout(theta_g)?;
    let out = search(config, |lambda| objective(theta_l, theta_g, lambda, val))?;
    Ok(BolaOutcome {
        lambda: out.lambda,
        score: out.score,
        theta: interpolate(theta_l, theta_g, out.lambda)?,
        trace: out.trace,
    })
}
