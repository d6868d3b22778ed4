//! One-dimensional Gaussian-process regression with a squared-exponential
//! kernel, fitted on standardized targets.

use crate::error::{Error, Result};

pub const LENGTHSCALE_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
pub const NOISE_VAR: f64 = 1e-4;
const MAX_JITTER: f64 = 1e-6;

/// Kernel hyperparameters. Variances refer to the standardized targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Kernel {
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.signal_var * (-0.5 * d * d / (self.lengthscale * self.lengthscale)).exp()
    }
}

/// Fitted GP: observations, kernel, and the Cholesky factor of
/// `K + σ_n² I` over the observed inputs.
#[derive(Debug, Clone)]
pub struct GprState {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub kernel: Kernel,
    /// Target mean and standard deviation used for standardization; the
    /// prior mean is zero in standardized units, `y_mean` in raw units.
    pub y_mean: f64,
    pub y_scale: f64,
    /// `(lengthscale, log marginal likelihood)` for each grid value tried.
    pub log_likelihoods: Vec<(f64, f64)>,
    flat: bool,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

/// Lower-triangular Cholesky factor (row-major `n × n`), or `None` if the
/// matrix is not numerically positive definite.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

fn back_sub_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

impl GprState {
    /// GP on standardized targets with a fixed kernel.
    pub fn with_kernel(xs: &[f64], ys: &[f64], kernel: Kernel) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(Error::Data(format!("{} inputs but {} targets", n, ys.len())));
        }
        if n < 2 {
            return Err(Error::Degenerate(format!("GP fit needs at least two observations, got {n}")));
        }
        if kernel.lengthscale <= 0.0 || kernel.signal_var <= 0.0 || kernel.noise_var <= 0.0 {
            return Err(Error::Config(format!("kernel parameters must be positive: {kernel:?}")));
        }
        let (y_mean, y_scale) = standardization(ys);
        let flat = y_scale < 1e-12;
        let z: Vec<f64> = if flat {
            vec![0.0; n]
        } else {
            ys.iter().map(|y| (y - y_mean) / y_scale).collect()
        };

        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = kernel.eval(xs[i], xs[j]);
            }
            gram[i * n + i] += kernel.noise_var;
        }
        let mut jitter = 0.0;
        let chol = loop {
            let mut a = gram.clone();
            for i in 0..n {
                a[i * n + i] += jitter;
            }
            if let Some(l) = cholesky(&a, n) {
                break l;
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
            if jitter > MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::Numerical("GP Gram matrix not positive definite after jitter".into()));
            }
        };
        let alpha = back_sub_t(&chol, n, &forward_sub(&chol, n, &z));
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            kernel,
            y_mean,
            y_scale,
            log_likelihoods: Vec::new(),
            flat,
            chol,
            alpha,
        })
    }

    /// Exact log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.xs.len();
        let z: Vec<f64> = self.ys.iter().map(|y| self.standardize(*y)).collect();
        let fit: f64 = z.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let log_det: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    fn standardize(&self, y: f64) -> f64 {
        if self.flat {
            0.0
        } else {
            (y - self.y_mean) / self.y_scale
        }
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// Posterior mean and standard deviation of the latent function at each
    /// candidate, in raw target units.
    pub fn posterior(&self, candidates: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if self.flat {
            return (vec![self.y_mean; candidates.len()], vec![0.0; candidates.len()]);
        }
        let n = self.xs.len();
        let mut mu = Vec::with_capacity(candidates.len());
        let mut sigma = Vec::with_capacity(candidates.len());
        for &c in candidates {
            let k_star: Vec<f64> = self.xs.iter().map(|&x| self.kernel.eval(x, c)).collect();
            let mean: f64 = k_star.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
            let v = forward_sub(&self.chol, n, &k_star);
            let var = self.kernel.eval(c, c) - v.iter().map(|x| x * x).sum::<f64>();
            mu.push(self.y_mean + self.y_scale * mean);
            sigma.push(self.y_scale * var.max(0.0).sqrt());
        }
        (mu, sigma)
    }
}

fn standardization(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Fits the GP, choosing the lengthscale from [`LENGTHSCALE_GRID`] by
/// maximum marginal likelihood. With all targets equal the posterior is
/// flat at that value with zero spread.
pub fn gpr_fit(xs: &[f64], ys: &[f64]) -> Result<GprState> {
    let mut best: Option<(f64, GprState)> = None;
    let mut lls = Vec::with_capacity(LENGTHSCALE_GRID.len());
    for &ls in &LENGTHSCALE_GRID {
        let gp = GprState::with_kernel(
            xs,
            ys,
            Kernel {
                lengthscale: ls,
                signal_var: 1.0,
                noise_var: NOISE_VAR,
            },
        )?;
        if gp.is_flat() {
            return Ok(gp);
        }
        let ll = gp.log_marginal_likelihood();
        lls.push((ls, ll));
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, gp));
        }
    }
    let (_, mut gp) = best.expect("non-empty grid");
    gp.log_likelihoods = lls;
    Ok(gp)
}
