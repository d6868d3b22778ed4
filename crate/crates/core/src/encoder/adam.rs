use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ParamVector, grad: &ParamVector, state: &mut AdamState, lr: f64, cfg: AdamConfig) -> Result<()> {
    params.check_layout(grad)?;
    if state.m.len() != params.len() {
        return Err(Error::LayoutMismatch("optimizer state length differs from parameters".into()));
    }
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if grad.values().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient passed to Adam".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grad.values())
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Layout, Segment};
    use std::sync::Arc;

    fn vecs(p: &[f64], g: &[f64]) -> (ParamVector, ParamVector) {
        let l = Arc::new(Layout::new(vec![Segment::new("x", &[p.len()])]));
        (
            ParamVector::new(l.clone(), p.to_vec()).unwrap(),
            ParamVector::new(l, g.to_vec()).unwrap(),
        )
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let (mut p, g) = vecs(&[1.0, -2.0], &[0.0, 0.0]);
        let mut s = AdamState::new(2);
        adam_step(&mut p, &g, &mut s, 1e-3, AdamConfig::default()).unwrap();
        assert_eq!(p.values(), &[1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let (mut p, g) = vecs(&[0.0, 0.0, 0.0], &[3.0, -0.01, 250.0]);
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, 1e-3, AdamConfig::default()).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for (pv, gv) in p.values().iter().zip(g.values()) {
            let expected = -1e-3 * gv / (gv.abs() + 1e-8);
            assert!((pv - expected).abs() < 1e-15);
            assert_eq!(pv.signum(), -gv.signum());
        }
    }

    #[test]
    fn deterministic() {
        let (p0, g) = vecs(&[0.5, 0.1], &[0.3, -0.2]);
        let mut s0 = AdamState::new(2);
        s0.step = 3;
        s0.m = vec![0.1, 0.2];
        s0.v = vec![0.01, 0.02];
        let (mut a, mut sa) = (p0.clone(), s0.clone());
        let (mut b, mut sb) = (p0, s0);
        adam_step(&mut a, &g, &mut sa, 1e-3, AdamConfig::default()).unwrap();
        adam_step(&mut b, &g, &mut sb, 1e-3, AdamConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let (mut p, mut g) = vecs(&[0.0], &[0.0]);
        g.values_mut()[0] = f64::NAN;
        assert!(adam_step(&mut p, &g, &mut AdamState::new(1), 1e-3, AdamConfig::default()).is_err());
    }
}
