//! Expected improvement and upper-confidence-bound acquisition.

use std::f64::consts::PI;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Complementary error function, fractional error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `E[max(f − best, 0)]` for `f ~ N(mu, sigma²)`.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    let gain = mu - best;
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

fn argmax(scores: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Index maximizing expected improvement over `best`; ties go to the lowest
/// index. `None` only for empty input.
pub fn acquire_ei(mu: &[f64], sigma: &[f64], best: f64) -> Option<usize> {
    argmax(mu.iter().zip(sigma).map(|(&m, &s)| expected_improvement(m, s, best)))
}

/// `β_t = 2 ln(|grid| t² π² / (6δ))`.
pub fn ucb_beta(grid_len: usize, t: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    2.0 * (grid_len as f64 * t * t * PI * PI / (6.0 * delta)).ln()
}

/// Index maximizing `mu + sqrt(beta)·sigma`; ties go to the lowest index.
pub fn acquire_ucb(mu: &[f64], sigma: &[f64], beta: f64) -> Option<usize> {
    let w = beta.max(0.0).sqrt();
    argmax(mu.iter().zip(sigma).map(|(&m, &s)| m + w * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_hand_case() {
        let ei = expected_improvement(0.7, 1.0, 0.7);
        assert!((ei - 0.39894).abs() < 1e-4);
        assert!((ei - normal_pdf(0.0)).abs() < 1e-12);
    }

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.0) - 0.841_344_746).abs() < 1e-7);
        assert!((normal_cdf(-1.96) - 0.024_997_895).abs() < 1e-7);
    }

    #[test]
    fn no_improvement_possible_picks_first() {
        let mu = [0.1, 0.3, 0.2];
        let sigma = [0.0; 3];
        assert_eq!(acquire_ei(&mu, &sigma, 0.5), Some(0));
        assert!(mu.iter().all(|&m| expected_improvement(m, 0.0, 0.5) == 0.0));
    }

    #[test]
    fn ei_prefers_spread_at_equal_mean() {
        assert_eq!(acquire_ei(&[0.4, 0.4], &[0.1, 0.2], 0.5), Some(1));
    }

    #[test]
    fn ucb_zero_beta_is_mean_argmax() {
        assert_eq!(acquire_ucb(&[0.1, 0.5, 0.3], &[9.0, 0.0, 4.0], 0.0), Some(1));
    }

    #[test]
    fn beta_increases() {
        let mut prev = f64::NEG_INFINITY;
        for t in 1..50 {
            let b = ucb_beta(101, t, 0.1);
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn ucb_large_beta_explores() {
        // 0 + sqrt(β)·1 vs 0.1 + 0: index 0 wins once sqrt(β) > 0.1
        let beta = ucb_beta(101, 1, 0.1);
        assert!(beta.sqrt() > 0.1);
        assert_eq!(acquire_ucb(&[0.0, 0.1], &[1.0, 0.0], beta), Some(0));
    }
}
