mod common;

use common::gp_dense_posterior;
use dame_core::bola::{gpr_fit, search, Acquisition, BolaConfig};
use proptest::prelude::*;

#[test]
fn posterior_matches_dense_solve() {
    let sets: [(&[f64], &[f64]); 4] = [
        (&[0.5, 1.0], &[0.2, 0.7]),
        (&[0.6, 0.9], &[0.9, 0.1]),
        (&[0.5, 0.75, 1.0], &[0.3, 0.8, 0.5]),
        (&[0.5, 0.665, 1.0], &[0.61, 0.6, 0.72]),
    ];
    for (xs, ys) in sets {
        let gp = gpr_fit(xs, ys).unwrap();
        let cands: Vec<f64> = (0..=20).map(|i| 0.5 + 0.025 * i as f64).collect();
        let (mu, sigma) = gp.posterior(&cands);
        for (i, &c) in cands.iter().enumerate() {
            let (m, v) = gp_dense_posterior(xs, ys, gp.kernel, c);
            assert!((mu[i] - m).abs() < 1e-8, "mean at {c}: {} vs {m}", mu[i]);
            assert!((sigma[i] * sigma[i] - v).abs() < 1e-8, "variance at {c}: {} vs {v}", sigma[i] * sigma[i]);
        }
    }
}

fn objective() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn never_below_pure_local(coef in objective()) {
        let f = |x: f64| coef[0] + coef[1] * x + coef[2] * (7.0 * x).sin() + coef[3] * (x - 0.7).powi(2);
        let cfg = BolaConfig::default();
        let out = search(&cfg, |x| Ok(f(x))).unwrap();
        prop_assert!(out.score >= f(1.0));
        prop_assert_eq!(out.score, f(out.lambda));
        prop_assert!(out.trace.len() <= cfg.n_init + cfg.n_iter);
        let best = out.trace.iter().filter_map(|t| t.score).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.score, best);
        for t in &out.trace {
            prop_assert!(t.lambda >= cfg.alpha && t.lambda <= 1.0);
        }
        let mut seen: Vec<f64> = out.trace.iter().map(|t| t.lambda).collect();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        prop_assert_eq!(seen.len(), out.trace.len());
        let kinds: Vec<Acquisition> = out.trace.iter().skip(cfg.n_init).map(|t| t.acquisition).collect();
        for (i, k) in kinds.iter().enumerate() {
            prop_assert_eq!(*k, if i % 2 == 0 { Acquisition::Ei } else { Acquisition::Ucb });
        }
    }

    #[test]
    fn posterior_spread_is_sane(ys in proptest::collection::vec(0.0f64..1.0, 3)) {
        let xs = [0.5, 0.75, 1.0];
        let gp = gpr_fit(&xs, &ys).unwrap();
        let cands: Vec<f64> = (0..=50).map(|i| 0.5 + 0.01 * i as f64).collect();
        let (mu, sigma) = gp.posterior(&cands);
        prop_assert!(sigma.iter().all(|s| *s >= 0.0 && s.is_finite()));
        prop_assert!(mu.iter().all(|m| m.is_finite()));
        let (_, at_obs) = gp.posterior(&xs);
        let (_, between) = gp.posterior(&[0.625]);
        prop_assert!(at_obs.iter().all(|s| *s <= between[0] + 1e-12));
    }
}
