use efld_core::bound::{BoundConfig, BoundLedger, PairStats, StepValues};
use efld_core::divergence::{hellinger_sq, kl_div, tv_dist, FiniteDist};
use efld_core::rng::stream;
use efld_core::{ExpFamily, ScaledParam};
use proptest::prelude::*;

const FAMILIES: [ExpFamily; 3] = [ExpFamily::Gaussian, ExpFamily::BernoulliPm1, ExpFamily::Bernoulli01];

fn dist(raw: &[f64]) -> FiniteDist {
    let s: f64 = raw.iter().sum();
    FiniteDist::new(raw.iter().map(|v| v / s).collect()).unwrap()
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|k| (prop::collection::vec(1e-3..1.0f64, k), prop::collection::vec(1e-3..1.0f64, k)))
}

proptest! {
    #[test]
    fn bregman_is_between_zero_and_smoothness(
        f in 0usize..3,
        a in prop::collection::vec(-20.0..20.0f64, 1..6),
        shift in prop::collection::vec(-5.0..5.0f64, 6),
    ) {
        let fam = FAMILIES[f];
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
        let d = fam.bregman_div(&a, &b).unwrap();
        let sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        prop_assert!(d >= -1e-12);
        prop_assert!(d <= 0.5 * fam.c2() * sq + 1e-9);
    }

    #[test]
    fn psi_is_convex_and_smooth(f in 0usize..3, t in -1e3..1e3f64) {
        let fam = FAMILIES[f];
        let s = fam.psi_second(t);
        prop_assert!(s >= 0.0 && s <= fam.c2() + 1e-15);
        prop_assert!(fam.psi(t).is_finite());
    }

    #[test]
    fn noise_stays_in_support(f in 0usize..3, theta in prop::collection::vec(-50.0..50.0f64, 1..8), alpha in 1e-3..10.0f64, seed in any::<u64>()) {
        let fam = FAMILIES[f];
        let p = ScaledParam::new(theta, alpha).unwrap();
        let draw = fam.sample_noise(&p, &mut stream(seed, 0));
        for x in draw.as_slice() {
            prop_assert!(fam.support().contains(*x));
        }
    }

    #[test]
    fn divergence_chain_sound_forms((p, q) in pair()) {
        let (p, q) = (dist(&p), dist(&q));
        let h2 = hellinger_sq(&p, &q).unwrap();
        let kl = kl_div(&p, &q).unwrap();
        let tv = tv_dist(&p, &q).unwrap();
        prop_assert!(2.0 * h2 <= kl + 1e-12);
        prop_assert!(h2 <= tv + 1e-12);
        prop_assert!(tv <= (kl / 2.0).sqrt() + 1e-12);
        prop_assert!(2.0 * h2 <= (2.0 * kl).sqrt() + 1e-12);
    }

    #[test]
    fn ledger_is_monotone_and_scales(
        rows in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, 1e-3..1.0f64, 1u64..20), 1..30),
        k in 0.1..10.0f64,
    ) {
        let cfg = BoundConfig::new(100, 8.0, 1.0);
        let mut ledger = BoundLedger::new();
        let mut t = 0;
        let mut last = 0.0;
        for (disc, gsq, alpha, gap) in rows {
            t += gap;
            let step = StepValues { t, epoch: 0, eta: alpha, alpha, sigma: Some(1.0) };
            ledger.push(step, gap, PairStats { mean_disc: disc, mean_grad_sq: gsq, triangle_excess: 0.0 }).unwrap();
            let b = ledger.our_bound(&cfg);
            prop_assert!(b >= last);
            last = b;
        }
        let scaled = ledger.replay_scaled_alpha(k).unwrap().our_bound(&cfg);
        prop_assert!((scaled * k - last).abs() <= 1e-9 * last.max(1e-300));
        let doubled_n = BoundConfig { n: 200, ..cfg.clone() };
        prop_assert!((ledger.our_bound(&doubled_n) * 2.0 - last).abs() <= 1e-12 * last.max(1e-300));
    }

    #[test]
    fn li_dominates_when_gradient_norm_does(
        rows in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, 1e-3..0.1f64, 1e-4..1e-2f64), 1..30),
    ) {
        let cfg = BoundConfig::new(100, 8.0, 1.0);
        let mut ledger = BoundLedger::new();
        for (t, (disc, extra, eta, sigma)) in rows.into_iter().enumerate() {
            let step = StepValues { t: t as u64 + 1, epoch: 0, eta, alpha: sigma / eta, sigma: Some(sigma) };
            let stats = PairStats { mean_disc: disc, mean_grad_sq: disc + extra, triangle_excess: 0.0 };
            ledger.push(step, 1, stats).unwrap();
            prop_assert!(ledger.li_bound(&cfg).unwrap() >= ledger.our_bound(&cfg) * (1.0 - 1e-12));
        }
    }
}
