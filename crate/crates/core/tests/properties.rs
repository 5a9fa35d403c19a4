use alh_core::coefficients::random_segment;
use alh_core::rng::{NoiseStream, StreamKey};
use alh_core::simulate::ParticleCloud;
use alh_core::wasserstein::{w1_sorted, wk_full, wk_truncated};
use alh_core::{PathSegment, PathSpaceConfig};
use proptest::prelude::*;

fn cfg() -> PathSpaceConfig {
    PathSpaceConfig::new(2, 1.0, 0.05, 2.0).unwrap()
}

fn segment(seed: u64, scale: f64) -> PathSegment {
    let mut rng = NoiseStream::new(StreamKey::new(seed, 0, 0));
    random_segment(&cfg(), &mut rng, scale, 0.25)
}

fn cloud(seed: u64, n: usize) -> ParticleCloud {
    let mut rng = NoiseStream::new(StreamKey::new(seed, 1, 0));
    ParticleCloud::uniform((0..n).map(|_| random_segment(&cfg(), &mut rng, 1.0, 0.5)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_absolutely_homogeneous(seed in 0u64..10_000, c in -5.0f64..5.0) {
        let a = segment(seed, 1.0);
        let lhs = a.scale(c).weighted_norm();
        prop_assert!((lhs - c.abs() * a.weighted_norm()).abs() <= 1e-12 * (1.0 + lhs));
    }

    #[test]
    fn distance_satisfies_triangle(s1 in 0u64..10_000, s2 in 0u64..10_000, s3 in 0u64..10_000) {
        let (a, b, c) = (segment(s1, 1.0), segment(s2, 2.0), segment(s3, 0.5));
        prop_assert!(a.distance(&c) <= a.distance(&b) + b.distance(&c) + 1e-12);
        prop_assert!((a.distance(&b) - b.distance(&a)).abs() < 1e-14);
    }

    #[test]
    fn truncation_is_monotone_in_level(seed in 0u64..10_000, k in 1usize..40) {
        let a = segment(seed, 1.0);
        let lo = a.truncated_norm(0.05 * k as f64).unwrap();
        let hi = a.truncated_norm(0.05 * (k + 1).min(40) as f64).unwrap();
        prop_assert!(lo <= hi + 1e-14);
        prop_assert!(hi <= a.weighted_norm() + 1e-14);
    }

    #[test]
    fn advancing_contracts_the_history(seed in 0u64..10_000, v in -3.0f64..3.0, w in -3.0f64..3.0) {
        let a = segment(seed, 1.0);
        let b = a.advance(&[v, w]).unwrap();
        let decay = (-a.config().tau * a.config().h).exp();
        let bound = (v.hypot(w)).max(decay * a.weighted_norm());
        prop_assert!(b.weighted_norm() <= bound + 1e-12);
        prop_assert_eq!(b.endpoint(), &[v, w][..]);
    }

    #[test]
    fn wasserstein_is_a_metric_on_clouds(s1 in 0u64..1000, s2 in 0u64..1000, n in 1usize..6) {
        let (a, b) = (cloud(s1, n), cloud(s2 + 5000, n));
        prop_assert_eq!(wk_full(&a, &a, 2.0).unwrap(), 0.0);
        let ab = wk_full(&a, &b, 2.0).unwrap();
        prop_assert!((ab - wk_full(&b, &a, 2.0).unwrap()).abs() < 1e-12);
        prop_assert!(wk_truncated(&a, &b, 2.0, 1.0).unwrap() <= ab + 1e-12);
        prop_assert!(wk_full(&a, &b, 1.0).unwrap() <= ab + 1e-12);
    }

    #[test]
    fn sorted_w1_of_a_translate_is_the_shift(xs in prop::collection::vec(-10.0f64..10.0, 1..50), c in -3.0f64..3.0) {
        let ys: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((w1_sorted(&xs, &ys).unwrap() - c.abs()).abs() < 1e-9);
        prop_assert!((w1_sorted(&ys, &xs).unwrap() - w1_sorted(&xs, &ys).unwrap()).abs() < 1e-12);
    }
}
