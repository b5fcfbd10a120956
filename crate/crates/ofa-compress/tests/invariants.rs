//! Property-based invariants: modification algebra, firing-rule bounds,
//! pooling identities, and file round trips over randomized inputs.

use proptest::prelude::*;

use ofa_compress::alphamod::{modify_alpha, LAMBDA_MAX};
use ofa_compress::cif::{fire_count, integrate_and_fire, pool_segments, AlphaWeights, CifOptions};
use ofa_compress::data_io::{read_features, write_features};
use ofa_compress::diffmath::Matrix;
use ofa_compress::training::GuidanceTargets;

fn alpha_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 1..64)
}

proptest! {
    #[test]
    fn modify_alpha_preserves_range(values in alpha_strategy(), lambda in 0.0f64..1.999) {
        let alpha = AlphaWeights::new(values).unwrap();
        let m = modify_alpha(&alpha, lambda).unwrap();
        prop_assert!(m.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn modify_alpha_identity_at_one(values in alpha_strategy()) {
        let alpha = AlphaWeights::new(values).unwrap();
        let m = modify_alpha(&alpha, 1.0).unwrap();
        prop_assert_eq!(m.values(), alpha.values());
    }

    #[test]
    fn modified_mass_non_increasing(values in alpha_strategy()) {
        let alpha = AlphaWeights::new(values).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=40 {
            let lambda = LAMBDA_MAX * i as f64 / 40.0;
            let mass = modify_alpha(&alpha, lambda).unwrap().sum();
            prop_assert!(mass <= prev + 1e-12, "mass {} after {} at lambda {}", mass, prev, lambda);
            prev = mass;
        }
    }

    #[test]
    fn continuity_across_lambda_one(values in alpha_strategy()) {
        let alpha = AlphaWeights::new(values).unwrap();
        let lo = modify_alpha(&alpha, 1.0 - 1e-6).unwrap();
        let hi = modify_alpha(&alpha, 1.0 + 1e-6).unwrap();
        for (a, b) in lo.values().iter().zip(hi.values()) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn mass_count_bound(values in alpha_strategy()) {
        let alpha = AlphaWeights::new(values).unwrap();
        let count = fire_count(&alpha).unwrap() as f64;
        let total = alpha.sum();
        let eps = 1e-9;
        // One extra event can come from the tail or forced rule.
        prop_assert!(count >= (total - eps).floor().min(1.0));
        prop_assert!(count <= (total + eps).floor() + 1.0);
    }

    #[test]
    fn fire_count_monotone_in_lambda(values in alpha_strategy()) {
        let alpha = AlphaWeights::new(values).unwrap();
        let t = alpha.len();
        let mut prev = usize::MAX;
        for i in 0..=20 {
            let lambda = LAMBDA_MAX * i as f64 / 20.0;
            let count = fire_count(&modify_alpha(&alpha, lambda).unwrap()).unwrap();
            prop_assert!(count <= prev);
            prev = count;
        }
        prop_assert_eq!(fire_count(&modify_alpha(&alpha, 0.0).unwrap()).unwrap(), t);
        prop_assert_eq!(fire_count(&modify_alpha(&alpha, LAMBDA_MAX).unwrap()).unwrap(), 1);
    }

    #[test]
    fn unit_alpha_pooling_is_identity(
        rows in 1usize..32,
        cols in 1usize..8,
        seed in any::<u32>(),
    ) {
        let alpha = AlphaWeights::new(vec![1.0; rows]).unwrap();
        let seg = integrate_and_fire(&alpha, &CifOptions::default()).unwrap();
        let features = Matrix::from_fn(rows, cols, |r, c| {
            let h = (r * 31 + c * 17) as u64 ^ seed as u64;
            (h as f64 * 0.001).sin()
        });
        let pooled = pool_segments(&features, &alpha, &seg).unwrap();
        prop_assert_eq!(pooled.frames, features);
    }

    #[test]
    fn total_pooled_weight_matches_mass(values in alpha_strategy()) {
        let alpha = AlphaWeights::new(values).unwrap();
        prop_assume!(alpha.sum() > 0.0);
        let seg = integrate_and_fire(&alpha, &CifOptions::default()).unwrap();
        let pooled_weight: f64 = seg.spans.iter().map(|s| s.total_weight()).sum();
        let last = seg.events.last().unwrap();
        if last.is_tail {
            prop_assert!((pooled_weight - alpha.sum()).abs() < 1e-9);
        } else {
            prop_assert!((pooled_weight - seg.events.len() as f64).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn feature_files_round_trip_bit_exactly(
        rows in 1usize..48,
        cols in 1usize..12,
        seed in any::<u64>(),
        with_bounds in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let features = Matrix::from_fn(rows, cols, |r, c| {
            let h = (r * 131 + c * 37) as u64 ^ seed;
            ((h % 1000) as f64 - 500.0) * 0.01
        });
        let targets = if with_bounds {
            let mut bits = vec![0u8; rows];
            bits[rows - 1] = 1;
            if rows > 3 {
                bits[rows / 2] = 1;
            }
            Some(GuidanceTargets::new(bits).unwrap())
        } else {
            None
        };
        let p1 = dir.path().join("a.ofaf");
        let p2 = dir.path().join("b.ofaf");
        write_features(&p1, &features, 20.0, targets.as_ref()).unwrap();
        let (feats, period, t2) = read_features(&p1).unwrap();
        write_features(&p2, &feats, period, t2.as_ref()).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        prop_assert_eq!(t2, targets);
    }
}
