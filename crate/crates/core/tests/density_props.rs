use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raycanopy::density::{canopy_density, debias_factor, estimate_field, posterior, uncensored_lambda};
use raycanopy::voxelgrid::expand_undersampled;
use raycanopy::{Estimator, RayTally, StatsGrid, Vec3, VoxelGrid, VoxelStats};

fn voxel(records: &[(f64, bool)]) -> VoxelStats {
    let mut s = VoxelStats::default();
    for &(x, hit) in records {
        s.push(x, x.max(0.05), hit);
    }
    s
}

fn records() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0.001f64..0.2, any::<bool>()), 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scaling_depths_scales_density_inversely(recs in records(), c in 0.01f64..100.0) {
        let a = voxel(&recs);
        let scaled: Vec<(f64, bool)> = recs.iter().map(|&(x, h)| (x * c, h)).collect();
        let b = voxel(&scaled);
        let (da, db) = (canopy_density(&a, 2.0).unwrap().value, canopy_density(&b, 2.0).unwrap().value);
        prop_assert!((db - da / c).abs() <= 1e-12 * (da / c).max(1e-300));
    }

    #[test]
    fn extra_miss_never_raises_density_beyond_debias_ratio(recs in records(), delta in 0.0f64..0.3) {
        let before = voxel(&recs);
        let mut after = before.clone();
        after.push(delta, delta.max(0.05), false);
        let d0 = canopy_density(&before, 2.0).unwrap().value;
        let d1 = canopy_density(&after, 2.0).unwrap().value;
        let n = before.n;
        if n >= 2 {
            prop_assert!(d1 <= d0 * debias_factor(n + 1) / debias_factor(n) * (1.0 + 1e-12));
        } else {
            // d(1) = 0, so the single-ray estimate is zero and the bound is vacuous.
            prop_assert_eq!(d0, 0.0);
        }
    }

    #[test]
    fn posterior_mean_is_hits_over_depth(recs in records()) {
        let s = voxel(&recs);
        prop_assume!(s.m > 0);
        let stats = posterior(&s, 0.0, 0.0).lambda_stats().unwrap();
        prop_assert_eq!(stats.mean, s.m as f64 / s.sum_x);
    }

    #[test]
    fn debias_factor_rises_to_one(n in 1u32..100_000) {
        prop_assert!(debias_factor(n + 1) > debias_factor(n));
        prop_assert!(debias_factor(n) < 1.0);
        prop_assert!((1.0 - debias_factor(n) - 1.0 / n as f64).abs() < 1e-12);
    }
}

#[test]
fn debias_factor_edges() {
    assert_eq!(debias_factor(1), 0.0);
    assert_eq!(debias_factor(2), 0.5);
    assert!(1.0 - debias_factor(1_000_000) < 1.1e-6);
}

#[test]
fn uncensored_examples() {
    let (l, sd) = uncensored_lambda(&[1.0, 1.0]).unwrap();
    assert_eq!(l, 0.5);
    assert!(sd.is_none());
    assert!(uncensored_lambda(&[1.0]).is_err());
}

#[test]
fn uncensored_mean_within_three_standard_errors() {
    let lambda = 3.0;
    let exp = rand_distr::Exp::new(lambda).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let batches = 100_000;
    let estimates: Vec<f64> = (0..batches)
        .map(|_| {
            let xs: Vec<f64> = (0..50).map(|_| rng.sample(exp)).collect();
            uncensored_lambda(&xs).unwrap().0
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / batches as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    assert!((mean - lambda).abs() < 0.01 * lambda, "mean {mean}");
    assert!((mean - lambda).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn single_sampled_voxel_matches_canopy_density() {
    let grid = VoxelGrid::new(Vec3::zeros(), 0.1, [1, 1, 1], 0).unwrap();
    let mut stats = StatsGrid::<VoxelStats>::empty(grid);
    stats.stats[0] = voxel(&[(0.05, true), (0.1, false), (0.02, true), (0.08, false)]);
    let ex = expand_undersampled(&stats, 1);
    let field = estimate_field(&ex.stats, 2.0, Estimator::Mean);
    assert_eq!(field.density[0], canopy_density(&stats.stats[0], 2.0).unwrap().value);
    assert!(field.observed[0]);
    assert_eq!(field.n[0], stats.stats[0].n());
}
