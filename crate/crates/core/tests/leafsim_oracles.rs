use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raycanopy::leafsim::rays::trace;
use raycanopy::leafsim::turbid::{DEFAULT_LAMBDAS, DEFAULT_NS};
use raycanopy::leafsim::{
    bias_curves, debiased_error_surface, gen_leaf_scene, sample_turbid, triangle_bias_experiment,
    NormalDistributionSpec, RayDistribution, SurfaceConfig, TriangleBiasConfig, TurbidConfig, TurbidEstimator,
};
use raycanopy::voxelgrid::accumulate_sums;
use raycanopy::{density, Estimator, Ray, RayCloud, Vec3, VoxelGrid};

/// Area of a triangle inside the cube `[0, w]³`, by splitting it into `k²`
/// congruent sub-triangles and keeping those whose centroid is inside.
fn rasterised_area(tri: &[Vec3; 3], w: f64, k: usize) -> f64 {
    let [a, b, c] = *tri;
    let (u, v) = ((b - a) / k as f64, (c - a) / k as f64);
    let small = 0.5 * u.cross(&v).norm();
    let inside = |p: Vec3| (0..3).all(|i| p[i] >= 0.0 && p[i] <= w);
    let mut area = 0.0;
    for i in 0..k {
        for j in 0..k - i {
            let p = a + u * i as f64 + v * j as f64;
            if inside(p + (u + v) / 3.0) {
                area += small;
            }
            if i + j + 1 < k && inside(p + (u + v) * (2.0 / 3.0)) {
                area += small;
            }
        }
    }
    area
}

#[test]
fn clipped_leaf_area_matches_rasterisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for (l, a) in [(0.1, 0.04), (0.05, 0.01), (0.025, 0.012)] {
        let scene = gen_leaf_scene(0.1, l, a, &NormalDistributionSpec::SPHERICAL, &mut rng).unwrap();
        let raster: f64 = scene.triangles.iter().map(|t| rasterised_area(t, 0.1, 400)).sum();
        let clipped: f64 = scene.clipped_areas.iter().sum();
        assert!(clipped <= scene.total_area() + 1e-12);
        assert!(
            (raster - clipped).abs() <= 0.005 * clipped,
            "l={l}: raster {raster} clipped {clipped}"
        );
        assert!((scene.true_density - clipped / 1e-3).abs() < 1e-9);
    }
}

/// Nearest hit parameter by plane intersection and edge-side tests.
fn brute_force_hit(tris: &[[Vec3; 3]], o: &Vec3, d: &Vec3, t0: f64, t1: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for [a, b, c] in tris {
        let n = (b - a).cross(&(c - a));
        let denom = n.dot(d);
        if denom.abs() < 1e-15 {
            continue;
        }
        let t = n.dot(&(a - o)) / denom;
        if !(t >= t0 && t <= t1) {
            continue;
        }
        let p = o + d * t;
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|(s, e)| (*e - *s).cross(&(p - *s)).dot(&n) >= 0.0);
        if inside && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best
}

fn slab(o: &Vec3, d: &Vec3, w: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a] < 0.0 || o[a] > w {
                return None;
            }
            continue;
        }
        let (p, q) = ((0.0 - o[a]) / d[a], (w - o[a]) / d[a]);
        lo = lo.max(p.min(q));
        hi = hi.min(p.max(q));
    }
    (hi > lo).then_some((lo, hi))
}

#[test]
fn hits_match_exhaustive_intersection() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let scene = gen_leaf_scene(0.1, 0.05, 0.03, &NormalDistributionSpec::SPHERICAL, &mut rng).unwrap();
    assert!(scene.triangles.len() > 5);
    let bounds = scene.bounds();
    let mut hits = 0;
    for dist in [
        RayDistribution::UniformRandom,
        RayDistribution::Trawling,
        RayDistribution::SPINNING_DEFAULT,
    ] {
        for _ in 0..1000 {
            let (o, d) = dist.sample(0.1, &mut rng);
            let Some((x, y, hit)) = trace(&scene, &bounds, &o, &d) else {
                continue;
            };
            let (t0, t1) = slab(&o, &d, 0.1).unwrap();
            let oracle = brute_force_hit(&scene.triangles, &o, &d, t0, t1);
            assert_eq!(hit, oracle.is_some(), "{} ray {o:?} {d:?}", dist.name());
            assert!((y - (t1 - t0) * d.norm()).abs() < 1e-12);
            if let Some(t) = oracle {
                hits += 1;
                assert!((x - (t - t0) * d.norm()).abs() < 1e-9);
            }
        }
    }
    assert!(hits > 100);
}

#[test]
fn turbid_hit_fraction_within_three_sigma() {
    let config = TurbidConfig {
        lambda: 0.01,
        n: 10_000,
        y: 1.0,
        trials: 10,
        seed: 3,
    };
    let p = 1.0 - (-0.01f64).exp();
    for trial in sample_turbid(&config).unwrap() {
        let sigma = (p * (1.0 - p) / 10_000.0).sqrt();
        let f = trial.m as f64 / 10_000.0;
        assert!((f - p).abs() < 3.0 * sigma, "fraction {f} vs {p}");
    }
}

#[test]
fn dense_limit_intercepts_at_the_origin() {
    let config = TurbidConfig {
        lambda: 1e6,
        n: 1000,
        y: 1.0,
        trials: 5,
        seed: 4,
    };
    for trial in sample_turbid(&config).unwrap() {
        assert_eq!(trial.m, 1000);
        assert!(trial.depths.iter().all(|x| *x < 1e-4));
    }
}

#[test]
fn intercepted_depth_matches_numerical_integration() {
    let (lambda, y) = (2.0f64, 1.0f64);
    // Composite Simpson over [0, y].
    let k = 2000;
    let h = y / k as f64;
    let f = |x: f64| x * lambda * (-lambda * x).exp();
    let integral = (0..=k)
        .map(|i| {
            let w = if i == 0 || i == k {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * f(i as f64 * h)
        })
        .sum::<f64>()
        * h
        / 3.0;
    let expected = integral / (1.0 - (-lambda * y).exp());

    let trials = sample_turbid(&TurbidConfig {
        lambda,
        n: 1000,
        y,
        trials: 200,
        seed: 5,
    })
    .unwrap();
    let (mut sum, mut count) = (0.0, 0usize);
    for t in &trials {
        for x in t.depths.iter().filter(|x| **x < y) {
            sum += x;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    assert!(
        (mean - expected).abs() < 0.01 * expected,
        "mean {mean} expected {expected}"
    );
}

#[test]
fn uncensored_estimator_is_unbiased() {
    let curves = bias_curves(
        &[0.5, 2.0],
        &[10],
        f64::INFINITY,
        100_000,
        &[TurbidEstimator::Uncensored],
        6,
    )
    .unwrap();
    for cell in &curves.cells {
        assert!(
            cell.mean_error.abs() < 0.01,
            "λ={} error {}",
            cell.lambda,
            cell.mean_error
        );
    }
}

#[test]
fn ml_mode_underestimates_at_two_rays() {
    let curves = bias_curves(&[0.1, 0.2], &[2], 1.0, 20_000, &[TurbidEstimator::MlMode], 7).unwrap();
    for cell in &curves.cells {
        assert!(cell.mean_error < -0.5, "λ={} error {}", cell.lambda, cell.mean_error);
    }
}

#[test]
fn debiased_dominates_ml_mode() {
    let curves = bias_curves(
        &DEFAULT_LAMBDAS,
        &DEFAULT_NS,
        1.0,
        20_000,
        &[TurbidEstimator::MlMode, TurbidEstimator::Debiased],
        8,
    )
    .unwrap();
    for &lambda in &DEFAULT_LAMBDAS {
        for &n in DEFAULT_NS.iter().filter(|n| **n >= 3) {
            let ml = curves.get(lambda, n, TurbidEstimator::MlMode).unwrap();
            let db = curves.get(lambda, n, TurbidEstimator::Debiased).unwrap();
            assert!(
                db.mean_error.abs() <= ml.mean_error.abs() + 2.0 * db.std_error.max(ml.std_error),
                "λ={lambda} n={n}: debiased {} ml {}",
                db.mean_error,
                ml.mean_error
            );
        }
    }
}

/// Small-λ accuracy of the debiased estimator. With y = 1 and λ → 0 almost
/// every interception is the only one in its trial, so the expected
/// normalised error tends to `(n − 1) ln(n / (n − 1)) − 1`: −0.137 at n = 4
/// and −0.065 at n = 8. The 5 % bound cannot hold there.
#[test]
fn debiased_small_lambda_within_five_percent() {
    let ns = [4, 8, 16, 32];
    let curves = bias_curves(&[0.1, 0.2], &ns, 1.0, 100_000, &[TurbidEstimator::Debiased], 9).unwrap();
    let mut failures = Vec::new();
    for cell in &curves.cells {
        let limit = (cell.n as f64 - 1.0) * (cell.n as f64 / (cell.n as f64 - 1.0)).ln() - 1.0;
        println!(
            "λ={} n={}: error {:+.4} (small-λ limit {:+.4})",
            cell.lambda, cell.n, cell.mean_error, limit
        );
        if cell.mean_error.abs() >= 0.05 {
            failures.push((cell.lambda, cell.n, cell.mean_error));
        }
    }
    assert!(failures.is_empty(), "cells over 5 %: {failures:?}");
}

/// Residual of the undebiased estimator once many rays enter the voxel.
/// Leaves as wide as the voxel (l = 0.1 m) keep a residual of 0.05 to 0.10
/// at n = 50 and 100, while the smaller leaves fall below 0.05: the finite
/// planar leaves, not the ray count, set the floor there.
#[test]
fn triangle_bias_small_residual_at_many_rays() {
    let table = triangle_bias_experiment(&TriangleBiasConfig {
        ns: vec![50, 100],
        trials: 4000,
        seed: 10,
        ..Default::default()
    })
    .unwrap();
    let mut failures = Vec::new();
    for row in &table.rows {
        println!(
            "l={} A={} n={}: {:+.4} ± {:.4}",
            row.side_length, row.area, row.n, row.error, row.std_error
        );
        if row.error.abs() >= 0.05 {
            failures.push((row.side_length, row.area, row.n, row.error));
        }
    }
    assert!(failures.is_empty(), "residual over 0.05: {failures:?}");
}

#[test]
fn triangle_bias_is_bit_identical_on_rerun() {
    let config = TriangleBiasConfig {
        ns: vec![2, 5, 9],
        trials: 300,
        seed: 11,
        ..Default::default()
    };
    let a = triangle_bias_experiment(&config).unwrap();
    let b = triangle_bias_experiment(&config).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn error_surface_is_reproducible_across_seeds() {
    let a = debiased_error_surface(&SurfaceConfig {
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let b = debiased_error_surface(&SurfaceConfig {
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let (ma, mb) = (a.mean_abs_error(), b.mean_abs_error());
    assert!((ma - mb).abs() < 0.01, "mean |ê| {ma} vs {mb}");
    let (xa, xb) = (a.max_abs_error(), b.max_abs_error());
    println!("max |ê| {xa:.4} vs {xb:.4}");
}

#[test]
fn field_estimate_in_turbid_medium_recovers_g_lambda() {
    let lambda = 3.0;
    let max_range = 5.0;
    let grid = VoxelGrid::new(Vec3::zeros(), 0.1, [5, 5, 5], 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let exp = rand_distr::Exp::new(lambda).unwrap();
    let rays: Vec<Ray> = (0..60_000)
        .map(|i| {
            let origin = Vec3::new(
                rng.random_range(-0.5..1.0),
                rng.random_range(-0.5..1.0),
                rng.random_range(-0.5..1.0),
            );
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let s: f64 = rng.sample(exp);
            if s < max_range {
                Ray::new(origin, origin + dir * s, i as f64, true)
            } else {
                Ray::new(origin, origin + dir * max_range, i as f64, false)
            }
        })
        .collect();
    let cloud = RayCloud::new(rays, max_range, "turbid").unwrap();
    let stats = accumulate_sums(&cloud, &grid);
    let field = density::estimate_field(&stats, 2.0, Estimator::Mean);
    assert!(field.observed.iter().all(|o| *o));
    let mean = field.density.iter().sum::<f64>() / field.density.len() as f64;
    assert!((mean - 2.0 * lambda).abs() < 0.05 * 2.0 * lambda, "mean density {mean}");
}
