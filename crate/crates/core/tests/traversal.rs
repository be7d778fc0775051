mod common;

use common::clipped_length;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raycanopy::voxelgrid::{accumulate, accumulate_sums, expand_undersampled, Visit};
use raycanopy::{Ray, RayCloud, RayTally, StatsGrid, Vec3, VoxelGrid, VoxelSums};

fn test_grid() -> VoxelGrid {
    VoxelGrid::new(Vec3::new(-0.3, 0.1, 0.3), 0.12, [7, 9, 5], 0).unwrap()
}

fn random_ray(rng: &mut ChaCha8Rng, grid: &VoxelGrid) -> Ray {
    let b = grid.bounds();
    let pad = Vec3::repeat(0.5);
    let mut pick = || {
        Vec3::new(
            rng.random_range(b.min.x - pad.x..b.max.x + pad.x),
            rng.random_range(b.min.y - pad.y..b.max.y + pad.y),
            rng.random_range(b.min.z - pad.z..b.max.z + pad.z),
        )
    };
    let o = pick();
    let e = pick();
    Ray::new(o, e, 0.0, true)
}

fn chord_sum(visits: &[Visit], ray: &Ray) -> f64 {
    visits.iter().map(|v| v.t_out - v.t_in).sum::<f64>() * ray.length()
}

#[test]
fn chord_additivity_on_random_rays() {
    let grid = test_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let ray = random_ray(&mut rng, &grid);
        let visits = grid.traverse(&ray);
        worst = worst.max((chord_sum(&visits, &ray) - clipped_length(&grid, &ray)).abs());
    }
    assert!(worst < 1e-6, "worst chord discrepancy {worst}");
}

#[test]
fn traversal_matches_point_sampling() {
    let grid = test_grid();
    let w = grid.voxel_width;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let ray = random_ray(&mut rng, &grid);
        let visits = grid.traverse(&ray);
        // Visits are contiguous and each midpoint lies in its voxel.
        for pair in visits.windows(2) {
            assert_eq!(pair[0].t_out, pair[1].t_in);
            let step: i64 = (0..3)
                .map(|a| (pair[0].voxel[a] as i64 - pair[1].voxel[a] as i64).abs())
                .sum();
            assert!(step >= 1);
        }
        for v in &visits {
            let mid = ray.origin + ray.vector() * (0.5 * (v.t_in + v.t_out));
            let vb = grid.voxel_bounds(v.voxel);
            assert!((0..3).all(|a| mid[a] >= vb.min[a] - 1e-9 && mid[a] <= vb.max[a] + 1e-9));
        }
        // Every sample point away from a face belongs to a visited voxel.
        let len = ray.length();
        let steps = (len / (w / 100.0)).ceil() as usize;
        for s in 0..steps {
            let t = (s as f64 + 0.5) / steps as f64;
            let p = ray.origin + ray.vector() * t;
            let near_face = (0..3).any(|a| {
                let u = (p[a] - grid.origin[a]) / w;
                (u - u.round()).abs() < 1e-7
            });
            if near_face {
                continue;
            }
            if let Some(cell) = grid.voxel_of(&p) {
                assert!(
                    visits.iter().any(|v| v.voxel == cell && v.t_in <= t && t <= v.t_out),
                    "sample {p:?} in {cell:?} not covered"
                );
            }
        }
    }
}

#[test]
fn accumulated_depth_equals_clipped_ray_length() {
    let grid = test_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rays: Vec<Ray> = (0..2000)
        .map(|i| {
            let r = random_ray(&mut rng, &grid);
            if i % 3 == 0 {
                // Non-returns run the full sensor range.
                let end = r.origin + r.vector().normalize() * 3.0;
                Ray::new(r.origin, end, 0.0, false)
            } else {
                r
            }
        })
        .collect();
    let expected_x: f64 = rays.iter().map(|r| clipped_length(&grid, r)).sum();
    let expected_m = rays
        .iter()
        .filter(|r| r.contact && grid.voxel_of(&r.endpoint).is_some())
        .count() as u32;
    let cloud = RayCloud::new(rays, 3.0, "test").unwrap();
    let stats = accumulate(&cloud, &grid);
    let sum_x: f64 = stats.stats.iter().map(|s| s.sum_x).sum();
    let m: u32 = stats.stats.iter().map(|s| s.m).sum();
    assert!((sum_x - expected_x).abs() < 1e-6 * expected_x.max(1.0));
    assert_eq!(m, expected_m);
    for s in &stats.stats {
        s.check(grid.voxel_width).unwrap();
    }
    let sums = accumulate_sums(&cloud, &grid);
    for (a, b) in stats.stats.iter().zip(&sums.stats) {
        assert_eq!(a.sums(), *b);
    }
}

#[test]
fn hole_surrounded_by_single_rays_merges_all_neighbours() {
    let grid = VoxelGrid::new(Vec3::zeros(), 0.1, [3, 3, 3], 0).unwrap();
    let mut stats = StatsGrid::<VoxelSums>::empty(grid);
    for idx in 0..grid.len() {
        if grid.unlinear(idx) != [1, 1, 1] {
            stats.stats[idx].push(0.05, 0.1, idx % 2 == 0);
        }
    }
    let ex = expand_undersampled(&stats, 10);
    let centre = grid.linear([1, 1, 1]);
    assert_eq!(ex.stats.stats[centre].n, 26);
    assert_eq!(ex.radius[centre], 1);
    assert!((ex.stats.stats[centre].sum_x - 26.0 * 0.05).abs() < 1e-12);
}

fn sparse_grid(seed: u64, dims: [usize; 3]) -> StatsGrid<VoxelSums> {
    let grid = VoxelGrid::new(Vec3::zeros(), 0.1, dims, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = StatsGrid::<VoxelSums>::empty(grid);
    for s in &mut stats.stats {
        for _ in 0..rng.random_range(0..14u32).saturating_sub(6) {
            let y = rng.random_range(0.01..0.17);
            let hit = rng.random_bool(0.3);
            s.push(if hit { y * rng.random::<f64>() } else { y }, y, hit);
        }
    }
    stats
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expansion_never_reduces_counts(seed in any::<u64>(), nx in 1usize..6, ny in 1usize..6, nz in 1usize..6, n_min in 1u32..30) {
        let stats = sparse_grid(seed, [nx, ny, nz]);
        let ex = expand_undersampled(&stats, n_min);
        let total: u32 = stats.stats.iter().map(|s| s.n).sum();
        for (idx, (before, after)) in stats.stats.iter().zip(&ex.stats.stats).enumerate() {
            prop_assert!(after.n >= before.n);
            if before.n >= n_min {
                prop_assert_eq!(before, after);
                prop_assert_eq!(ex.radius[idx], 0);
            } else {
                prop_assert!(after.n >= n_min.min(total));
            }
        }
    }

    #[test]
    fn merged_sums_match_recomputed_cube(seed in any::<u64>(), n_min in 2u32..20) {
        let stats = sparse_grid(seed, [4, 5, 3]);
        let grid = stats.grid;
        let ex = expand_undersampled(&stats, n_min);
        for idx in 0..grid.len() {
            let r = ex.radius[idx] as usize;
            if r == 0 {
                continue;
            }
            let c = grid.unlinear(idx);
            let mut expect = VoxelSums::default();
            for other in 0..grid.len() {
                let v = grid.unlinear(other);
                if (0..3).all(|a| v[a].abs_diff(c[a]) <= r) {
                    expect.merge(&stats.stats[other]);
                }
            }
            let got = &ex.stats.stats[idx];
            prop_assert_eq!((got.n, got.m), (expect.n, expect.m));
            prop_assert!((got.sum_x - expect.sum_x).abs() < 1e-9);
            prop_assert!((got.sum_y - expect.sum_y).abs() < 1e-9);
        }
    }

    #[test]
    fn chord_sum_is_additive(ox in -1.0f64..2.0, oy in -1.0f64..2.0, oz in -1.0f64..2.0,
                             ex in -1.0f64..2.0, ey in -1.0f64..2.0, ez in -1.0f64..2.0) {
        let grid = VoxelGrid::new(Vec3::zeros(), 0.1, [8, 8, 8], 0).unwrap();
        let ray = Ray::new(Vec3::new(ox, oy, oz), Vec3::new(ex, ey, ez), 0.0, false);
        let visits = grid.traverse(&ray);
        prop_assert!((chord_sum(&visits, &ray) - clipped_length(&grid, &ray)).abs() < 1e-9);
    }
}
