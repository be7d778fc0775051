//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raycanopy::{DensityField, Ray, Vec3, VoxelGrid};

/// Field with random dims, sparse unobserved voxels and densities up to 12.
pub fn random_field(seed: u64) -> DensityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [
        rng.random_range(1..12),
        rng.random_range(1..40),
        rng.random_range(1..20),
    ];
    let w = rng.random_range(0.05..0.2);
    let origin = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-5.0..5.0), 0.3);
    let grid = VoxelGrid::new(origin, w, dims, 0).unwrap();
    let mut field = DensityField::zeros(grid, 2.0);
    for idx in 0..grid.len() {
        if rng.random_bool(0.85) {
            field.observed[idx] = true;
            field.density[idx] = if rng.random_bool(0.3) {
                0.0
            } else {
                rng.random_range(0.0..12.0)
            };
        }
    }
    field
}

/// Σ ρ w³ by an explicit triple loop over voxel coordinates.
pub fn triple_sum(field: &DensityField) -> f64 {
    let g = &field.grid;
    let mut total = 0.0;
    for i in 0..g.dims[0] {
        for j in 0..g.dims[1] {
            for k in 0..g.dims[2] {
                let idx = g.linear([i, j, k]);
                if field.observed[idx] {
                    total += field.density[idx] * g.voxel_width.powi(3);
                }
            }
        }
    }
    total
}

/// Smooth random terrain: a few low-amplitude sinusoids and a tilt.
pub struct Terrain {
    waves: Vec<(f64, f64, f64, f64)>,
    tilt: (f64, f64),
}

impl Terrain {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.05..0.4),
                    rng.random_range(0.05..0.4),
                    rng.random_range(0.0..6.3),
                )
            })
            .collect();
        Self {
            waves,
            tilt: (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
        }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.tilt.0 * x
            + self.tilt.1 * y
            + self
                .waves
                .iter()
                .map(|(a, fx, fy, p)| a * (fx * x + fy * y + p).sin())
                .sum::<f64>()
    }
}

/// Ground returns plus vegetation returns above them.
pub fn terrain_points(terrain: &Terrain, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let (x, y) = (rng.random_range(0.0..20.0), rng.random_range(0.0..12.0));
            let lift = if i % 3 == 0 { rng.random_range(0.2..2.5) } else { 0.0 };
            Vec3::new(x, y, terrain.height(x, y) + lift)
        })
        .collect()
}

/// Length of the segment inside the grid, by slab clipping written out here.
pub fn clipped_length(grid: &VoxelGrid, ray: &Ray) -> f64 {
    let b = grid.bounds();
    let d = ray.endpoint - ray.origin;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for a in 0..3 {
        if d[a] == 0.0 {
            if ray.origin[a] < b.min[a] || ray.origin[a] > b.max[a] {
                return 0.0;
            }
            continue;
        }
        let t0 = (b.min[a] - ray.origin[a]) / d[a];
        let t1 = (b.max[a] - ray.origin[a]) / d[a];
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    (hi - lo).max(0.0) * d.norm()
}
