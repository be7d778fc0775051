//! Ray distributions through a single voxel and the per-ray intersection test.

use rand::Rng;

use super::scene::LeafScene;
use crate::geom::{ray_triangle, Aabb, Vec3};
use crate::voxelgrid::VoxelStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayDistribution {
    /// Chords between two uniform points on different faces of the voxel.
    UniformRandom,
    /// Rays along +x, entering uniformly over the `x = 0` face.
    Trawling,
    /// Horizontal rays at a uniform angle in `[0, max_angle_deg]` from +x
    /// towards +y, uniform over the cross-section they sweep.
    Spinning { max_angle_deg: f64 },
}

impl RayDistribution {
    pub const SPINNING_DEFAULT: Self = RayDistribution::Spinning { max_angle_deg: 70.0 };

    pub fn name(&self) -> &'static str {
        match self {
            RayDistribution::UniformRandom => "uniform-random",
            RayDistribution::Trawling => "trawling",
            RayDistribution::Spinning { .. } => "spinning",
        }
    }

    /// A ray `(origin, direction)` that crosses the voxel; `origin` lies on the
    /// voxel boundary.
    pub fn sample<R: Rng + ?Sized>(&self, width: f64, rng: &mut R) -> (Vec3, Vec3) {
        match *self {
            RayDistribution::UniformRandom => loop {
                let (fa, a) = boundary_point(width, rng);
                let (fb, b) = boundary_point(width, rng);
                if fa != fb {
                    return (a, b - a);
                }
            },
            RayDistribution::Trawling => parallel_ray(Vec3::x(), width, rng),
            RayDistribution::Spinning { max_angle_deg } => {
                let theta = rng.random::<f64>() * max_angle_deg.to_radians();
                parallel_ray(Vec3::new(theta.cos(), theta.sin(), 0.0), width, rng)
            }
        }
    }
}

/// Uniform point on the cube surface and the face it lies on.
fn boundary_point<R: Rng + ?Sized>(width: f64, rng: &mut R) -> (usize, Vec3) {
    let face = rng.random_range(0..6);
    let axis = face / 2;
    let mut p = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * width;
    p[axis] = if face % 2 == 0 { 0.0 } else { width };
    (face, p)
}

/// Parallel ray with direction `dir` (non-negative components), uniform
/// over the voxel's projected cross-section: the entry face is chosen in
/// proportion to its projected area.
fn parallel_ray<R: Rng + ?Sized>(dir: Vec3, width: f64, rng: &mut R) -> (Vec3, Vec3) {
    let weights = [dir.x.abs(), dir.y.abs(), dir.z.abs()];
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut axis = 0;
    for (a, w) in weights.iter().enumerate() {
        if pick < *w {
            axis = a;
            break;
        }
        pick -= w;
        axis = a;
    }
    let mut p = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * width;
    p[axis] = if dir[axis] >= 0.0 { 0.0 } else { width };
    (p, dir)
}

/// Penetration depth and path length of one ray through the voxel, and
/// whether it was intercepted. Only hits inside the voxel count.
pub fn trace(scene: &LeafScene, bounds: &Aabb, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64, bool)> {
    let (t0, t1) = bounds.clip_segment(origin, dir, f64::NEG_INFINITY, f64::INFINITY)?;
    if !(t1 > t0) {
        return None;
    }
    let speed = dir.norm();
    let nearest = scene
        .triangles
        .iter()
        .filter_map(|t| ray_triangle(origin, dir, t, t0, t1))
        .fold(f64::INFINITY, f64::min);
    let y = (t1 - t0) * speed;
    Some(if nearest.is_finite() {
        ((nearest - t0) * speed, y, true)
    } else {
        (y, y, false)
    })
}

/// Casts `n` rays from `dist` through the scene's voxel.
pub fn cast_rays<R: Rng + ?Sized>(scene: &LeafScene, dist: &RayDistribution, n: usize, rng: &mut R) -> VoxelStats {
    let bounds = scene.bounds();
    let mut stats = VoxelStats::default();
    while (stats.n as usize) < n {
        let (origin, dir) = dist.sample(scene.voxel_width, rng);
        if let Some((x, y, hit)) = trace(scene, &bounds, &origin, &dir) {
            stats.push(x.min(y), y, hit);
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafsim::scene::{gen_leaf_scene, NormalDistributionSpec};
    use crate::leafsim::trial_rng;

    fn empty_scene(w: f64) -> LeafScene {
        LeafScene {
            voxel_width: w,
            side_length: 0.05,
            triangles: Vec::new(),
            clipped_areas: Vec::new(),
            true_density: 0.0,
        }
    }

    #[test]
    fn empty_scene_has_no_hits() {
        let mut rng = trial_rng(1, 0, 0);
        for dist in [
            RayDistribution::UniformRandom,
            RayDistribution::Trawling,
            RayDistribution::SPINNING_DEFAULT,
        ] {
            let s = cast_rays(&empty_scene(0.1), &dist, 50, &mut rng);
            assert_eq!((s.n, s.m), (50, 0));
            assert_eq!(s.depths, s.path_lengths);
            s.check(0.1).unwrap();
        }
    }

    #[test]
    fn mid_plane_sheet_stops_every_trawling_ray() {
        let w = 0.1;
        let mut scene = empty_scene(w);
        scene.triangles = vec![[
            Vec3::new(w / 2.0, -1.0, -1.0),
            Vec3::new(w / 2.0, 3.0, -1.0),
            Vec3::new(w / 2.0, -1.0, 3.0),
        ]];
        let s = cast_rays(&scene, &RayDistribution::Trawling, 100, &mut trial_rng(2, 0, 0));
        assert_eq!((s.n, s.m), (100, 100));
        assert!(s.depths.iter().all(|x| (x - w / 2.0).abs() < 1e-12));
    }

    #[test]
    fn spinning_rays_stay_horizontal_within_fan() {
        let mut rng = trial_rng(3, 0, 0);
        for _ in 0..1000 {
            let (o, d) = RayDistribution::SPINNING_DEFAULT.sample(0.1, &mut rng);
            assert_eq!(d.z, 0.0);
            let angle = d.y.atan2(d.x).to_degrees();
            assert!((0.0..=70.0).contains(&angle));
            assert!(Aabb::cube(0.1).contains(&o));
        }
    }

    #[test]
    fn stats_invariants_hold_on_random_scenes() {
        let mut rng = trial_rng(4, 0, 0);
        for _ in 0..20 {
            let scene = gen_leaf_scene(0.1, 0.05, 0.02, &NormalDistributionSpec::SPHERICAL, &mut rng).unwrap();
            let s = cast_rays(&scene, &RayDistribution::UniformRandom, 30, &mut rng);
            s.check(0.1).unwrap();
        }
    }
}
