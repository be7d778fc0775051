//! Random equilateral-triangle leaves inside one cubic voxel.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::geom::{clip_polygon_to_box, polygon_area, Aabb, Vec3};

/// Leaf normals drawn from an axis-scaled sphere: an isotropic Gaussian
/// vector scaled per axis, then normalised. `(1, 1, 1)` is the spherical
/// leaf-angle distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalDistributionSpec {
    pub eccentricity: [f64; 3],
}

impl NormalDistributionSpec {
    pub const SPHERICAL: Self = Self {
        eccentricity: [1.0, 1.0, 1.0],
    };

    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eccentricity must be positive, got ({a}, {b}, {c})"
            )));
        }
        Ok(Self {
            eccentricity: [a, b, c],
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.sample::<f64, _>(StandardNormal) * self.eccentricity[0],
                rng.sample::<f64, _>(StandardNormal) * self.eccentricity[1],
                rng.sample::<f64, _>(StandardNormal) * self.eccentricity[2],
            );
            let len = v.norm();
            if len > 1e-12 {
                return v / len;
            }
        }
    }

    pub fn label(&self) -> String {
        let [a, b, c] = self.eccentricity;
        format!("{a},{b},{c}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafScene {
    pub voxel_width: f64,
    pub side_length: f64,
    pub triangles: Vec<[Vec3; 3]>,
    /// Area of each triangle inside the voxel.
    pub clipped_areas: Vec<f64>,
    /// One-sided leaf area per m³ inside the voxel.
    pub true_density: f64,
}

impl LeafScene {
    pub fn bounds(&self) -> Aabb {
        Aabb::cube(self.voxel_width)
    }

    /// Clipped leaf area recomputed from the triangle geometry.
    pub fn clipped_area(&self) -> f64 {
        let b = self.bounds();
        self.triangles
            .iter()
            .map(|t| polygon_area(&clip_polygon_to_box(t, &b)))
            .sum()
    }

    pub fn total_area(&self) -> f64 {
        self.triangles.len() as f64 * equilateral_area(self.side_length)
    }
}

pub fn equilateral_area(side: f64) -> f64 {
    3f64.sqrt() / 4.0 * side * side
}

/// Expected number of leaves in the voxel for a target leaf area, using
/// `√(3/4) l²` per leaf.
pub fn expected_leaf_count(side_length: f64, target_area: f64) -> f64 {
    target_area / ((0.75f64).sqrt() * side_length * side_length)
}

/// Equilateral triangle with circumcentre `centre`, unit normal `normal`
/// and in-plane rotation `angle`.
pub fn equilateral(centre: Vec3, normal: Vec3, side: f64, angle: f64) -> [Vec3; 3] {
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = normal.cross(&helper).normalize();
    let v = normal.cross(&u);
    let r = side / 3f64.sqrt();
    [0.0, 1.0, 2.0].map(|k: f64| {
        let a = angle + k * std::f64::consts::TAU / 3.0;
        centre + (u * a.cos() + v * a.sin()) * r
    })
}

/// Draws a Poisson number of leaves with centres uniform in the voxel.
pub fn gen_leaf_scene<R: Rng + ?Sized>(
    voxel_width: f64,
    side_length: f64,
    target_area: f64,
    normals: &NormalDistributionSpec,
    rng: &mut R,
) -> Result<LeafScene> {
    if !(voxel_width > 0.0 && side_length > 0.0 && target_area >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "leaf scene needs positive sizes, got w={voxel_width} l={side_length} A={target_area}"
        )));
    }
    let mean = expected_leaf_count(side_length, target_area);
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    let bounds = Aabb::cube(voxel_width);
    let mut triangles = Vec::with_capacity(count);
    let mut clipped_areas = Vec::with_capacity(count);
    for _ in 0..count {
        let centre = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * voxel_width;
        let normal = normals.sample(rng);
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let tri = equilateral(centre, normal, side_length, angle);
        clipped_areas.push(polygon_area(&clip_polygon_to_box(&tri, &bounds)));
        triangles.push(tri);
    }
    let true_density = clipped_areas.iter().sum::<f64>() / voxel_width.powi(3);
    Ok(LeafScene {
        voxel_width,
        side_length,
        triangles,
        clipped_areas,
        true_density,
    })
}
