//! Lower-bound terrain mesh from a paraboloid-lifted convex hull.
//!
//! Contact endpoints are lifted by `k (x² + y²)`, the 3D hull of the lifted
//! points is computed, and only its downward-facing triangles are kept. Removing
//! the lift from those vertices leaves a height-field mesh lying on or below
//! every endpoint. The curvature `k` bounds how sharp a terrain bump the mesh
//! can follow.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{percentile, Vec3};
use crate::hull::ConvexHull;
use crate::raycloud::{Ray, RayCloud};

pub const DEFAULT_CURVATURE: f64 = 0.1;
/// Outward normals with `z` above this are not part of the lower surface.
const DOWNWARD_NZ: f64 = -1e-9;
const MIN_BIN: f64 = 0.25;
const MAX_BIN: f64 = 5.0;
/// Barycentric slack when testing whether a query falls in a triangle.
const BARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GroundMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    bin_size: f64,
    bin_origin: [f64; 2],
    bin_dims: [usize; 2],
    bins: Vec<Vec<u32>>,
}

impl GroundMesh {
    /// Builds a mesh from a height-field triangulation and indexes it.
    pub fn from_triangles(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, bin_size: Option<f64>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Degenerate("ground mesh has no triangles".into()));
        }
        let bin_size = bin_size.unwrap_or_else(|| default_bin_size(&vertices, &triangles));
        if !(bin_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bin size must be positive, got {bin_size}"
            )));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for t in &triangles {
            for &v in t {
                for a in 0..2 {
                    lo[a] = lo[a].min(vertices[v][a]);
                    hi[a] = hi[a].max(vertices[v][a]);
                }
            }
        }
        let bin_dims = [0, 1].map(|a| (((hi[a] - lo[a]) / bin_size).floor() as usize + 1).max(1));
        let mut bins = vec![Vec::new(); bin_dims[0] * bin_dims[1]];
        for (ti, t) in triangles.iter().enumerate() {
            let (mut tlo, mut thi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &v in t {
                for a in 0..2 {
                    tlo[a] = tlo[a].min(vertices[v][a]);
                    thi[a] = thi[a].max(vertices[v][a]);
                }
            }
            let c0 = [0, 1].map(|a| cell_coord(tlo[a], lo[a], bin_size, bin_dims[a]));
            let c1 = [0, 1].map(|a| cell_coord(thi[a], lo[a], bin_size, bin_dims[a]));
            for i in c0[0]..=c1[0] {
                for j in c0[1]..=c1[1] {
                    bins[i * bin_dims[1] + j].push(ti as u32);
                }
            }
        }
        Ok(Self {
            vertices,
            triangles,
            bin_size,
            bin_origin: lo,
            bin_dims,
            bins,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn bin_size(&self) -> f64 {
        self.bin_size
    }

    /// Height of the mesh at `(x, y)`, or `None` outside its footprint.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        let rel = [x - self.bin_origin[0], y - self.bin_origin[1]];
        let slack = self.bin_size * 1e-9;
        if (0..2).any(|a| rel[a] < -slack || rel[a] > self.bin_dims[a] as f64 * self.bin_size + slack) {
            return None;
        }
        let c = [0, 1].map(|a| {
            cell_coord(
                rel[a] + self.bin_origin[a],
                self.bin_origin[a],
                self.bin_size,
                self.bin_dims[a],
            )
        });
        self.bins[c[0] * self.bin_dims[1] + c[1]]
            .iter()
            .find_map(|&t| triangle_height(&self.vertices, &self.triangles[t as usize], x, y))
    }

    /// Exhaustive search over every triangle; the reference for `height_at`.
    pub fn height_at_exhaustive(&self, x: f64, y: f64) -> Option<f64> {
        self.triangles
            .iter()
            .find_map(|t| triangle_height(&self.vertices, t, x, y))
    }

    /// Writes the mesh as ASCII OBJ.
    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.vertices.len() * 40 + self.triangles.len() * 24);
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

fn cell_coord(v: f64, origin: f64, size: f64, dim: usize) -> usize {
    (((v - origin) / size).floor().max(0.0) as usize).min(dim - 1)
}

fn triangle_height(vertices: &[Vec3], t: &[usize; 3], x: f64, y: f64) -> Option<f64> {
    let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if det.abs() < 1e-18 {
        return None;
    }
    let l1 = ((x - a.x) * (c.y - a.y) - (c.x - a.x) * (y - a.y)) / det;
    let l2 = ((b.x - a.x) * (y - a.y) - (x - a.x) * (b.y - a.y)) / det;
    let l0 = 1.0 - l1 - l2;
    (l0 >= -BARY_EPS && l1 >= -BARY_EPS && l2 >= -BARY_EPS).then(|| l0 * a.z + l1 * b.z + l2 * c.z)
}

/// Twice the median horizontal edge length, clamped. The longest edge would
/// be dominated by slivers along the hull boundary and by gaps under the
/// canopy, leaving thousands of triangles per bin.
fn default_bin_size(vertices: &[Vec3], triangles: &[[usize; 3]]) -> f64 {
    let edges: Vec<f64> = triangles
        .iter()
        .flat_map(|t| (0..3).map(move |e| (t[e], t[(e + 1) % 3])))
        .map(|(u, v)| (vertices[u].xy() - vertices[v].xy()).norm())
        .collect();
    let median = percentile(&edges, 50.0).unwrap_or(0.0);
    (2.0 * median).clamp(MIN_BIN, MAX_BIN)
}

/// Extracts the lower-bound ground mesh from the contact endpoints of `cloud`.
pub fn extract_ground(cloud: &RayCloud, curvature: f64) -> Result<GroundMesh> {
    let points: Vec<Vec3> = cloud.contact_endpoints().collect();
    extract_ground_from_points(&points, curvature)
}

pub fn extract_ground_from_points(points: &[Vec3], curvature: f64) -> Result<GroundMesh> {
    if !(curvature.is_finite() && curvature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "curvature must be positive, got {curvature}"
        )));
    }
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "ground extraction needs at least 4 contact endpoints, got {}",
            points.len()
        )));
    }
    // The lifted hull does not depend on where the paraboloid is centred, so
    // centre it on the data to keep the lifted heights small.
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let lifted: Vec<Vec3> = points
        .iter()
        .map(|p| {
            let (dx, dy) = (p.x - cx, p.y - cy);
            Vec3::new(dx, dy, p.z + curvature * (dx * dx + dy * dy))
        })
        .collect();
    let hull = ConvexHull::compute(&lifted)?;

    let mut remap = vec![usize::MAX; points.len()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for t in &hull.triangles {
        let normal = (lifted[t[1]] - lifted[t[0]]).cross(&(lifted[t[2]] - lifted[t[0]]));
        let len = normal.norm();
        if len == 0.0 || normal.z / len >= DOWNWARD_NZ {
            continue;
        }
        let mapped = t.map(|v| {
            if remap[v] == usize::MAX {
                remap[v] = vertices.len();
                vertices.push(points[v]);
            }
            remap[v]
        });
        triangles.push(mapped);
    }
    if triangles.is_empty() {
        return Err(Error::Degenerate("convex hull has no downward-facing triangles".into()));
    }
    GroundMesh::from_triangles(vertices, triangles, None)
}

/// Result of shifting a cloud onto the ground plane.
#[derive(Debug, Clone)]
pub struct GroundSubtraction {
    pub cloud: RayCloud,
    /// Rays whose height could not be looked up and were removed.
    pub dropped: usize,
}

/// Shifts each ray vertically by the ground height under its endpoint.
///
/// Non-contact rays whose endpoint lies beyond the mesh use the height under
/// their origin instead; any other ray outside the footprint is dropped.
pub fn subtract_ground(cloud: &RayCloud, mesh: &GroundMesh) -> GroundSubtraction {
    let mut rays: Vec<Ray> = Vec::with_capacity(cloud.len());
    let mut dropped = 0;
    for r in cloud.rays() {
        let h = mesh.height_at(r.endpoint.x, r.endpoint.y).or_else(|| {
            if r.contact {
                None
            } else {
                mesh.height_at(r.origin.x, r.origin.y)
            }
        });
        match h {
            Some(h) => rays.push(r.shifted_z(-h)),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("ground subtraction dropped {dropped} ray(s) outside the mesh footprint");
    }
    GroundSubtraction {
        cloud: RayCloud::from_parts_unchecked(rays, cloud.max_range(), cloud.frame_id().to_string()),
        dropped,
    }
}
