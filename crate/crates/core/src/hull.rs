//! Incremental 3D convex hull with outside-set bookkeeping (quickhull order).
//!
//! Faces are stored counter-clockwise when seen from outside. Neighbour `i`
//! of a face shares the edge `(v[i], v[(i + 1) % 3])`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    neighbours: [usize; 3],
    normal: Vec3,
    offset: f64,
    alive: bool,
    outside: Vec<usize>,
}

impl Face {
    fn distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Triangulated convex hull. `triangles` index into the input point slice
/// and are oriented with outward normals.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    pub triangles: Vec<[usize; 3]>,
}

fn plane(points: &[Vec3], v: [usize; 3]) -> (Vec3, f64) {
    let n = (points[v[1]] - points[v[0]]).cross(&(points[v[2]] - points[v[0]]));
    let len = n.norm();
    let n = if len > 0.0 { n / len } else { n };
    (n, n.dot(&points[v[0]]))
}

impl ConvexHull {
    /// Computes the hull of `points`. Fails when all points are (nearly)
    /// collinear or coplanar.
    pub fn compute(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Degenerate(format!(
                "convex hull needs 4 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::Degenerate("non-finite point in hull input".into()));
        }
        let scale = points.iter().fold(0.0f64, |m, p| m.max(p.amax())).max(1.0);
        let eps = 1e-11 * scale;

        let simplex = initial_simplex(points, eps)?;
        let mut faces: Vec<Face> = Vec::new();
        let [a, b, c, d] = simplex;
        // Orient so the fourth vertex is behind the first face.
        let (n, off) = plane(points, [a, b, c]);
        let base = if n.dot(&points[d]) - off > 0.0 {
            [a, c, b]
        } else {
            [a, b, c]
        };
        let tri = [
            base,
            [base[0], base[2], d],
            [base[2], base[1], d],
            [base[1], base[0], d],
        ];
        for v in tri {
            let (normal, offset) = plane(points, v);
            faces.push(Face {
                v,
                neighbours: [usize::MAX; 3],
                normal,
                offset,
                alive: true,
                outside: Vec::new(),
            });
        }
        link_all(&mut faces, &[0, 1, 2, 3]);

        for (i, p) in points.iter().enumerate() {
            if simplex.contains(&i) {
                continue;
            }
            if let Some(f) = (0..4).find(|&f| faces[f].distance(p) > eps) {
                faces[f].outside.push(i);
            }
        }

        let mut stack: Vec<usize> = (0..4).filter(|&f| !faces[f].outside.is_empty()).collect();
        let mut visible = Vec::new();
        let mut horizon = Vec::new();
        while let Some(fi) = stack.pop() {
            if !faces[fi].alive || faces[fi].outside.is_empty() {
                continue;
            }
            let apex = *faces[fi]
                .outside
                .iter()
                .max_by(|&&x, &&y| {
                    faces[fi]
                        .distance(&points[x])
                        .total_cmp(&faces[fi].distance(&points[y]))
                        .then(y.cmp(&x))
                })
                .unwrap();
            let p = points[apex];

            // Flood the visible region and collect its boundary edges.
            visible.clear();
            horizon.clear();
            faces[fi].alive = false;
            visible.push(fi);
            let mut k = 0;
            while k < visible.len() {
                let f = visible[k];
                k += 1;
                for e in 0..3 {
                    let nb = faces[f].neighbours[e];
                    if !faces[nb].alive {
                        continue;
                    }
                    if faces[nb].distance(&p) > eps {
                        faces[nb].alive = false;
                        visible.push(nb);
                    } else {
                        horizon.push((faces[f].v[e], faces[f].v[(e + 1) % 3], nb));
                    }
                }
            }
            let first_new = faces.len();
            let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(horizon.len() * 2);
            for &(u, v, nb) in &horizon {
                let id = faces.len();
                let verts = [u, v, apex];
                let (normal, offset) = plane(points, verts);
                faces.push(Face {
                    v: verts,
                    neighbours: [nb, usize::MAX, usize::MAX],
                    normal,
                    offset,
                    alive: true,
                    outside: Vec::new(),
                });
                let slot = faces[nb]
                    .v
                    .iter()
                    .enumerate()
                    .position(|(i, &x)| x == v && faces[nb].v[(i + 1) % 3] == u)
                    .ok_or_else(|| Error::Degenerate("hull horizon lost adjacency".into()))?;
                faces[nb].neighbours[slot] = id;
                edge_owner.insert((v, apex), id);
                edge_owner.insert((apex, u), id);
            }
            for face in &mut faces[first_new..] {
                let [u, v, _] = face.v;
                let across_v = *edge_owner
                    .get(&(apex, v))
                    .ok_or_else(|| Error::Degenerate("hull horizon is not a closed loop".into()))?;
                let across_u = *edge_owner
                    .get(&(u, apex))
                    .ok_or_else(|| Error::Degenerate("hull horizon is not a closed loop".into()))?;
                face.neighbours[1] = across_v;
                face.neighbours[2] = across_u;
            }

            // Reassign orphaned outside points.
            let orphans: Vec<usize> = visible
                .iter()
                .flat_map(|&f| std::mem::take(&mut faces[f].outside))
                .filter(|&i| i != apex)
                .collect();
            for i in orphans {
                let q = &points[i];
                if let Some(f) = (first_new..faces.len()).find(|&f| faces[f].distance(q) > eps) {
                    faces[f].outside.push(i);
                }
            }
            stack.extend((first_new..faces.len()).filter(|&f| !faces[f].outside.is_empty()));
        }

        let triangles = faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
        Ok(Self { triangles })
    }
}

fn link_all(faces: &mut [Face], ids: &[usize]) {
    for &a in ids {
        for e in 0..3 {
            let (u, v) = (faces[a].v[e], faces[a].v[(e + 1) % 3]);
            for &b in ids {
                if b == a {
                    continue;
                }
                if (0..3).any(|k| faces[b].v[k] == v && faces[b].v[(k + 1) % 3] == u) {
                    faces[a].neighbours[e] = b;
                }
            }
        }
    }
}

fn initial_simplex(points: &[Vec3], eps: f64) -> Result<[usize; 4]> {
    // Most distant pair among axis extremes.
    let mut extremes = Vec::with_capacity(6);
    for a in 0..3 {
        let lo = (0..points.len())
            .min_by(|&i, &j| points[i][a].total_cmp(&points[j][a]))
            .unwrap();
        let hi = (0..points.len())
            .max_by(|&i, &j| points[i][a].total_cmp(&points[j][a]))
            .unwrap();
        extremes.push(lo);
        extremes.push(hi);
    }
    let mut best = (0.0, 0, 0);
    for &i in &extremes {
        for &j in &extremes {
            let d = (points[i] - points[j]).norm_squared();
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let (span2, a, b) = best;
    if span2.sqrt() <= eps {
        return Err(Error::Degenerate("all hull input points coincide".into()));
    }
    let ab = (points[b] - points[a]).normalize();
    let c = (0..points.len())
        .max_by(|&i, &j| {
            let di = (points[i] - points[a]).cross(&ab).norm_squared();
            let dj = (points[j] - points[a]).cross(&ab).norm_squared();
            di.total_cmp(&dj)
        })
        .unwrap();
    if (points[c] - points[a]).cross(&ab).norm() <= eps {
        return Err(Error::Degenerate("hull input points are collinear".into()));
    }
    let (n, off) = plane(points, [a, b, c]);
    let d = (0..points.len())
        .max_by(|&i, &j| {
            (n.dot(&points[i]) - off)
                .abs()
                .total_cmp(&(n.dot(&points[j]) - off).abs())
        })
        .unwrap();
    if (n.dot(&points[d]) - off).abs() <= eps {
        return Err(Error::Degenerate("hull input points are coplanar".into()));
    }
    Ok([a, b, c, d])
}
