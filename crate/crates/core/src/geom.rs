//! Small geometric helpers shared by the traversal, hull and simulation code.

pub type Vec3 = nalgebra::Vector3<f64>;

/// Axis-aligned box, `min` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn cube(width: f64) -> Self {
        Self::new(Vec3::zeros(), Vec3::repeat(width))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Parametric interval of `origin + t * dir` inside the box, intersected
    /// with `[t_lo, t_hi]`. Returns `None` when the interval is empty.
    pub fn clip_segment(&self, origin: &Vec3, dir: &Vec3, t_lo: f64, t_hi: f64) -> Option<(f64, f64)> {
        let mut lo = t_lo;
        let mut hi = t_hi;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let mut t0 = (self.min[a] - origin[a]) * inv;
            let mut t1 = (self.max[a] - origin[a]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }
}

/// Linear-interpolated percentile of an unsorted sample, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Möller–Trumbore ray/triangle test. Returns the ray parameter of the hit
/// when it lies in `(t_min, t_max]`.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3], t_min: f64, t_max: f64) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > t_min && t <= t_max).then_some(t)
}

/// Clips a convex planar polygon to an axis-aligned box (Sutherland–Hodgman).
pub fn clip_polygon_to_box(poly: &[Vec3], bounds: &Aabb) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = poly.to_vec();
    for axis in 0..3 {
        for (limit, keep_above) in [(bounds.min[axis], true), (bounds.max[axis], false)] {
            if out.is_empty() {
                return out;
            }
            let inside = |p: &Vec3| if keep_above { p[axis] >= limit } else { p[axis] <= limit };
            let input = std::mem::take(&mut out);
            for i in 0..input.len() {
                let cur = input[i];
                let prev = input[(i + input.len() - 1) % input.len()];
                let (ci, pi) = (inside(&cur), inside(&prev));
                if ci != pi {
                    let t = (limit - prev[axis]) / (cur[axis] - prev[axis]);
                    out.push(prev + (cur - prev) * t);
                }
                if ci {
                    out.push(cur);
                }
            }
        }
    }
    out
}

/// Area of a planar polygon given in order.
pub fn polygon_area(poly: &[Vec3]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = Vec3::zeros();
    for i in 1..poly.len() - 1 {
        acc += (poly[i] - poly[0]).cross(&(poly[i + 1] - poly[0]));
    }
    0.5 * acc.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_linear_interpolation() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_eq!(percentile(&v, 100.0), Some(5.0));
        assert!((percentile(&v, 97.0).unwrap() - 4.88).abs() < 1e-12);
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn clip_keeps_inside_square() {
        let b = Aabb::cube(1.0);
        let tri = [
            Vec3::new(0.2, 0.2, 0.5),
            Vec3::new(0.8, 0.2, 0.5),
            Vec3::new(0.2, 0.8, 0.5),
        ];
        let clipped = clip_polygon_to_box(&tri, &b);
        assert!((polygon_area(&clipped) - 0.18).abs() < 1e-12);
        let half = [
            Vec3::new(-1.0, 0.0, 0.5),
            Vec3::new(1.0, 0.0, 0.5),
            Vec3::new(1.0, 1.0, 0.5),
            Vec3::new(-1.0, 1.0, 0.5),
        ];
        assert!((polygon_area(&clip_polygon_to_box(&half, &b)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moller_trumbore_hits_and_misses() {
        let tri = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
        ];
        let o = Vec3::new(0.2, 0.2, 0.0);
        let d = Vec3::new(0.0, 0.0, 1.0);
        assert!((ray_triangle(&o, &d, &tri, 0.0, 10.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(ray_triangle(&o, &d, &tri, 0.0, 0.5).is_none());
        assert!(ray_triangle(&Vec3::new(0.9, 0.9, 0.0), &d, &tri, 0.0, 10.0).is_none());
    }

    #[test]
    fn segment_clipping() {
        let b = Aabb::cube(1.0);
        let (lo, hi) = b
            .clip_segment(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::new(4.0, 0.0, 0.0), 0.0, 1.0)
            .unwrap();
        assert!((lo - 0.25).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
        assert!(b
            .clip_segment(&Vec3::new(-1.0, 2.0, 0.5), &Vec3::new(4.0, 0.0, 0.0), 0.0, 1.0)
            .is_none());
    }
}
