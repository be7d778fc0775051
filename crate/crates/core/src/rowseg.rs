//! Row direction estimation and per-row splitting.
//!
//! The row direction is the chord of the longest, straightest stretch of the
//! sensor trajectory, scored as `v = l² / w` for the chord-aligned bounding
//! rectangle of a trajectory segment. Rows are then separated at the drive
//! lines, which show up as principal peaks in a histogram of ray origins
//! across the row direction.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::raycloud::{Ray, RayCloud};

pub type Vec2 = Vector2<f64>;

pub const DEFAULT_BIN_WIDTH: f64 = 0.2;
/// Floor on the rectangle width used in the straightness score.
pub const MIN_WIDTH: f64 = 1e-4;
/// Maximum gap between consecutive trajectory samples.
pub const MAX_STEP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    positions: Vec<Vec3>,
    times: Vec<f64>,
}

impl Trajectory {
    pub fn new(positions: Vec<Vec3>, times: Vec<f64>) -> Result<Self> {
        if positions.len() != times.len() {
            return Err(Error::InvalidArgument(
                "trajectory positions and times differ in length".into(),
            ));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "trajectory times not increasing at {}",
                i + 1
            )));
        }
        if let Some(i) = positions.windows(2).position(|w| (w[1] - w[0]).norm() > MAX_STEP) {
            return Err(Error::InvalidArgument(format!(
                "trajectory jumps more than {MAX_STEP} m at {}",
                i + 1
            )));
        }
        Ok(Self { positions, times })
    }

    /// Sensor path recovered from ray origins: origins in time order, keeping
    /// one sample per `spacing` metres travelled.
    pub fn from_cloud(cloud: &RayCloud, spacing: f64) -> Result<Self> {
        let mut positions: Vec<Vec3> = Vec::new();
        let mut times: Vec<f64> = Vec::new();
        for r in cloud.rays() {
            match positions.last() {
                Some(last) if (r.origin - last).norm() < spacing || r.time <= *times.last().unwrap() => {}
                _ => {
                    positions.push(r.origin);
                    times.push(r.time);
                }
            }
        }
        Self::new(positions, times)
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn path_length(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Straightness score `l² / w` of the trajectory segment `i..=j`, together
/// with the chord direction.
pub fn segment_score(points: &[Vec2], i: usize, j: usize) -> Option<(f64, Vec2)> {
    let chord = points[j] - points[i];
    let len = chord.norm();
    if len == 0.0 {
        return None;
    }
    let along = chord / len;
    let across = Vec2::new(-along.y, along.x);
    let (mut lo_a, mut hi_a, mut lo_c, mut hi_c) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &points[i..=j] {
        let d = p - points[i];
        let a = d.dot(&along);
        let c = d.dot(&across);
        lo_a = lo_a.min(a);
        hi_a = hi_a.max(a);
        lo_c = lo_c.min(c);
        hi_c = hi_c.max(c);
    }
    let l = hi_a - lo_a;
    let w = (hi_c - lo_c).max(MIN_WIDTH);
    Some((l * l / w, along))
}

fn horizontal(traj: &Trajectory) -> Vec<Vec2> {
    traj.positions.iter().map(|p| Vec2::new(p.x, p.y)).collect()
}

fn check_extent(points: &[Vec2]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(
            "row direction needs at least 2 trajectory samples".into(),
        ));
    }
    let first = points[0];
    let span = points.iter().map(|p| (p - first).norm()).fold(0.0, f64::max);
    if span < 1.0 {
        return Err(Error::Degenerate(format!("trajectory spans only {span:.3} m")));
    }
    Ok(())
}

fn greedy_search(pts: &[Vec2]) -> Option<(f64, Vec2)> {
    let score = |i: usize, j: usize| segment_score(pts, i, j).map_or(f64::NEG_INFINITY, |s| s.0);
    let (mut i, mut j) = (0usize, 1usize);
    let mut best = segment_score(pts, i, j);
    while j + 1 < pts.len() {
        let head = score(i, j + 1);
        let tail = if i + 1 < j { score(i + 1, j) } else { f64::NEG_INFINITY };
        // Ties advance the head.
        if head >= tail {
            j += 1;
        } else {
            i += 1;
        }
        if let Some((v, d)) = segment_score(pts, i, j) {
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, d));
            }
        }
    }
    best
}

/// Greedy two-index search for the straightest long segment; returns the
/// segment's head-to-tail direction in the horizontal plane.
pub fn row_direction(traj: &Trajectory) -> Result<Vec2> {
    greedy_best(traj).map(|(_, d)| d)
}

/// Score and direction of the segment chosen by the greedy search.
pub fn greedy_best(traj: &Trajectory) -> Result<(f64, Vec2)> {
    let pts = horizontal(traj);
    check_extent(&pts)?;
    greedy_search(&pts).ok_or_else(|| Error::Degenerate("trajectory has zero extent".into()))
}

/// Exhaustive maximisation of the straightness score over all segments.
/// Quadratic in the number of segments; meant for validation.
pub fn row_direction_exhaustive(traj: &Trajectory) -> Result<(f64, Vec2)> {
    let pts = horizontal(traj);
    check_extent(&pts)?;
    let mut best: Option<(f64, Vec2)> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if let Some((v, d)) = segment_score(&pts, i, j) {
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, d));
                }
            }
        }
    }
    best.ok_or_else(|| Error::Degenerate("trajectory has zero extent".into()))
}

/// Rigid map between world coordinates and a row's local frame: `x` across
/// the row (to the right of the direction), `y` along it, `z` unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowFrame {
    pub direction: Vec2,
    /// World lateral coordinate mapped to `x = 0`.
    pub lateral_centre: f64,
    /// World along-row coordinate mapped to `y = 0`.
    pub along_offset: f64,
}

/// Lateral axis for a row direction; `(lateral, direction, z)` is right-handed.
pub fn lateral_axis(direction: &Vec2) -> Vec2 {
    Vec2::new(direction.y, -direction.x)
}

impl RowFrame {
    pub fn to_row(&self, p: &Vec3) -> Vec3 {
        let h = Vec2::new(p.x, p.y);
        Vec3::new(
            h.dot(&lateral_axis(&self.direction)) - self.lateral_centre,
            h.dot(&self.direction) - self.along_offset,
            p.z,
        )
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        let h =
            lateral_axis(&self.direction) * (p.x + self.lateral_centre) + self.direction * (p.y + self.along_offset);
        Vec3::new(h.x, h.y, p.z)
    }
}

#[derive(Debug, Clone)]
pub struct RowSegment {
    pub direction: Vec2,
    /// Half-open `[low, high)` interval along the lateral axis, world frame.
    pub lateral_interval: [f64; 2],
    pub index: usize,
    /// Rays belonging to the row, world frame.
    pub cloud: RayCloud,
}

/// Outcome of [`split_rows`].
#[derive(Debug, Clone)]
pub struct RowSplit {
    pub rows: Vec<RowSegment>,
    /// Lateral positions of the principal histogram peaks.
    pub peaks: Vec<f64>,
    /// Set when fewer than two peaks were found and the cloud was kept whole.
    pub single_row_fallback: bool,
}

/// Principal peaks of a histogram: local maxima whose above-half-height
/// neighbourhood contains no higher bin. Returns the count-weighted centre
/// (in bin units) of each peak's neighbourhood.
pub fn principal_peaks(counts: &[u64]) -> Vec<f64> {
    let mut peaks = Vec::new();
    let n = counts.len();
    let mut b = 0;
    while b < n {
        let c = counts[b];
        if c == 0 {
            b += 1;
            continue;
        }
        // Treat a plateau as one candidate.
        let mut e = b;
        while e + 1 < n && counts[e + 1] == c {
            e += 1;
        }
        let left_ok = b == 0 || counts[b - 1] < c;
        let right_ok = e + 1 == n || counts[e + 1] < c;
        if left_ok && right_ok {
            let half = c as f64 / 2.0;
            let mut lo = b;
            while lo > 0 && counts[lo - 1] as f64 > half {
                lo -= 1;
            }
            let mut hi = e;
            while hi + 1 < n && counts[hi + 1] as f64 > half {
                hi += 1;
            }
            if counts[lo..=hi].iter().all(|&x| x <= c) {
                let (mut wsum, mut sum) = (0.0, 0.0);
                for (k, &x) in counts.iter().enumerate().take(hi + 1).skip(lo) {
                    wsum += x as f64 * (k as f64 + 0.5);
                    sum += x as f64;
                }
                peaks.push(wsum / sum);
            }
        }
        b = e + 1;
    }
    peaks
}

/// Splits `cloud` into rows separated by the interior drive-line peaks.
///
/// Bands between consecutive interior peaks are rows; the regions beyond the
/// outermost interior peaks are merged into the outermost rows. Each endpoint
/// belongs to exactly one band; a ray is also copied into every other band
/// its segment crosses laterally.
pub fn split_rows(cloud: &RayCloud, direction: Vec2, bin_width: f64) -> Result<RowSplit> {
    if cloud.is_empty() {
        return Err(Error::InsufficientData("cannot split an empty cloud into rows".into()));
    }
    if !(bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    let direction = direction.normalize();
    let lat = lateral_axis(&direction);
    let lateral = |p: &Vec3| p.x * lat.x + p.y * lat.y;

    let origins: Vec<f64> = cloud.rays().iter().map(|r| lateral(&r.origin)).collect();
    let lo = origins.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = origins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nbins = ((hi - lo) / bin_width).floor() as usize + 1;
    let mut counts = vec![0u64; nbins];
    for o in &origins {
        counts[(((o - lo) / bin_width) as usize).min(nbins - 1)] += 1;
    }
    let peaks: Vec<f64> = principal_peaks(&counts).iter().map(|b| lo + b * bin_width).collect();

    let ends: Vec<f64> = cloud.rays().iter().map(|r| lateral(&r.endpoint)).collect();
    let end_lo = ends.iter().copied().fold(f64::INFINITY, f64::min);
    let end_hi = ends.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let single = peaks.len() < 2;
    let splits: &[f64] = if peaks.len() > 2 {
        &peaks[1..peaks.len() - 1]
    } else {
        &[]
    };
    let mut bounds = vec![end_lo.min(lo)];
    bounds.extend_from_slice(splits);
    // Nudged up so the outermost endpoint falls inside the half-open band.
    bounds.push(end_hi.max(hi).next_up());
    let nbands = bounds.len() - 1;

    let band_of = |x: f64| splits.partition_point(|&s| s <= x);
    let mut members: Vec<Vec<Ray>> = vec![Vec::new(); nbands];
    for (r, (&o, &e)) in cloud.rays().iter().zip(origins.iter().zip(&ends)) {
        let (b0, b1) = {
            let (a, b) = (band_of(o), band_of(e));
            (a.min(b), a.max(b))
        };
        for m in &mut members[b0..=b1] {
            m.push(*r);
        }
    }
    let rows = members
        .into_iter()
        .enumerate()
        .map(|(index, rays)| RowSegment {
            direction,
            lateral_interval: [bounds[index], bounds[index + 1]],
            index,
            cloud: RayCloud::from_parts_unchecked(rays, cloud.max_range(), cloud.frame_id().to_string()),
        })
        .collect();
    Ok(RowSplit {
        rows,
        peaks,
        single_row_fallback: single,
    })
}

impl RowSegment {
    /// Frame centred on the band's lateral midpoint with the minimum endpoint
    /// at `y = 0`.
    pub fn frame(&self) -> RowFrame {
        let along = self
            .cloud
            .rays()
            .iter()
            .map(|r| r.endpoint.x * self.direction.x + r.endpoint.y * self.direction.y)
            .fold(f64::INFINITY, f64::min);
        RowFrame {
            direction: self.direction,
            lateral_centre: 0.5 * (self.lateral_interval[0] + self.lateral_interval[1]),
            along_offset: if along.is_finite() { along } else { 0.0 },
        }
    }

    /// True when the ray's endpoint lies in this row's band, as opposed to a
    /// ray copied in because it passes through.
    pub fn owns(&self, ray: &Ray) -> bool {
        let lat = lateral_axis(&self.direction);
        let l = ray.endpoint.x * lat.x + ray.endpoint.y * lat.y;
        self.lateral_interval[0] <= l && l < self.lateral_interval[1]
    }

    /// The row's rays expressed in row coordinates.
    pub fn to_row_coordinates(&self) -> RayCloud {
        let frame = self.frame();
        let rays = self
            .cloud
            .rays()
            .iter()
            .map(|r| Ray::new(frame.to_row(&r.origin), frame.to_row(&r.endpoint), r.time, r.contact))
            .collect();
        RayCloud::from_parts_unchecked(
            rays,
            self.cloud.max_range(),
            format!("{}/row{}", self.cloud.frame_id(), self.index),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(
            points.iter().map(|&(x, y)| Vec3::new(x, y, 1.0)).collect(),
            (0..points.len()).map(|i| i as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn straight_line_gives_its_direction() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.5, 2.0)).collect();
        let d = row_direction(&traj(&pts)).unwrap();
        assert!((d - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn longer_arm_of_l_shape_wins() {
        let mut pts: Vec<(f64, f64)> = (0..=40).map(|i| (0.0, i as f64 * 0.5)).collect();
        pts.extend((1..=10).map(|i| (i as f64 * 0.5, 20.0)));
        let d = row_direction(&traj(&pts)).unwrap();
        assert!((d - Vec2::new(0.0, 1.0)).norm() < 1e-9, "{d:?}");
    }

    #[test]
    fn short_trajectory_is_rejected() {
        assert!(row_direction(&traj(&[(0.0, 0.0), (0.2, 0.0)])).is_err());
        assert!(row_direction(&traj(&[(0.0, 0.0)])).is_err());
    }

    #[test]
    fn trajectory_rejects_jumps_and_unordered_times() {
        let p = vec![Vec3::zeros(), Vec3::new(6.0, 0.0, 0.0)];
        assert!(Trajectory::new(p, vec![0.0, 1.0]).is_err());
        let p = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        assert!(Trajectory::new(p, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn peaks_discard_shoulders_within_half_height() {
        // Shoulder at bin 2 (count 6) sits inside the main peak's half band.
        let counts = [0, 5, 6, 5, 9, 20, 9, 0, 0, 12, 0];
        let peaks = principal_peaks(&counts);
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0] - 5.5).abs() < 1e-12);
        assert!((peaks[1] - 9.5).abs() < 1e-12);
    }

    #[test]
    fn row_frame_round_trip() {
        let d = Vec2::new(0.6, 0.8);
        let f = RowFrame {
            direction: d,
            lateral_centre: 3.2,
            along_offset: -7.5,
        };
        let p = Vec3::new(12.3, -4.5, 1.7);
        let back = f.to_world(&f.to_row(&p));
        assert!((back - p).norm() < 1e-9);
        let q = Vec3::new(1.0, 2.0, 3.0);
        let dist = (p - q).norm();
        assert!(((f.to_row(&p) - f.to_row(&q)).norm() - dist).abs() < 1e-9);
    }

    #[test]
    fn every_endpoint_is_owned_by_exactly_one_row() {
        let mut rays = Vec::new();
        for (k, lane) in [0.0, 3.0, 6.0].into_iter().enumerate() {
            for i in 0..200 {
                let t = (k * 200 + i) as f64;
                let o = Vec3::new(lane, i as f64 * 0.1, 1.0);
                for dx in [-2.0, -0.5, 0.5, 2.0] {
                    rays.push(Ray::new(o, o + Vec3::new(dx, 0.3, -0.5), t, true));
                }
            }
        }
        let cloud = RayCloud::new(rays, 20.0, "test").unwrap();
        let split = split_rows(&cloud, Vec2::new(0.0, 1.0), 0.2).unwrap();
        assert_eq!(split.rows.len(), 2);
        for r in cloud.rays() {
            let owners = split.rows.iter().filter(|row| row.owns(r)).count();
            assert_eq!(owners, 1, "{r:?}");
        }
    }
}
