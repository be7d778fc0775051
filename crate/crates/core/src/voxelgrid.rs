//! Per-row voxel grids, ray traversal and sufficient statistics.
//!
//! Voxels are half-open cubes `[o + i w, o + (i + 1) w)` on each axis. Each
//! ray is walked through the grid with a 3D DDA; every voxel it enters
//! records the penetration depth (entry to exit, or entry to the ray end)
//! and the unimpeded chord length. Undersampled voxels borrow the records
//! of surrounding voxels before density estimation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{percentile, Aabb, Vec3};
use crate::raycloud::{Ray, RayCloud};

pub const DEFAULT_VOXEL_WIDTH: f64 = 0.12;
pub const DEFAULT_N_MIN: u32 = 10;
pub const GRID_FLOOR: f64 = 0.30;
pub const MIN_CONTACTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub voxel_width: f64,
    pub dims: [usize; 3],
    pub row_index: usize,
}

/// One voxel crossed by a ray, with ray parameters in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visit {
    pub voxel: [usize; 3],
    pub t_in: f64,
    pub t_out: f64,
}

impl VoxelGrid {
    pub fn new(origin: Vec3, voxel_width: f64, dims: [usize; 3], row_index: usize) -> Result<Self> {
        if !(voxel_width > 0.0) || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "voxel grid needs positive width and dims, got {voxel_width} and {dims:?}"
            )));
        }
        Ok(Self {
            origin,
            voxel_width,
            dims,
            row_index,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major linear index, `k` fastest.
    pub fn linear(&self, v: [usize; 3]) -> usize {
        (v[0] * self.dims[1] + v[1]) * self.dims[2] + v[2]
    }

    pub fn unlinear(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.voxel_width;
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn voxel_bounds(&self, v: [usize; 3]) -> Aabb {
        let min = self.origin + Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64) * self.voxel_width;
        Aabb::new(min, min + Vec3::repeat(self.voxel_width))
    }

    /// Voxel containing `p` under the half-open convention.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let c = ((p[a] - self.origin[a]) / self.voxel_width).floor();
            if c < 0.0 || c >= self.dims[a] as f64 {
                return None;
            }
            out[a] = c as usize;
        }
        Some(out)
    }

    /// Walks the segment of `ray` inside the grid. Visits are contiguous and
    /// ordered from origin to endpoint.
    pub fn traverse(&self, ray: &Ray) -> Vec<Visit> {
        let mut out = Vec::new();
        self.traverse_into(&ray.origin, &ray.vector(), &mut out);
        out
    }

    fn traverse_into(&self, origin: &Vec3, dir: &Vec3, out: &mut Vec<Visit>) {
        out.clear();
        let Some((t_enter, t_exit)) = self.bounds().clip_segment(origin, dir, 0.0, 1.0) else {
            return;
        };
        if !(t_exit > t_enter) {
            return;
        }
        let w = self.voxel_width;
        let entry = origin + dir * t_enter;
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        for a in 0..3 {
            let u = (entry[a] - self.origin[a]) / w;
            let mut c = u.floor();
            // A ray leaving a face in the negative direction starts in the
            // voxel below it.
            if dir[a] < 0.0 && u == c {
                c -= 1.0;
            }
            cell[a] = (c as i64).clamp(0, self.dims[a] as i64 - 1);
            step[a] = if dir[a] > 0.0 {
                1
            } else if dir[a] < 0.0 {
                -1
            } else {
                0
            };
        }
        let boundary_t = |a: usize, c: i64| -> f64 {
            if step[a] == 0 {
                return f64::INFINITY;
            }
            let plane = self.origin[a] + (c + i64::from(step[a] > 0)) as f64 * w;
            (plane - origin[a]) / dir[a]
        };
        let mut t_max = [0, 1, 2].map(|a| boundary_t(a, cell[a]));
        let mut t = t_enter;
        loop {
            let t_next = t_max.iter().copied().fold(f64::INFINITY, f64::min);
            let t_out = t_next.min(t_exit);
            if t_out > t {
                out.push(Visit {
                    voxel: cell.map(|c| c as usize),
                    t_in: t,
                    t_out,
                });
                t = t_out;
            }
            if t_next >= t_exit {
                break;
            }
            let mut leaves = false;
            for a in 0..3 {
                if t_max[a] == t_next {
                    cell[a] += step[a];
                    if cell[a] < 0 || cell[a] >= self.dims[a] as i64 {
                        leaves = true;
                    }
                    t_max[a] = boundary_t(a, cell[a]);
                }
            }
            if leaves {
                break;
            }
        }
    }
}

/// Builds the grid for one row cloud in row coordinates: `z` from 0.30 m to
/// the 97th percentile of contact heights above that floor, `x` between the
/// 2nd and 98th percentiles of all contacts, `y` over all contact endpoints.
/// Each extent is padded upward to a whole number of voxels.
///
/// Ground and trunk returns below the floor are left out of the height
/// percentile; counted in, they drag it below the canopy top.
pub fn build_grid(row_cloud: &RayCloud, voxel_width: f64, row_index: usize) -> Result<VoxelGrid> {
    if !(voxel_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "voxel width must be positive, got {voxel_width}"
        )));
    }
    let ends: Vec<Vec3> = row_cloud.contact_endpoints().collect();
    if ends.len() < MIN_CONTACTS {
        return Err(Error::InsufficientData(format!(
            "row {row_index} has {} contact endpoints, need {MIN_CONTACTS}",
            ends.len()
        )));
    }
    let xs: Vec<f64> = ends.iter().map(|p| p.x).collect();
    let zs: Vec<f64> = ends.iter().map(|p| p.z).filter(|z| *z >= GRID_FLOOR).collect();
    if zs.is_empty() {
        return Err(Error::Degenerate(format!(
            "row {row_index} has no contact endpoints above {GRID_FLOOR} m"
        )));
    }
    let lo = Vec3::new(
        percentile(&xs, 2.0).unwrap(),
        ends.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
        GRID_FLOOR,
    );
    let hi = Vec3::new(
        percentile(&xs, 98.0).unwrap(),
        ends.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        percentile(&zs, 97.0).unwrap(),
    );
    let mut dims = [0; 3];
    for a in 0..3 {
        let span = hi[a] - lo[a];
        if !(span > 0.0) {
            return Err(Error::Degenerate(format!(
                "row {row_index} grid has non-positive extent {span} on axis {a}"
            )));
        }
        dims[a] = voxel_count(span, voxel_width);
    }
    VoxelGrid::new(lo, voxel_width, dims, row_index)
}

/// Number of voxels needed to cover `span`, rounding up.
pub fn voxel_count(span: f64, voxel_width: f64) -> usize {
    ((span / voxel_width - 1e-9).ceil() as usize).max(1)
}

/// What a voxel keeps about the rays that entered it.
pub trait RayTally: Clone + Default + Send + Sync {
    fn push(&mut self, depth: f64, path_length: f64, contact: bool);
    fn merge(&mut self, other: &Self);
    fn n(&self) -> u32;
    fn m(&self) -> u32;
    fn sum_x(&self) -> f64;
    fn sum_y(&self) -> f64;
}

/// Per-voxel records of every ray that entered the voxel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoxelStats {
    pub n: u32,
    pub m: u32,
    pub sum_x: f64,
    pub depths: Vec<f64>,
    pub path_lengths: Vec<f64>,
}

impl VoxelStats {
    pub fn push(&mut self, depth: f64, path_length: f64, contact: bool) {
        self.n += 1;
        self.m += u32::from(contact);
        self.sum_x += depth;
        self.depths.push(depth);
        self.path_lengths.push(path_length);
    }

    pub fn merge(&mut self, other: &VoxelStats) {
        self.n += other.n;
        self.m += other.m;
        self.sum_x += other.sum_x;
        self.depths.extend_from_slice(&other.depths);
        self.path_lengths.extend_from_slice(&other.path_lengths);
    }

    pub fn sum_y(&self) -> f64 {
        self.path_lengths.iter().sum()
    }

    /// Checks the record invariants against a voxel width.
    pub fn check(&self, voxel_width: f64) -> std::result::Result<(), String> {
        if self.m > self.n {
            return Err(format!("m {} > n {}", self.m, self.n));
        }
        if self.depths.len() != self.n as usize || self.path_lengths.len() != self.n as usize {
            return Err("record lists disagree with n".into());
        }
        let diag = 3f64.sqrt() * voxel_width * (1.0 + 1e-9);
        for (x, y) in self.depths.iter().zip(&self.path_lengths) {
            if !(*x >= 0.0 && *x <= y + 1e-12 && *y <= diag) {
                return Err(format!("bad record x={x} y={y}"));
            }
        }
        let s: f64 = self.depths.iter().sum();
        if (s - self.sum_x).abs() > 1e-9 {
            return Err(format!("sum_x {} differs from recomputed {s}", self.sum_x));
        }
        Ok(())
    }

    pub fn sums(&self) -> VoxelSums {
        VoxelSums {
            n: self.n,
            m: self.m,
            sum_x: self.sum_x,
            sum_y: self.sum_y(),
        }
    }
}

impl RayTally for VoxelStats {
    fn push(&mut self, depth: f64, path_length: f64, contact: bool) {
        VoxelStats::push(self, depth, path_length, contact)
    }
    fn merge(&mut self, other: &Self) {
        VoxelStats::merge(self, other)
    }
    fn n(&self) -> u32 {
        self.n
    }
    fn m(&self) -> u32 {
        self.m
    }
    fn sum_x(&self) -> f64 {
        self.sum_x
    }
    fn sum_y(&self) -> f64 {
        VoxelStats::sum_y(self)
    }
}

/// Running sums only. Large grids use this instead of [`VoxelStats`]: the
/// estimator needs nothing else and expansion would otherwise copy record
/// lists into every undersampled voxel.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VoxelSums {
    pub n: u32,
    pub m: u32,
    pub sum_x: f64,
    pub sum_y: f64,
}

impl RayTally for VoxelSums {
    fn push(&mut self, depth: f64, path_length: f64, contact: bool) {
        self.n += 1;
        self.m += u32::from(contact);
        self.sum_x += depth;
        self.sum_y += path_length;
    }
    fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.m += other.m;
        self.sum_x += other.sum_x;
        self.sum_y += other.sum_y;
    }
    fn n(&self) -> u32 {
        self.n
    }
    fn m(&self) -> u32 {
        self.m
    }
    fn sum_x(&self) -> f64 {
        self.sum_x
    }
    fn sum_y(&self) -> f64 {
        self.sum_y
    }
}

/// Dense per-voxel tallies over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsGrid<S = VoxelStats> {
    pub grid: VoxelGrid,
    pub stats: Vec<S>,
}

impl<S: RayTally> StatsGrid<S> {
    pub fn empty(grid: VoxelGrid) -> Self {
        Self {
            stats: vec![S::default(); grid.len()],
            grid,
        }
    }

    pub fn get(&self, v: [usize; 3]) -> &S {
        &self.stats[self.grid.linear(v)]
    }

    /// Writes the debug dump: `row,i,j,k,n,m,sum_x,sum_y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "row,i,j,k,n,m,sum_x,sum_y").map_err(|e| Error::io(path, e))?;
        for (idx, s) in self.stats.iter().enumerate() {
            let [i, j, k] = self.grid.unlinear(idx);
            writeln!(
                out,
                "{},{i},{j},{k},{},{},{},{}",
                self.grid.row_index,
                s.n(),
                s.m(),
                s.sum_x(),
                s.sum_y()
            )
            .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy)]
struct Record {
    voxel: usize,
    depth: f64,
    path_length: f64,
    contact: bool,
}

fn ray_records(grid: &VoxelGrid, ray: &Ray, visits: &mut Vec<Visit>) -> Vec<Record> {
    let dir = ray.vector();
    let len = dir.norm();
    grid.traverse_into(&ray.origin, &dir, visits);
    let ends_inside = visits.last().is_some_and(|v| v.t_out >= 1.0);
    visits
        .iter()
        .enumerate()
        .map(|(n, v)| {
            let depth = (v.t_out - v.t_in) * len;
            let terminal = ends_inside && n + 1 == visits.len();
            let path_length = if terminal {
                // Chord the ray would have travelled had it not stopped.
                let (_, exit) = grid
                    .voxel_bounds(v.voxel)
                    .clip_segment(&ray.origin, &dir, v.t_in, f64::INFINITY)
                    .unwrap_or((v.t_in, v.t_out));
                ((exit.max(v.t_out) - v.t_in) * len).min(3f64.sqrt() * grid.voxel_width)
            } else {
                depth
            };
            Record {
                voxel: grid.linear(v.voxel),
                depth: depth.min(path_length),
                path_length,
                contact: terminal && ray.contact,
            }
        })
        .collect()
}

/// Rays traced per parallel batch; bounds the memory held in records.
const RAY_BATCH: usize = 1 << 15;

/// Accumulates per-voxel records for every ray in `row_cloud`.
pub fn accumulate(row_cloud: &RayCloud, grid: &VoxelGrid) -> StatsGrid {
    accumulate_with(row_cloud, grid)
}

/// [`accumulate`] keeping only running sums.
pub fn accumulate_sums(row_cloud: &RayCloud, grid: &VoxelGrid) -> StatsGrid<VoxelSums> {
    accumulate_with(row_cloud, grid)
}

/// Records are applied in ray order whatever the thread count, so the
/// floating-point sums are reproducible.
pub fn accumulate_with<S: RayTally>(row_cloud: &RayCloud, grid: &VoxelGrid) -> StatsGrid<S> {
    let mut out = StatsGrid::<S>::empty(*grid);
    for batch in row_cloud.rays().chunks(RAY_BATCH) {
        let per_ray: Vec<Vec<Record>> = batch
            .par_iter()
            .map_init(Vec::new, |visits, ray| ray_records(grid, ray, visits))
            .collect();
        for rec in per_ray.iter().flatten() {
            out.stats[rec.voxel].push(rec.depth, rec.path_length, rec.contact);
        }
    }
    out
}

/// Summed-volume table of `n` for constant-time box counts.
struct CountTable {
    dims: [usize; 3],
    table: Vec<u64>,
}

impl CountTable {
    fn new<S: RayTally>(stats: &StatsGrid<S>) -> Self {
        let [nx, ny, nz] = stats.grid.dims;
        let dims = [nx + 1, ny + 1, nz + 1];
        let mut table = vec![0u64; dims[0] * dims[1] * dims[2]];
        let at = |i: usize, j: usize, k: usize| (i * dims[1] + j) * dims[2] + k;
        for i in 1..=nx {
            for j in 1..=ny {
                for k in 1..=nz {
                    let v = stats.get([i - 1, j - 1, k - 1]).n() as u64;
                    table[at(i, j, k)] = v + table[at(i - 1, j, k)] + table[at(i, j - 1, k)] + table[at(i, j, k - 1)]
                        - table[at(i - 1, j - 1, k)]
                        - table[at(i - 1, j, k - 1)]
                        - table[at(i, j - 1, k - 1)]
                        + table[at(i - 1, j - 1, k - 1)];
                }
            }
        }
        Self { dims, table }
    }

    /// Sum over the inclusive box `lo..=hi`.
    fn sum(&self, lo: [usize; 3], hi: [usize; 3]) -> u64 {
        let d = self.dims;
        let at = |i: usize, j: usize, k: usize| self.table[(i * d[1] + j) * d[2] + k];
        let (a, b) = (lo, [hi[0] + 1, hi[1] + 1, hi[2] + 1]);
        (at(b[0], b[1], b[2]) + at(a[0], a[1], b[2]) + at(a[0], b[1], a[2]) + at(b[0], a[1], a[2]))
            - (at(a[0], b[1], b[2]) + at(b[0], a[1], b[2]) + at(b[0], b[1], a[2]) + at(a[0], a[1], a[2]))
    }
}

/// Result of [`expand_undersampled`]: the statistics used for estimation and
/// the Chebyshev radius each voxel was expanded to (0 when untouched).
#[derive(Debug, Clone)]
pub struct Expanded<S = VoxelStats> {
    pub stats: StatsGrid<S>,
    pub radius: Vec<u32>,
}

impl<S: RayTally> Expanded<S> {
    /// Voxels that have no rays even after expansion.
    pub fn observed(&self) -> Vec<bool> {
        self.stats.stats.iter().map(|s| s.n() > 0).collect()
    }
}

fn shell_box(c: [usize; 3], r: usize, dims: [usize; 3]) -> ([usize; 3], [usize; 3]) {
    let lo = [0, 1, 2].map(|a| c[a].saturating_sub(r));
    let hi = [0, 1, 2].map(|a| (c[a] + r).min(dims[a] - 1));
    (lo, hi)
}

/// Replaces the statistics of each voxel with `n < n_min` by the merged
/// records of the smallest surrounding cube reaching `n_min` rays (or the
/// whole grid). Neighbours keep their own statistics.
pub fn expand_undersampled<S: RayTally>(stats: &StatsGrid<S>, n_min: u32) -> Expanded<S> {
    let grid = stats.grid;
    let table = CountTable::new(stats);
    let max_r = grid.dims.iter().copied().max().unwrap_or(1);
    let results: Vec<(Option<S>, u32)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if stats.stats[idx].n() >= n_min {
                return (None, 0);
            }
            let c = grid.unlinear(idx);
            let mut radius = 0;
            for r in 1..=max_r {
                radius = r;
                let (lo, hi) = shell_box(c, r, grid.dims);
                let covers_all = (0..3).all(|a| lo[a] == 0 && hi[a] == grid.dims[a] - 1);
                if table.sum(lo, hi) >= n_min as u64 || covers_all {
                    break;
                }
            }
            let (lo, hi) = shell_box(c, radius, grid.dims);
            let mut merged = stats.stats[idx].clone();
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let v = [i, j, k];
                        if v != c {
                            merged.merge(stats.get(v));
                        }
                    }
                }
            }
            (Some(merged), radius as u32)
        })
        .collect();
    let mut out = stats.clone();
    let mut radius = vec![0u32; grid.len()];
    for (idx, (merged, r)) in results.into_iter().enumerate() {
        if let Some(m) = merged {
            out.stats[idx] = m;
        }
        radius[idx] = r;
    }
    Expanded { stats: out, radius }
}
