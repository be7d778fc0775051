//! Triangle-leaf voxel experiments.
//!
//! Each trial draws a fresh leaf scene and casts `n` rays through it. Errors
//! are normalised by the mean true density over all trials,
//! `ê = ⟨ρ̂ − ρ⟩ / ⟨ρ⟩`, which stays defined when a scene happens to be empty.

use super::rays::{cast_rays, RayDistribution};
use super::scene::{gen_leaf_scene, NormalDistributionSpec};
use super::{par_moments, trial_rng, Moments};
use crate::density::{debias_factor, SPHERICAL_G};
use crate::error::{Error, Result};
use crate::voxelgrid::VoxelStats;

/// `g m / Σx`, optionally scaled by `(n − 1)/n`.
fn estimate(stats: &VoxelStats, g: f64, debias: bool) -> f64 {
    if stats.m == 0 || stats.sum_x <= 0.0 {
        return 0.0;
    }
    let d = if debias { debias_factor(stats.n) } else { 1.0 };
    g * d * stats.m as f64 / stats.sum_x
}

/// Accumulates truth and estimation error for one cell.
struct Cell {
    truth: Moments,
    diff: Moments,
}

impl Cell {
    fn from_slice(m: &[Moments]) -> Self {
        Cell {
            truth: m[0],
            diff: m[1],
        }
    }

    fn normalised_error(&self) -> f64 {
        self.diff.mean() / self.truth.mean()
    }

    fn normalised_std_error(&self) -> f64 {
        self.diff.std_error() / self.truth.mean()
    }
}

fn push_trial(acc: &mut [Moments], est: f64, truth: f64) {
    acc[0].push(truth);
    acc[1].push(est - truth);
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    seed: u64,
    cell: u64,
    trials: usize,
    w: f64,
    l: f64,
    area: f64,
    n: usize,
    g: f64,
    debias: bool,
) -> Result<Cell> {
    // Validate once so the parallel loop can unwrap.
    gen_leaf_scene(
        w,
        l,
        area,
        &NormalDistributionSpec::SPHERICAL,
        &mut trial_rng(seed, cell, 0),
    )?;
    let m = par_moments(trials, 2, |t, acc| {
        let mut rng = trial_rng(seed, cell, t);
        let scene = gen_leaf_scene(w, l, area, &NormalDistributionSpec::SPHERICAL, &mut rng).expect("validated");
        let stats = cast_rays(&scene, &RayDistribution::UniformRandom, n, &mut rng);
        push_trial(acc, estimate(&stats, g, debias), scene.true_density);
    });
    Ok(Cell::from_slice(&m))
}

fn check_common(w: f64, g: f64, trials: usize) -> Result<()> {
    if !(w > 0.0 && g > 0.0) || trials == 0 {
        return Err(Error::InvalidArgument(format!(
            "need positive voxel width, g and trials, got w={w} g={g} trials={trials}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleBiasConfig {
    /// `(side length, target leaf area)` pairs, metres and m².
    pub configs: Vec<(f64, f64)>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub voxel_width: f64,
    pub g: f64,
    pub seed: u64,
}

impl Default for TriangleBiasConfig {
    fn default() -> Self {
        Self {
            configs: vec![
                (0.1, 0.012),
                (0.1, 0.04),
                (0.05, 0.003),
                (0.05, 0.01),
                (0.025, 0.012),
                (0.025, 0.001),
            ],
            ns: (2..=14).collect(),
            trials: 4000,
            voxel_width: 0.1,
            g: SPHERICAL_G,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleBiasRow {
    pub side_length: f64,
    pub area: f64,
    pub n: usize,
    pub error: f64,
    pub std_error: f64,
    /// Expected bias of the undebiased estimator, `1/(n − 1)`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleBiasTable {
    pub rows: Vec<TriangleBiasRow>,
}

impl TriangleBiasTable {
    pub fn get(&self, side_length: f64, area: f64, n: usize) -> Option<&TriangleBiasRow> {
        self.rows
            .iter()
            .find(|r| r.side_length == side_length && r.area == area && r.n == n)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("side_length_m,leaf_area_m2,n,normalised_error,std_error,reference\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6}\n",
                r.side_length, r.area, r.n, r.error, r.std_error, r.reference
            ));
        }
        s
    }
}

/// Normalised error of the undebiased estimator `g m / Σx` with uniform
/// random rays and spherical leaf normals.
pub fn triangle_bias_experiment(config: &TriangleBiasConfig) -> Result<TriangleBiasTable> {
    check_common(config.voxel_width, config.g, config.trials)?;
    let mut rows = Vec::new();
    for (ci, &(l, area)) in config.configs.iter().enumerate() {
        for (ni, &n) in config.ns.iter().enumerate() {
            if n < 1 {
                return Err(Error::InvalidArgument("ray count must be at least 1".into()));
            }
            let cell_id = (ci * config.ns.len() + ni) as u64;
            let cell = run_cell(
                config.seed,
                cell_id,
                config.trials,
                config.voxel_width,
                l,
                area,
                n,
                config.g,
                false,
            )?;
            rows.push(TriangleBiasRow {
                side_length: l,
                area,
                n,
                error: cell.normalised_error(),
                std_error: cell.normalised_std_error(),
                reference: if n > 1 { 1.0 / (n as f64 - 1.0) } else { f64::INFINITY },
            });
        }
    }
    Ok(TriangleBiasTable { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceConfig {
    pub side_lengths: Vec<f64>,
    pub areas: Vec<f64>,
    pub n: usize,
    pub trials: usize,
    pub voxel_width: f64,
    pub g: f64,
    pub seed: u64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            side_lengths: vec![0.025, 0.05, 0.075, 0.1],
            areas: (0..7).map(|k| 0.001 + 0.005 * k as f64).collect(),
            n: 20,
            trials: 1600,
            voxel_width: 0.1,
            g: SPHERICAL_G,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCell {
    pub side_length: f64,
    pub area: f64,
    pub error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSurface {
    pub n: usize,
    pub cells: Vec<SurfaceCell>,
}

impl ErrorSurface {
    pub fn max_abs_error(&self) -> f64 {
        self.cells.iter().map(|c| c.error.abs()).fold(0.0, f64::max)
    }

    pub fn mean_abs_error(&self) -> f64 {
        self.cells.iter().map(|c| c.error.abs()).sum::<f64>() / self.cells.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("side_length_m,leaf_area_m2,n,normalised_error,std_error\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                c.side_length, c.area, self.n, c.error, c.std_error
            ));
        }
        s
    }
}

/// Normalised error of the debiased estimator over a grid of leaf sizes and
/// leaf areas.
pub fn debiased_error_surface(config: &SurfaceConfig) -> Result<ErrorSurface> {
    check_common(config.voxel_width, config.g, config.trials)?;
    if config.n < 1 {
        return Err(Error::InvalidArgument("ray count must be at least 1".into()));
    }
    let mut cells = Vec::new();
    for (li, &l) in config.side_lengths.iter().enumerate() {
        for (ai, &area) in config.areas.iter().enumerate() {
            let cell_id = (li * config.areas.len() + ai) as u64;
            let cell = run_cell(
                config.seed,
                cell_id,
                config.trials,
                config.voxel_width,
                l,
                area,
                config.n,
                config.g,
                true,
            )?;
            cells.push(SurfaceCell {
                side_length: l,
                area,
                error: cell.normalised_error(),
                std_error: cell.normalised_std_error(),
            });
        }
    }
    Ok(ErrorSurface { n: config.n, cells })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrawlSpinConfig {
    pub normals: Vec<NormalDistributionSpec>,
    pub distributions: Vec<RayDistribution>,
    pub rays: usize,
    pub trials: usize,
    pub side_length: f64,
    pub area: f64,
    pub voxel_width: f64,
    pub g: f64,
    pub seed: u64,
}

impl Default for TrawlSpinConfig {
    fn default() -> Self {
        Self {
            normals: [[10.0, 1.0, 1.0], [1.0, 10.0, 1.0], [1.0, 1.0, 10.0], [1.0, 1.0, 1.0]]
                .into_iter()
                .map(|eccentricity| NormalDistributionSpec { eccentricity })
                .collect(),
            distributions: vec![RayDistribution::Trawling, RayDistribution::SPINNING_DEFAULT],
            rays: 50,
            trials: 400,
            side_length: 0.06,
            area: 0.02,
            voxel_width: 0.1,
            g: SPHERICAL_G,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrawlSpinCell {
    pub normals: NormalDistributionSpec,
    pub distribution: RayDistribution,
    /// `100 (⟨ρ̂⟩ − ⟨ρ⟩) / ⟨ρ⟩`.
    pub percent_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrawlSpinTable {
    pub cells: Vec<TrawlSpinCell>,
}

impl TrawlSpinTable {
    pub fn get(&self, eccentricity: [f64; 3], distribution: &str) -> Option<&TrawlSpinCell> {
        self.cells
            .iter()
            .find(|c| c.normals.eccentricity == eccentricity && c.distribution.name() == distribution)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("normals,distribution,percent_error,std_error\n");
        for c in &self.cells {
            s.push_str(&format!(
                "\"{}\",{},{:.3},{:.3}\n",
                c.normals.label(),
                c.distribution.name(),
                c.percent_error,
                c.std_error
            ));
        }
        s
    }
}

/// Debiased density error for each leaf-normal distribution under each ray
/// distribution. Within a trial every distribution sees the same scene.
pub fn trawl_vs_spin(config: &TrawlSpinConfig) -> Result<TrawlSpinTable> {
    check_common(config.voxel_width, config.g, config.trials)?;
    if config.rays < 1 {
        return Err(Error::InvalidArgument("ray count must be at least 1".into()));
    }
    let k = config.distributions.len();
    let mut cells = Vec::new();
    for (si, spec) in config.normals.iter().enumerate() {
        let scene_cell = si as u64;
        gen_leaf_scene(
            config.voxel_width,
            config.side_length,
            config.area,
            spec,
            &mut trial_rng(0, 0, 0),
        )?;
        let m = par_moments(config.trials, 2 * k, |t, acc| {
            let scene = gen_leaf_scene(
                config.voxel_width,
                config.side_length,
                config.area,
                spec,
                &mut trial_rng(config.seed, scene_cell, t),
            )
            .expect("validated");
            for (di, dist) in config.distributions.iter().enumerate() {
                let ray_cell = 1000 * (di as u64 + 1) + scene_cell;
                let stats = cast_rays(&scene, dist, config.rays, &mut trial_rng(config.seed, ray_cell, t));
                push_trial(
                    &mut acc[2 * di..2 * di + 2],
                    estimate(&stats, config.g, true),
                    scene.true_density,
                );
            }
        });
        for (di, dist) in config.distributions.iter().enumerate() {
            let cell = Cell::from_slice(&m[2 * di..2 * di + 2]);
            cells.push(TrawlSpinCell {
                normals: *spec,
                distribution: *dist,
                percent_error: 100.0 * cell.normalised_error(),
                std_error: 100.0 * cell.normalised_std_error(),
            });
        }
    }
    Ok(TrawlSpinTable { cells })
}
