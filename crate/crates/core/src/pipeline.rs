//! End-to-end processing: ground → rows → voxelise → density → integrate,
//! and the simulation dispatcher.
//!
//! Outputs are written to a sibling staging directory that is renamed into
//! place only when every stage succeeds. Everything except `timings.txt` is a
//! pure function of the input bytes and the configuration.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::density::{estimate_field, DensityField};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::ground::{extract_ground, subtract_ground, GroundMesh};
use crate::leafsim::turbid::{DEFAULT_LAMBDAS, DEFAULT_NS};
use crate::leafsim::{
    bias_curves, debiased_error_surface, trawl_vs_spin, triangle_bias_experiment, SurfaceConfig, TrawlSpinConfig,
    TriangleBiasConfig, TurbidEstimator,
};
use crate::raycloud::{load_raycloud, Ray, RayCloud};
use crate::report::{
    along_row_series, colormap, end_on_profile, integrate_axis, panel_aggregate_from, render_colormap,
    write_panels_csv, Axis, PanelSummary, Raster, RowSeries,
};
use crate::rowseg::{row_direction, split_rows, RowFrame, RowSegment, RowSplit, Trajectory, Vec2};
use crate::voxelgrid::{accumulate_sums, build_grid, expand_undersampled, VoxelGrid};

/// Flips a row direction so that its larger component is positive. Passes
/// driven in opposite senses then give the same row frame.
pub fn canonical_direction(d: Vec2) -> Vec2 {
    let d = d.normalize();
    let key = if d.x.abs() >= d.y.abs() { d.x } else { d.y };
    if key < 0.0 {
        -d
    } else {
        d
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Run-time options that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for reusable stage results; no caching when `None`.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RowResult {
    pub index: usize,
    /// Map between world and the row coordinates used by the outputs.
    pub frame: RowFrame,
    pub rays: usize,
    pub field: DensityField,
    pub series: RowSeries,
    pub panels: Vec<PanelSummary>,
    pub leaf_area: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub out_dir: PathBuf,
    pub direction: Vec2,
    pub single_row_fallback: bool,
    pub dropped_rays: usize,
    pub rows: Vec<RowResult>,
}

impl PipelineResult {
    pub fn total_leaf_area(&self) -> f64 {
        self.rows.iter().map(|r| r.leaf_area).sum()
    }
}

/// Ground-subtracted cloud and the mesh it was shifted by.
pub struct GroundStage {
    pub mesh: GroundMesh,
    pub cloud: RayCloud,
    pub dropped: usize,
}

pub fn ground_stage(cloud: &RayCloud, config: &PipelineConfig) -> Result<GroundStage> {
    let mesh = extract_ground(cloud, config.curvature)?;
    let sub = subtract_ground(cloud, &mesh);
    Ok(GroundStage {
        mesh,
        cloud: sub.cloud,
        dropped: sub.dropped,
    })
}

/// Row direction (given or detected, canonicalised) and the row split.
pub fn rows_stage(original: &RayCloud, grounded: &RayCloud, config: &PipelineConfig) -> Result<(Vec2, RowSplit)> {
    let direction = match config.direction {
        Some(d) => d,
        None => row_direction(&Trajectory::from_cloud(original, config.trajectory_spacing)?)?,
    };
    let direction = canonical_direction(direction);
    let split = split_rows(grounded, direction, config.bin_width)?;
    Ok((direction, split))
}

/// Grid for a row cloud in row coordinates. With `band`, only contact
/// endpoints whose `x` lies in `[band[0], band[1])` fix the bounds, so rays
/// copied in from neighbouring rows do not widen the grid.
pub fn row_grid(local: &RayCloud, band: Option<[f64; 2]>, voxel_width: f64, index: usize) -> Result<VoxelGrid> {
    match band {
        None => build_grid(local, voxel_width, index),
        Some([lo, hi]) => {
            let owned: Vec<Ray> = local
                .rays()
                .iter()
                .filter(|r| lo <= r.endpoint.x && r.endpoint.x < hi)
                .copied()
                .collect();
            let owned = RayCloud::from_parts_unchecked(owned, local.max_range(), local.frame_id().to_string());
            build_grid(&owned, voxel_width, index)
        }
    }
}

/// Voxelises a row cloud in row coordinates and estimates its density field.
pub fn row_density(
    local: &RayCloud,
    band: Option<[f64; 2]>,
    index: usize,
    config: &PipelineConfig,
) -> Result<DensityField> {
    let grid = row_grid(local, band, config.voxel_width, index)?;
    let stats = accumulate_sums(local, &grid);
    let expanded = expand_undersampled(&stats, config.n_min);
    Ok(estimate_field(&expanded.stats, config.g, config.estimator))
}

/// Lateral band of a row in its own coordinates.
pub fn local_band(row: &RowSegment) -> [f64; 2] {
    let c = row.frame().lateral_centre;
    [row.lateral_interval[0] - c, row.lateral_interval[1] - c]
}

/// Voxelises one row and estimates its density field.
pub fn density_stage(row: &RowSegment, config: &PipelineConfig) -> Result<DensityField> {
    row_density(&row.to_row_coordinates(), Some(local_band(row)), row.index, config)
}

struct Timings(Vec<(String, f64)>);

impl Timings {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((name.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

/// Runs the whole pipeline on a ray cloud file.
pub fn run_pipeline(
    input: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    options: &RunOptions,
) -> Result<PipelineResult> {
    config.validate()?;
    let staging = staging_dir(out_dir)?;
    let result = run_into(input, &staging, out_dir, config, options);
    match result {
        Ok(r) => {
            if out_dir.exists() {
                std::fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            }
            std::fs::rename(&staging, out_dir).map_err(|e| Error::io(out_dir, e))?;
            Ok(r)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn staging_dir(out_dir: &Path) -> Result<PathBuf> {
    let name = out_dir
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("bad output directory {}", out_dir.display())))?;
    let staging = out_dir.with_file_name(format!("{}.partial-{}", name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    Ok(staging)
}

fn run_into(
    input: &Path,
    dir: &Path,
    final_dir: &Path,
    config: &PipelineConfig,
    options: &RunOptions,
) -> Result<PipelineResult> {
    let mut timings = Timings(Vec::new());
    let bytes = timings
        .time("read", || std::fs::read(input))
        .map_err(|e| Error::io(input, e).in_stage("ingest"))?;
    let input_hash = sha256_hex(&bytes);
    drop(bytes);
    let cloud = timings
        .time("ingest", || load_raycloud(input))
        .map_err(|e| e.in_stage("ingest"))?;
    let cache = options.cache_dir.as_deref().map(StageCache::new).transpose()?;

    let ground_key = sha256_hex(format!("ground\n{input_hash}\ncurvature={:?}\n", config.curvature).as_bytes());
    let ground = timings
        .time("ground", || -> Result<GroundStage> {
            if let Some(hit) = cache.as_ref().and_then(|c| c.load_ground(&ground_key)) {
                return Ok(hit);
            }
            let g = ground_stage(&cloud, config)?;
            if let Some(c) = &cache {
                c.store_ground(&ground_key, &g)?;
            }
            Ok(g)
        })
        .map_err(|e| e.in_stage("ground"))?;

    let direction_text = config
        .direction
        .map_or("none".into(), |d| format!("{:?},{:?}", d.x, d.y));
    let rows_key = sha256_hex(
        format!(
            "rows\n{ground_key}\nbin_width={:?}\ndirection={direction_text}\nspacing={:?}\n",
            config.bin_width, config.trajectory_spacing
        )
        .as_bytes(),
    );
    let (direction, split) = timings
        .time("rows", || -> Result<(Vec2, RowSplit)> {
            if let Some(hit) = cache.as_ref().and_then(|c| c.load_rows(&rows_key)) {
                return Ok(hit);
            }
            let r = rows_stage(&cloud, &ground.cloud, config)?;
            if let Some(c) = &cache {
                c.store_rows(&rows_key, &r)?;
            }
            Ok(r)
        })
        .map_err(|e| e.in_stage("rows"))?;
    drop(cloud);

    let fields: Vec<DensityField> = timings
        .time("voxelise+density", || {
            split
                .rows
                .par_iter()
                .map(|row| density_stage(row, config))
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| e.in_stage("density"))?;

    let rows = timings
        .time("integrate", || integrate_rows(dir, &split, fields, config))
        .map_err(|e| e.in_stage("integrate"))?;

    ground
        .mesh
        .write_obj(&dir.join("ground.obj"))
        .map_err(|e| e.in_stage("integrate"))?;
    let result = PipelineResult {
        out_dir: final_dir.to_path_buf(),
        direction,
        single_row_fallback: split.single_row_fallback,
        dropped_rays: ground.dropped,
        rows,
    };
    write_pipeline_manifest(dir, input, &input_hash, config, &ground, &split, &result)?;
    let mut t = String::from("stage,seconds\n");
    for (name, secs) in &timings.0 {
        t.push_str(&format!("{name},{secs:.3}\n"));
    }
    write_bytes(&dir.join("timings.txt"), t.as_bytes())?;
    Ok(result)
}

fn integrate_rows(
    dir: &Path,
    split: &RowSplit,
    fields: Vec<DensityField>,
    config: &PipelineConfig,
) -> Result<Vec<RowResult>> {
    let mut rows = Vec::with_capacity(fields.len());
    let mut panel_rows = Vec::new();
    for (row, field) in split.rows.iter().zip(fields) {
        let k = row.index;
        field.save(&dir.join(format!("row{k}_density.bin")))?;
        field.write_csv(&dir.join(format!("row{k}_density.csv")))?;
        for (name, axis) in [("side", Axis::X), ("top", Axis::Z)] {
            let raster = render_colormap(&integrate_axis(&field, axis), config.max_density)?;
            write_raster(dir, &format!("row{k}_{name}"), &raster)?;
        }
        let end_on = end_on_profile(&field);
        let peak = end_on.values.iter().copied().fold(0.0, f64::max);
        let raster = render_colormap(&end_on, if peak > 0.0 { peak } else { 1.0 })?;
        write_raster(dir, &format!("row{k}_endon"), &raster)?;
        let series = along_row_series(&field);
        series.write_csv(&dir.join(format!("row{k}_series.csv")))?;
        let anchor = config.panel_origin.map_or(0.0, |a| a - row.frame().along_offset);
        let panels = panel_aggregate_from(
            &series,
            anchor,
            config.panel_length,
            config.panel_mode,
            config.row_spacing,
        )?;
        panel_rows.push((k, panels.clone()));
        rows.push(RowResult {
            index: k,
            frame: row.frame(),
            rays: row.cloud.len(),
            leaf_area: field.total_leaf_area(),
            field,
            series,
            panels,
        });
    }
    write_panels_csv(&dir.join("panels.csv"), &panel_rows)?;
    let mut summary = String::from("row,rays,nx,ny,nz,observed_voxels,leaf_area_m2\n");
    for r in &rows {
        let d = r.field.grid.dims;
        let observed = r.field.observed.iter().filter(|o| **o).count();
        summary.push_str(&format!(
            "{},{},{},{},{},{observed},{:.6}\n",
            r.index, r.rays, d[0], d[1], d[2], r.leaf_area
        ));
    }
    write_bytes(&dir.join("summary.csv"), summary.as_bytes())?;
    Ok(rows)
}

fn write_raster(dir: &Path, stem: &str, raster: &Raster) -> Result<()> {
    raster.write_ppm(&dir.join(format!("{stem}.ppm")))?;
    raster.write_png(&dir.join(format!("{stem}.png")))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Hashes of every file in `dir` except the manifest and timings.
fn output_hashes(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "manifest.txt" || name == "timings.txt" {
            continue;
        }
        let bytes = std::fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        out.insert(name, sha256_hex(&bytes));
    }
    Ok(out)
}

fn write_pipeline_manifest(
    dir: &Path,
    input: &Path,
    input_hash: &str,
    config: &PipelineConfig,
    ground: &GroundStage,
    split: &RowSplit,
    result: &PipelineResult,
) -> Result<()> {
    let mut m = String::from("# raycanopy pipeline manifest\n");
    m.push_str(&format!(
        "input = {}\ninput_sha256 = {input_hash}\n\n[config]\n{}\n[stages]\n",
        input
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        config.to_text()
    ));
    m.push_str(&format!(
        "ground: vertices={} triangles={} dropped_rays={}\n",
        ground.mesh.vertices().len(),
        ground.mesh.triangles().len(),
        ground.dropped
    ));
    let peaks: Vec<String> = split.peaks.iter().map(|p| format!("{p:.3}")).collect();
    m.push_str(&format!(
        "rows: direction={:.6},{:.6} peaks=[{}] single_row_fallback={}\n",
        result.direction.x,
        result.direction.y,
        peaks.join(" "),
        split.single_row_fallback
    ));
    for r in &result.rows {
        let g = &r.field.grid;
        m.push_str(&format!(
            "row {}: rays={} dims={}x{}x{} origin={:.4},{:.4},{:.4} leaf_area_m2={:.6}\n",
            r.index, r.rays, g.dims[0], g.dims[1], g.dims[2], g.origin.x, g.origin.y, g.origin.z, r.leaf_area
        ));
    }
    m.push_str(&format!(
        "total_leaf_area_m2 = {:.6}\n\n[outputs]\n",
        result.total_leaf_area()
    ));
    for (name, hash) in output_hashes(dir)? {
        m.push_str(&format!("{name} {hash}\n"));
    }
    write_bytes(&dir.join("manifest.txt"), m.as_bytes())
}

/// Content-addressed store of stage results in an exact binary form, so a
/// cached run reproduces an uncached one bit for bit.
struct StageCache {
    dir: PathBuf,
}

const CACHE_MAGIC: &[u8] = b"RCCACHE1";

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec3(&mut self, v: &Vec3) {
        v.iter().for_each(|c| self.f64(*c));
    }
    fn cloud(&mut self, c: &RayCloud) {
        self.f64(c.max_range());
        let id = c.frame_id().as_bytes();
        self.u64(id.len() as u64);
        self.0.extend_from_slice(id);
        self.u64(c.len() as u64);
        for r in c.rays() {
            self.vec3(&r.origin);
            self.vec3(&r.endpoint);
            self.f64(r.time);
            self.0.push(u8::from(r.contact));
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        if self.0.len() < n {
            return None;
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Some(a)
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn vec3(&mut self) -> Option<Vec3> {
        Some(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn cloud(&mut self) -> Option<RayCloud> {
        let max_range = self.f64()?;
        let len = self.u64()? as usize;
        let id = String::from_utf8(self.take(len)?.to_vec()).ok()?;
        let n = self.u64()? as usize;
        let mut rays = Vec::with_capacity(n.min(self.0.len() / 57));
        for _ in 0..n {
            let origin = self.vec3()?;
            let endpoint = self.vec3()?;
            let time = self.f64()?;
            let contact = self.take(1)?[0] != 0;
            rays.push(Ray::new(origin, endpoint, time, contact));
        }
        Some(RayCloud::from_parts_unchecked(rays, max_range, id))
    }
}

impl StageCache {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn read(&self, key: &str) -> Option<Vec<u8>> {
        let mut bytes = Vec::new();
        std::fs::File::open(self.dir.join(key))
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .ok()?;
        bytes
            .starts_with(CACHE_MAGIC)
            .then(|| bytes.split_off(CACHE_MAGIC.len()))
    }

    fn write(&self, key: &str, body: Vec<u8>) -> Result<()> {
        let tmp = self.dir.join(format!("{key}.tmp-{}", std::process::id()));
        let mut bytes = CACHE_MAGIC.to_vec();
        bytes.extend(body);
        write_bytes(&tmp, &bytes)?;
        std::fs::rename(&tmp, self.dir.join(key)).map_err(|e| Error::io(&self.dir, e))
    }

    fn store_ground(&self, key: &str, g: &GroundStage) -> Result<()> {
        let mut w = Writer(Vec::new());
        w.u64(g.mesh.vertices().len() as u64);
        g.mesh.vertices().iter().for_each(|v| w.vec3(v));
        w.u64(g.mesh.triangles().len() as u64);
        for t in g.mesh.triangles() {
            t.iter().for_each(|i| w.u64(*i as u64));
        }
        w.f64(g.mesh.bin_size());
        w.u64(g.dropped as u64);
        w.cloud(&g.cloud);
        self.write(key, w.0)
    }

    fn load_ground(&self, key: &str) -> Option<GroundStage> {
        let bytes = self.read(key)?;
        let mut r = Reader(&bytes);
        let nv = r.u64()? as usize;
        let vertices = (0..nv).map(|_| r.vec3()).collect::<Option<Vec<_>>>()?;
        let nt = r.u64()? as usize;
        let triangles = (0..nt)
            .map(|_| Some([r.u64()? as usize, r.u64()? as usize, r.u64()? as usize]))
            .collect::<Option<Vec<_>>>()?;
        let bin_size = r.f64()?;
        let dropped = r.u64()? as usize;
        let cloud = r.cloud()?;
        let mesh = GroundMesh::from_triangles(vertices, triangles, Some(bin_size)).ok()?;
        log::info!("ground stage loaded from cache");
        Some(GroundStage { mesh, cloud, dropped })
    }

    fn store_rows(&self, key: &str, (direction, split): &(Vec2, RowSplit)) -> Result<()> {
        let mut w = Writer(Vec::new());
        w.f64(direction.x);
        w.f64(direction.y);
        w.u64(u64::from(split.single_row_fallback));
        w.u64(split.peaks.len() as u64);
        split.peaks.iter().for_each(|p| w.f64(*p));
        w.u64(split.rows.len() as u64);
        for row in &split.rows {
            w.f64(row.direction.x);
            w.f64(row.direction.y);
            w.f64(row.lateral_interval[0]);
            w.f64(row.lateral_interval[1]);
            w.u64(row.index as u64);
            w.cloud(&row.cloud);
        }
        self.write(key, w.0)
    }

    fn load_rows(&self, key: &str) -> Option<(Vec2, RowSplit)> {
        let bytes = self.read(key)?;
        let mut r = Reader(&bytes);
        let direction = Vec2::new(r.f64()?, r.f64()?);
        let single_row_fallback = r.u64()? != 0;
        let np = r.u64()? as usize;
        let peaks = (0..np).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
        let nr = r.u64()? as usize;
        let mut rows = Vec::with_capacity(nr.min(1024));
        for _ in 0..nr {
            let d = Vec2::new(r.f64()?, r.f64()?);
            let lateral_interval = [r.f64()?, r.f64()?];
            let index = r.u64()? as usize;
            let cloud = r.cloud()?;
            rows.push(RowSegment {
                direction: d,
                lateral_interval,
                index,
                cloud,
            });
        }
        log::info!("rows stage loaded from cache");
        Some((
            direction,
            RowSplit {
                rows,
                peaks,
                single_row_fallback,
            },
        ))
    }
}

/// Simulation experiments available to [`run_simulation`].
pub const EXPERIMENTS: [&str; 4] = ["turbid-bias", "triangle-bias", "error-surface", "trawl-vs-spin"];

#[derive(Debug, Clone, Default)]
pub struct SimulationOptions {
    pub seed: u64,
    /// Overrides the experiment's default trial count.
    pub trials: Option<usize>,
}

/// Runs one named experiment and writes `<name>.csv` and `manifest.txt` to
/// `out_dir`. Returns the CSV text.
pub fn run_simulation(name: &str, out_dir: &Path, options: &SimulationOptions) -> Result<String> {
    if !EXPERIMENTS.contains(&name) {
        return Err(Error::UnknownExperiment {
            name: name.to_string(),
            valid: EXPERIMENTS.to_vec(),
        });
    }
    if options.trials == Some(0) {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let seed = options.seed;
    let mut images: Vec<(String, Raster)> = Vec::new();
    let (csv, trials) = match name {
        "turbid-bias" => {
            let trials = options.trials.unwrap_or(100_000);
            let curves = bias_curves(
                &DEFAULT_LAMBDAS,
                &DEFAULT_NS,
                1.0,
                trials,
                &[TurbidEstimator::MlMode, TurbidEstimator::Debiased],
                seed,
            )?;
            (curves.to_csv(), trials)
        }
        "triangle-bias" => {
            let mut c = TriangleBiasConfig {
                seed,
                ..Default::default()
            };
            c.trials = options.trials.unwrap_or(c.trials);
            (triangle_bias_experiment(&c)?.to_csv(), c.trials)
        }
        "error-surface" => {
            let mut c = SurfaceConfig {
                seed,
                ..Default::default()
            };
            c.trials = options.trials.unwrap_or(c.trials);
            let surface = debiased_error_surface(&c)?;
            // Columns are leaf sizes, rows leaf areas (largest at the top);
            // the colour scale spans ±0.1 normalised error.
            let (w, h) = (c.side_lengths.len(), c.areas.len());
            let mut pixels = vec![0u8; w * h * 3];
            for (li, _) in c.side_lengths.iter().enumerate() {
                for (ai, _) in c.areas.iter().enumerate() {
                    let e = surface.cells[li * h + ai].error;
                    let p = ((h - 1 - ai) * w + li) * 3;
                    let rgb = if e.is_finite() {
                        colormap(e + 0.1, 0.2)
                    } else {
                        [0, 0, 0]
                    };
                    pixels[p..p + 3].copy_from_slice(&rgb);
                }
            }
            images.push((
                "error-surface".into(),
                Raster {
                    width: w,
                    height: h,
                    pixels,
                },
            ));
            (surface.to_csv(), c.trials)
        }
        "trawl-vs-spin" => {
            let mut c = TrawlSpinConfig {
                seed,
                ..Default::default()
            };
            c.trials = options.trials.unwrap_or(c.trials);
            (trawl_vs_spin(&c)?.to_csv(), c.trials)
        }
        _ => unreachable!("checked against EXPERIMENTS"),
    };
    write_bytes(&out_dir.join(format!("{name}.csv")), csv.as_bytes())?;
    for (stem, raster) in &images {
        raster.write_ppm(&out_dir.join(format!("{stem}.ppm")))?;
    }
    let manifest = format!(
        "# raycanopy simulation manifest\nexperiment = {name}\nseed = {seed}\ntrials = {trials}\n{name}.csv {}\n",
        sha256_hex(csv.as_bytes())
    );
    write_bytes(&out_dir.join("manifest.txt"), manifest.as_bytes())?;
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_direction_prefers_positive_major_axis() {
        assert_eq!(canonical_direction(Vec2::new(0.0, -1.0)), Vec2::new(0.0, 1.0));
        assert_eq!(
            canonical_direction(Vec2::new(-2.0, 1.0)),
            Vec2::new(2.0, -1.0).normalize()
        );
        assert_eq!(canonical_direction(Vec2::new(1.0, 0.0)), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn unknown_experiment_lists_valid_names() {
        let dir = std::env::temp_dir().join("raycanopy-unknown-experiment");
        let err = run_simulation("nope", &dir, &SimulationOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(EXPERIMENTS.iter().all(|e| msg.contains(e)), "{msg}");
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let rays = vec![
            Ray::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0 / 3.0, 2.5, -0.7), 0.25, true),
            Ray::new(Vec3::new(-4.0, 1e-9, 2.0), Vec3::new(3.0, 2.0, 9.0), 1.5, false),
        ];
        let cloud = RayCloud::from_parts_unchecked(rays, 20.0, "global".into());
        let mut w = Writer(Vec::new());
        w.cloud(&cloud);
        let back = Reader(&w.0).cloud().unwrap();
        assert_eq!(back.rays(), cloud.rays());
        assert_eq!(back.frame_id(), "global");
    }
}
