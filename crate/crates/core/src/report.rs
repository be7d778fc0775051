//! Reductions of density fields to images, along-row series and panels, plus
//! the comparison metrics used between surveys.

use std::io::Write;
use std::path::Path;

use crate::config::PanelMode;
use crate::density::DensityField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    /// The two axes left after integrating over `self`, in grid order.
    pub fn remaining(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [0, 2],
            Axis::Z => [0, 1],
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidArgument(format!("unknown axis {other:?} (x|y|z)"))),
        }
    }
}

/// A field integrated over one axis. Pixel `(a, b)` is stored at
/// `a * dims[1] + b`, where `a` and `b` index the remaining axes in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityImage {
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
    pub dims: [usize; 2],
    pub axis: Axis,
    pub pixel_size: f64,
}

impl DensityImage {
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.dims[1] + b]
    }

    /// Σ value · pixel area.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.pixel_size * self.pixel_size
    }
}

/// Integrated canopy density over `axis`, m²/m². Unobserved voxels add
/// nothing; a pixel is observed when any voxel behind it is.
pub fn integrate_axis(field: &DensityField, axis: Axis) -> DensityImage {
    let g = &field.grid;
    let w = g.voxel_width;
    let [ra, rb] = axis.remaining();
    let dims = [g.dims[ra], g.dims[rb]];
    let mut values = vec![0.0; dims[0] * dims[1]];
    let mut observed = vec![false; dims[0] * dims[1]];
    for idx in 0..g.len() {
        let v = g.unlinear(idx);
        let p = v[ra] * dims[1] + v[rb];
        if field.observed[idx] {
            values[p] += field.density[idx] * w;
            observed[p] = true;
        }
    }
    DensityImage {
        values,
        observed,
        dims,
        axis,
        pixel_size: w,
    }
}

/// Integrated density over the along-row axis divided by the row length:
/// the average cross-section density, m²/m³.
pub fn end_on_profile(field: &DensityField) -> DensityImage {
    let mut img = integrate_axis(field, Axis::Y);
    let length = field.grid.dims[1] as f64 * field.grid.voxel_width;
    for v in &mut img.values {
        *v /= length;
    }
    img
}

/// Leaf area per metre along the row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSeries {
    /// m²/m per along-row slice.
    pub values: Vec<f64>,
    pub step: f64,
    /// Along-row coordinate of the first slice's lower edge.
    pub start: f64,
}

impl RowSeries {
    pub fn centre(&self, j: usize) -> f64 {
        self.start + (j as f64 + 0.5) * self.step
    }

    pub fn length(&self) -> f64 {
        self.values.len() as f64 * self.step
    }

    /// Σ value · step, m².
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("y_m,density_m2_per_m\n");
        for (j, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{:.4},{v:.6}\n", self.centre(j)));
        }
        write_file(path, out.as_bytes())
    }
}

pub fn along_row_series(field: &DensityField) -> RowSeries {
    let g = &field.grid;
    let w = g.voxel_width;
    let mut values = vec![0.0; g.dims[1]];
    for idx in 0..g.len() {
        if field.observed[idx] {
            values[g.unlinear(idx)[1]] += field.density[idx] * w * w;
        }
    }
    RowSeries {
        values,
        step: w,
        start: g.origin[Axis::Y.index()],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSummary {
    pub panel_index: usize,
    /// Mean m²/m, or total m² in sum mode.
    pub integrated_density: f64,
    /// Total leaf area in the panel, m².
    pub leaf_area: f64,
    pub lai: Option<f64>,
    /// Row-frame `y` where the panel's first slice begins, m.
    pub start: f64,
    /// Length of row covered by the panel, m.
    pub length: f64,
}

/// Groups the series into metric windows `[k P, (k + 1) P)` by slice centre.
/// A trailing window shorter than half a panel joins the previous one.
pub fn panel_aggregate(
    series: &RowSeries,
    panel_length: f64,
    mode: PanelMode,
    row_spacing: Option<f64>,
) -> Result<Vec<PanelSummary>> {
    panel_aggregate_from(series, 0.0, panel_length, mode, row_spacing)
}

/// [`panel_aggregate`] with windows `[a + k P, a + (k + 1) P)` anchored at
/// `anchor`, e.g. a known post position.
pub fn panel_aggregate_from(
    series: &RowSeries,
    anchor: f64,
    panel_length: f64,
    mode: PanelMode,
    row_spacing: Option<f64>,
) -> Result<Vec<PanelSummary>> {
    if !(panel_length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "panel length must be positive, got {panel_length}"
        )));
    }
    if series.values.is_empty() {
        return Ok(Vec::new());
    }
    let window = |j: usize| ((series.centre(j) - anchor) / panel_length).floor() as i64;
    let first = window(0);
    let last = window(series.values.len() - 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); (last - first + 1) as usize];
    for j in 0..series.values.len() {
        members[(window(j) - first) as usize].push(j);
    }
    members.retain(|m| !m.is_empty());
    if members.len() > 1 {
        let tail = members.last().unwrap().len() as f64 * series.step;
        if tail < 0.5 * panel_length {
            let tail = members.pop().unwrap();
            members.last_mut().unwrap().extend(tail);
        }
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(panel_index, js)| {
            let sum: f64 = js.iter().map(|&j| series.values[j]).sum();
            let length = js.len() as f64 * series.step;
            let leaf_area = sum * series.step;
            PanelSummary {
                panel_index,
                integrated_density: match mode {
                    PanelMode::Mean => sum / js.len() as f64,
                    PanelMode::Sum => leaf_area,
                },
                leaf_area,
                lai: row_spacing.map(|s| leaf_area / (length * s)),
                start: series.start + js[0] as f64 * series.step,
                length,
            }
        })
        .collect())
}

/// Leaf area over the ground area of one panel, m²/m².
pub fn panel_lai(leaf_area: f64, panel_length: f64, row_spacing: f64) -> Result<f64> {
    if !(panel_length > 0.0 && row_spacing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "panel length and row spacing must be positive, got {panel_length} and {row_spacing}"
        )));
    }
    Ok(leaf_area / (panel_length * row_spacing))
}

pub fn write_panels_csv(path: &Path, rows: &[(usize, Vec<PanelSummary>)]) -> Result<()> {
    let mut out = String::from("row,panel,mean_density,lai\n");
    for (row, panels) in rows {
        for p in panels {
            let lai = p.lai.map_or(String::new(), |l| format!("{l:.6}"));
            out.push_str(&format!("{row},{},{:.6},{lai}\n", p.panel_index, p.integrated_density));
        }
    }
    write_file(path, out.as_bytes())
}

/// Reads a panels CSV back as `("<row>/<panel>", value)` pairs.
pub fn read_panels_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "row,panel,mean_density,lai" => {}
        _ => {
            return Err(Error::Parse {
                record: 1,
                message: format!("{} is not a panels CSV", path.display()),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let value = f.get(2).and_then(|v| v.trim().parse::<f64>().ok());
        match (f.len(), value) {
            (4, Some(v)) => out.push((format!("{}/{}", f[0].trim(), f[1].trim()), v)),
            _ => {
                return Err(Error::Parse {
                    record: i + 1,
                    message: format!("bad panels record {line:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Pairs two keyed samples on their shared ids, in the order of `a`.
pub fn pair_by_id(a: &[(String, f64)], b: &[(String, f64)]) -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let lookup: std::collections::HashMap<&str, f64> = b.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (id, x) in a {
        if let Some(y) = lookup.get(id.as_str()) {
            out.0.push(id.clone());
            out.1.push(*x);
            out.2.push(*y);
        }
    }
    out
}

/// Root mean square difference over the pooled mean of both samples.
pub fn rrmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "rrmse needs equal non-empty samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    let mean = (a.iter().sum::<f64>() + b.iter().sum::<f64>()) / (2.0 * n);
    if mean == 0.0 || !mean.is_finite() {
        return Err(Error::Undefined("rrmse with zero pooled mean".into()));
    }
    Ok(mse.sqrt() / mean)
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendLine {
    pub slope: f64,
    pub intercept: f64,
}

pub fn trend_line(x: &[f64], y: &[f64]) -> Result<TrendLine> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(
            "trend line needs at least two paired values".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("trend line through constant x".into()));
    }
    let slope = sxy / sxx;
    Ok(TrendLine {
        slope,
        intercept: my - slope * mx,
    })
}

/// Writes paired values as `id,value_a,value_b`.
pub fn write_comparisons_csv(path: &Path, ids: &[String], a: &[f64], b: &[f64]) -> Result<()> {
    let mut out = String::from("id,value_a,value_b\n");
    for ((id, x), y) in ids.iter().zip(a).zip(b) {
        out.push_str(&format!("{id},{x:.6},{y:.6}\n"));
    }
    write_file(path, out.as_bytes())
}

/// Linear red → green → blue over `[0, max_value]`, clamped at both ends.
pub fn colormap(value: f64, max_value: f64) -> [u8; 3] {
    let t = (value / max_value).clamp(0.0, 1.0);
    let (r, g, b) = if t <= 0.5 {
        (1.0 - 2.0 * t, 2.0 * t, 0.0)
    } else {
        (0.0, 2.0 - 2.0 * t, 2.0 * t - 1.0)
    };
    [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
}

/// 8-bit RGB raster, row-major from the top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let p = (row * self.width + col) * 3;
        [self.pixels[p], self.pixels[p + 1], self.pixels[p + 2]]
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut buf = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        buf.extend_from_slice(&self.pixels);
        write_file(path, &buf)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }
}

/// Colours an image with [`colormap`]; unobserved pixels are black. The first
/// remaining axis runs left to right and the second bottom to top.
pub fn render_colormap(image: &DensityImage, max_value: f64) -> Result<Raster> {
    if !(max_value > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "colour map maximum must be positive, got {max_value}"
        )));
    }
    let [width, height] = image.dims;
    let mut pixels = vec![0u8; width * height * 3];
    for a in 0..width {
        for b in 0..height {
            let idx = a * height + b;
            if !image.observed[idx] {
                continue;
            }
            let row = height - 1 - b;
            let p = (row * width + a) * 3;
            pixels[p..p + 3].copy_from_slice(&colormap(image.values[idx], max_value));
        }
    }
    Ok(Raster { width, height, pixels })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}
