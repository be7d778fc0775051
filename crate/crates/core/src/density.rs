//! Per-voxel canopy density from censored exponential penetration depths.
//!
//! Under a turbid-medium model the likelihood of `m` interceptions over a
//! total penetration depth `Σx` is `λ^m exp(−λ Σx)`, whose conjugate prior
//! is Gamma. The posterior with a flat `(0, 0)` prior has mean `m / Σx`;
//! canopy density (one-sided leaf area per m³) is that rate scaled by the
//! leaf-projection factor `g` and the finite-sample factor `(n − 1) / n`.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::voxelgrid::{RayTally, StatsGrid, VoxelGrid};

/// Leaf-projection scale for a spherical leaf-angle distribution.
pub const SPHERICAL_G: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPosterior {
    pub alpha: f64,
    /// Rate, in metres.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaStats {
    pub mean: f64,
    pub mode: f64,
    pub variance: f64,
}

impl GammaPosterior {
    pub fn lambda_stats(&self) -> Result<LambdaStats> {
        if !(self.beta > 0.0) {
            return Err(Error::Undefined(format!(
                "Gamma rate must be positive, got {}",
                self.beta
            )));
        }
        Ok(LambdaStats {
            mean: self.alpha / self.beta,
            mode: ((self.alpha - 1.0) / self.beta).max(0.0),
            variance: self.alpha / (self.beta * self.beta),
        })
    }
}

/// Conjugate update of a Gamma prior with a voxel's interceptions.
pub fn posterior<S: RayTally>(stats: &S, prior_alpha: f64, prior_beta: f64) -> GammaPosterior {
    GammaPosterior {
        alpha: prior_alpha + stats.m() as f64,
        beta: prior_beta + stats.sum_x(),
    }
}

/// `(n − 1) / n`; zero for `n ≤ 1`.
pub fn debias_factor(n: u32) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64 - 1.0) / n as f64
    }
}

/// Which posterior summary feeds the density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Posterior mean `m / Σx` (the default).
    #[default]
    Mean,
    /// Posterior mode `max((m − 1) / Σx, 0)`, the maximum-likelihood rate.
    Mode,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Estimator::Mean),
            "mode" => Ok(Estimator::Mode),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimator {other:?} (mean|mode)"
            ))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Mean => "mean",
            Estimator::Mode => "mode",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    /// m²/m³.
    pub value: f64,
    pub variance: f64,
}

/// Debiased canopy density of one voxel; `None` when no ray entered it.
pub fn canopy_density<S: RayTally>(stats: &S, g: f64) -> Option<Density> {
    canopy_density_with(stats, g, Estimator::Mean)
}

pub fn canopy_density_with<S: RayTally>(stats: &S, g: f64, estimator: Estimator) -> Option<Density> {
    if stats.n() == 0 {
        return None;
    }
    if stats.m() == 0 {
        return Some(Density {
            value: 0.0,
            variance: 0.0,
        });
    }
    assert!(stats.sum_x() > 0.0, "voxel with contacts has zero penetration depth");
    let lambda = posterior(stats, 0.0, 0.0)
        .lambda_stats()
        .expect("positive rate checked above");
    let scale = g * debias_factor(stats.n());
    let rate = match estimator {
        Estimator::Mean => lambda.mean,
        Estimator::Mode => lambda.mode,
    };
    Some(Density {
        value: scale * rate,
        variance: scale * scale * lambda.variance,
    })
}

/// Uncensored rate estimate `(n − 1) / Σx` and, when `n > 2`, its standard
/// deviation `λ̂ / √(n − 2)` evaluated at the estimate.
pub fn uncensored_lambda(depths: &[f64]) -> Result<(f64, Option<f64>)> {
    let n = depths.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "uncensored estimate needs n ≥ 2, got {n}"
        )));
    }
    let sum: f64 = depths.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Undefined("sum of depths must be positive".into()));
    }
    let lambda = (n as f64 - 1.0) / sum;
    let sd = (n > 2).then(|| lambda / ((n - 2) as f64).sqrt());
    Ok((lambda, sd))
}

/// Density estimates over a whole row grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: VoxelGrid,
    pub g: f64,
    pub density: Vec<f64>,
    pub variance: Vec<f64>,
    pub observed: Vec<bool>,
    /// Ray counts behind each estimate (after expansion).
    pub n: Vec<u32>,
    pub m: Vec<u32>,
}

impl DensityField {
    pub fn zeros(grid: VoxelGrid, g: f64) -> Self {
        let len = grid.len();
        Self {
            grid,
            g,
            density: vec![0.0; len],
            variance: vec![0.0; len],
            observed: vec![false; len],
            n: vec![0; len],
            m: vec![0; len],
        }
    }

    pub fn at(&self, v: [usize; 3]) -> f64 {
        self.density[self.grid.linear(v)]
    }

    /// Total one-sided leaf area, m².
    pub fn total_leaf_area(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.grid.voxel_width.powi(3)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("i,j,k,density,variance,n,m\n");
        for idx in 0..self.grid.len() {
            if !self.observed[idx] {
                continue;
            }
            let [i, j, k] = self.grid.unlinear(idx);
            out.push_str(&format!(
                "{i},{j},{k},{},{},{},{}\n",
                self.density[idx], self.variance[idx], self.n[idx], self.m[idx]
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    /// Binary field file: header, then `f32` density and variance planes in
    /// row-major order and an observed bitmask (LSB first).
    pub fn save(&self, path: &Path) -> Result<()> {
        let len = self.grid.len();
        let mut buf = Vec::with_capacity(FIELD_MAGIC.len() + 80 + len * 8 + len / 8 + 1);
        buf.extend_from_slice(FIELD_MAGIC);
        for d in self.grid.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.grid.row_index as u32).to_le_bytes());
        for v in [
            self.grid.voxel_width,
            self.grid.origin.x,
            self.grid.origin.y,
            self.grid.origin.z,
            self.g,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for plane in [&self.density, &self.variance] {
            for v in plane.iter() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let mut mask = vec![0u8; len.div_ceil(8)];
        for (i, _) in self.observed.iter().enumerate().filter(|(_, o)| **o) {
            mask[i / 8] |= 1 << (i % 8);
        }
        buf.extend_from_slice(&mask);
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a field written by [`DensityField::save`]. Ray counts are not
    /// stored and load as zero.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Parse {
            record: 0,
            message: format!("density field: {m}"),
        };
        if !bytes.starts_with(FIELD_MAGIC) {
            return Err(bad("missing magic"));
        }
        let mut pos = FIELD_MAGIC.len();
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        let mut u32s = [0usize; 4];
        for v in &mut u32s {
            *v = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let mut f64s = [0.0; 5];
        for v in &mut f64s {
            *v = f64::from_le_bytes(take(8)?.try_into().unwrap());
        }
        let grid = VoxelGrid::new(
            Vec3::new(f64s[1], f64s[2], f64s[3]),
            f64s[0],
            [u32s[0], u32s[1], u32s[2]],
            u32s[3],
        )?;
        let len = grid.len();
        let mut planes = [vec![0.0; len], vec![0.0; len]];
        for plane in &mut planes {
            let raw = take(len * 4)?;
            for (i, c) in raw.chunks_exact(4).enumerate() {
                plane[i] = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            }
        }
        let mask = take(len.div_ceil(8))?;
        let observed = (0..len).map(|i| mask[i / 8] & (1 << (i % 8)) != 0).collect();
        let [density, variance] = planes;
        Ok(Self {
            grid,
            g: f64s[4],
            density,
            variance,
            observed,
            n: vec![0; len],
            m: vec![0; len],
        })
    }
}

const FIELD_MAGIC: &[u8] = b"RCDFIELD1\n";

/// Applies [`canopy_density`] to every voxel of (already expanded) statistics.
pub fn estimate_field<S: RayTally>(stats: &StatsGrid<S>, g: f64, estimator: Estimator) -> DensityField {
    let mut field = DensityField::zeros(stats.grid, g);
    let values: Vec<Option<Density>> = stats
        .stats
        .par_iter()
        .map(|s| canopy_density_with(s, g, estimator))
        .collect();
    for (idx, v) in values.into_iter().enumerate() {
        field.n[idx] = stats.stats[idx].n();
        field.m[idx] = stats.stats[idx].m();
        if let Some(d) = v {
            field.density[idx] = d.value;
            field.variance[idx] = d.variance;
            field.observed[idx] = true;
        }
    }
    field
}
