//! Pipeline parameters and their flat `key = value` file format.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so that typos do not silently fall back to defaults.

use std::path::Path;

use crate::density::{Estimator, SPHERICAL_G};
use crate::error::{Error, Result};
use crate::ground::DEFAULT_CURVATURE;
use crate::rowseg::{Vec2, DEFAULT_BIN_WIDTH};
use crate::voxelgrid::{DEFAULT_N_MIN, DEFAULT_VOXEL_WIDTH};

/// How panel values are reduced from the along-row series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PanelMode {
    /// Mean leaf area per metre over the panel, m²/m.
    #[default]
    Mean,
    /// Total leaf area in the panel, m².
    Sum,
}

impl std::str::FromStr for PanelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PanelMode::Mean),
            "sum" => Ok(PanelMode::Sum),
            other => Err(Error::InvalidArgument(format!(
                "unknown panel mode {other:?} (mean|sum)"
            ))),
        }
    }
}

impl std::fmt::Display for PanelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PanelMode::Mean => "mean",
            PanelMode::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub voxel_width: f64,
    pub n_min: u32,
    pub g: f64,
    pub curvature: f64,
    pub bin_width: f64,
    pub panel_length: f64,
    /// World along-row coordinate of a panel boundary (a trellis post).
    /// Panels start at each row's frame origin when absent.
    pub panel_origin: Option<f64>,
    pub row_spacing: Option<f64>,
    /// Colour-map ceiling for integrated density images, m²/m².
    pub max_density: f64,
    pub seed: u64,
    pub estimator: Estimator,
    /// Row direction; detected from the trajectory when absent.
    pub direction: Option<Vec2>,
    pub panel_mode: PanelMode,
    /// Minimum spacing of trajectory samples recovered from ray origins, m.
    pub trajectory_spacing: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            voxel_width: DEFAULT_VOXEL_WIDTH,
            n_min: DEFAULT_N_MIN,
            g: SPHERICAL_G,
            curvature: DEFAULT_CURVATURE,
            bin_width: DEFAULT_BIN_WIDTH,
            panel_length: 7.0,
            panel_origin: None,
            row_spacing: None,
            max_density: 10.4,
            seed: 0,
            estimator: Estimator::Mean,
            direction: None,
            panel_mode: PanelMode::Mean,
            trajectory_spacing: 0.1,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: expected a number, got {value:?}")))
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 14] = [
        "voxel_width",
        "n_min",
        "g",
        "curvature",
        "bin_width",
        "panel_length",
        "panel_origin",
        "row_spacing",
        "max_density",
        "seed",
        "estimator",
        "direction",
        "panel_mode",
        "trajectory_spacing",
    ];

    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                record: line_no + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                record: line_no + 1,
                message: e.to_string(),
            })?;
        }
        self.validate()
    }

    /// Sets one parameter from its textual form. `none` clears optional ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "voxel_width" => self.voxel_width = parse_f64(key, value)?,
            "n_min" => {
                self.n_min = value
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("n_min: expected an integer, got {value:?}")))?
            }
            "g" => self.g = parse_f64(key, value)?,
            "curvature" => self.curvature = parse_f64(key, value)?,
            "bin_width" => self.bin_width = parse_f64(key, value)?,
            "panel_length" => self.panel_length = parse_f64(key, value)?,
            "panel_origin" => {
                self.panel_origin = if value == "none" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "row_spacing" => {
                self.row_spacing = if value == "none" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "max_density" => self.max_density = parse_f64(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("seed: expected an integer, got {value:?}")))?
            }
            "estimator" => self.estimator = value.parse()?,
            "direction" => {
                self.direction = if value == "none" {
                    None
                } else {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 2 {
                        return Err(Error::InvalidArgument(format!(
                            "direction: expected dx,dy, got {value:?}"
                        )));
                    }
                    Some(Vec2::new(parse_f64(key, parts[0])?, parse_f64(key, parts[1])?))
                }
            }
            "panel_mode" => self.panel_mode = value.parse()?,
            "trajectory_spacing" => self.trajectory_spacing = parse_f64(key, value)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {other:?}; valid keys: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("voxel_width", self.voxel_width),
            ("g", self.g),
            ("curvature", self.curvature),
            ("bin_width", self.bin_width),
            ("panel_length", self.panel_length),
            ("max_density", self.max_density),
            ("trajectory_spacing", self.trajectory_spacing),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(s) = self.row_spacing {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("row_spacing must be positive, got {s}")));
            }
        }
        if self.panel_origin.is_some_and(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("panel_origin must be finite".into()));
        }
        if let Some(d) = self.direction {
            if !(d.x.is_finite() && d.y.is_finite() && d.norm() > 0.0) {
                return Err(Error::InvalidArgument("direction must be a non-zero vector".into()));
            }
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:?}"));
        let direction = self
            .direction
            .map_or("none".to_string(), |d| format!("{:?},{:?}", d.x, d.y));
        format!(
            "voxel_width = {:?}\nn_min = {}\ng = {:?}\ncurvature = {:?}\nbin_width = {:?}\npanel_length = {:?}\n\
             panel_origin = {}\nrow_spacing = {}\nmax_density = {:?}\nseed = {}\nestimator = {}\ndirection = {}\npanel_mode = {}\n\
             trajectory_spacing = {:?}\n",
            self.voxel_width,
            self.n_min,
            self.g,
            self.curvature,
            self.bin_width,
            self.panel_length,
            opt(self.panel_origin),
            opt(self.row_spacing),
            self.max_density,
            self.seed,
            self.estimator,
            direction,
            self.panel_mode,
            self.trajectory_spacing,
        )
    }
}
