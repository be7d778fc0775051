//! Synthetic vineyard with a known leaf-area field.
//!
//! Two rows run along `+y` over undulating ground. A vehicle drives the
//! three lanes either side of them in a boustrophedon, carrying a spinning
//! lidar that fires rays in random directions at a fixed pulse rate. The
//! canopy is a turbid medium with interception rate `λ = ρ / 2`, so rays
//! are stopped by thinning an exponential process; ground hits are solved
//! exactly against the terrain height function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::raycloud::{classify_nonreturns, RawMeasurement, RayCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct VineyardConfig {
    pub seed: u64,
    /// Vehicle speed, m/s.
    pub speed: f64,
    /// Rays per second.
    pub pulse_rate: f64,
    pub max_range: f64,
    pub row_length: f64,
    pub row_xs: Vec<f64>,
    pub lane_xs: Vec<f64>,
    /// Distance driven past each row end before turning, m.
    pub lead: f64,
    pub sensor_height: f64,
    pub canopy_base: f64,
    pub canopy_top: f64,
    pub canopy_half_width: f64,
    /// Peak canopy density, m²/m³.
    pub peak_density: f64,
    /// Period of the along-row density modulation, m.
    pub modulation_period: f64,
    /// Elevation limits of the lidar, degrees.
    pub min_elevation: f64,
    pub max_elevation: f64,
}

impl Default for VineyardConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            speed: 1.0,
            pulse_rate: 3000.0,
            max_range: 15.0,
            row_length: 28.0,
            row_xs: vec![1.5, 4.5],
            lane_xs: vec![0.0, 3.0, 6.0],
            lead: 3.0,
            sensor_height: 1.2,
            canopy_base: 0.8,
            canopy_top: 2.0,
            canopy_half_width: 0.3,
            peak_density: 4.0,
            modulation_period: 6.3,
            min_elevation: -50.0,
            max_elevation: 60.0,
        }
    }
}

/// Relative density modulation amplitudes.
const ALONG_AMPLITUDE: f64 = 0.3;
const TOP_TAPER: f64 = 1.0;
const EDGE_TAPER: f64 = 0.5;

/// Terrain amplitude bound used to limit ground searches.
const GROUND_BOUND: f64 = 0.3;

pub fn ground_height(x: f64, y: f64) -> f64 {
    0.2 * (std::f64::consts::TAU * y / 17.0).sin() + 0.1 * (std::f64::consts::TAU * x / 11.0).cos()
}

impl VineyardConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.speed,
            self.pulse_rate,
            self.max_range,
            self.row_length,
            self.sensor_height,
            self.canopy_half_width,
            self.peak_density,
            self.modulation_period,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.lead < 0.0 {
            return Err(Error::InvalidArgument("vineyard parameters must be positive".into()));
        }
        if !(self.canopy_top > self.canopy_base && self.canopy_base >= 0.0) {
            return Err(Error::InvalidArgument("canopy top must lie above its base".into()));
        }
        if self.lane_xs.len() < 2 || self.lane_xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "need at least two increasing lane positions".into(),
            ));
        }
        if !(self.max_elevation > self.min_elevation && self.max_elevation < 90.0 && self.min_elevation > -90.0) {
            return Err(Error::InvalidArgument("bad lidar elevation limits".into()));
        }
        Ok(())
    }

    /// Canopy density at a world point, m²/m³.
    pub fn density_at(&self, p: &Vec3) -> f64 {
        if p.y < 0.0 || p.y > self.row_length {
            return 0.0;
        }
        let h = p.z - ground_height(p.x, p.y);
        if h < self.canopy_base || h > self.canopy_top {
            return 0.0;
        }
        let Some(u) = self
            .row_xs
            .iter()
            .map(|x| (p.x - x) / self.canopy_half_width)
            .find(|u| u.abs() <= 1.0)
        else {
            return 0.0;
        };
        let s = (h - self.canopy_base) / (self.canopy_top - self.canopy_base);
        let along = 1.0 + ALONG_AMPLITUDE * (std::f64::consts::TAU * p.y / self.modulation_period).sin();
        self.peak_density * (1.0 - TOP_TAPER * s) * (1.0 - EDGE_TAPER * u * u) * along
    }

    /// Upper bound of [`VineyardConfig::density_at`].
    fn max_density(&self) -> f64 {
        self.peak_density * (1.0 + ALONG_AMPLITUDE)
    }

    /// Exact one-sided leaf area of one row, m².
    pub fn row_leaf_area(&self) -> f64 {
        let height = (self.canopy_top - self.canopy_base) * (1.0 - TOP_TAPER / 2.0);
        let width = 2.0 * self.canopy_half_width * (1.0 - EDGE_TAPER / 3.0);
        let k = std::f64::consts::TAU / self.modulation_period;
        let length = self.row_length + ALONG_AMPLITUDE * (1.0 - (k * self.row_length).cos()) / k;
        self.peak_density * height * width * length
    }

    pub fn total_leaf_area(&self) -> f64 {
        self.row_leaf_area() * self.row_xs.len() as f64
    }

    /// Boustrophedon path: straight lanes joined by semicircular turns.
    fn path(&self) -> Path {
        let mut legs = Vec::new();
        let (lo, hi) = (-self.lead, self.row_length + self.lead);
        for (k, &x) in self.lane_xs.iter().enumerate() {
            let up = k % 2 == 0;
            let (y0, y1) = if up { (lo, hi) } else { (hi, lo) };
            legs.push(Leg::Line {
                from: [x, y0],
                to: [x, y1],
            });
            if let Some(&next) = self.lane_xs.get(k + 1) {
                legs.push(Leg::Turn {
                    centre: [(x + next) / 2.0, y1],
                    radius: (next - x) / 2.0,
                    up,
                });
            }
        }
        Path { legs }
    }

    fn canopy_boxes(&self) -> Vec<Aabb> {
        self.row_xs
            .iter()
            .map(|x| {
                Aabb::new(
                    Vec3::new(x - self.canopy_half_width, 0.0, self.canopy_base - GROUND_BOUND),
                    Vec3::new(
                        x + self.canopy_half_width,
                        self.row_length,
                        self.canopy_top + GROUND_BOUND,
                    ),
                )
            })
            .collect()
    }
}

enum Leg {
    Line {
        from: [f64; 2],
        to: [f64; 2],
    },
    /// Half circle from `centre - radius x̂` to `centre + radius x̂`, bulging
    /// towards `+y` when `up`.
    Turn {
        centre: [f64; 2],
        radius: f64,
        up: bool,
    },
}

impl Leg {
    fn length(&self) -> f64 {
        match self {
            Leg::Line { from, to } => ((to[0] - from[0]).powi(2) + (to[1] - from[1]).powi(2)).sqrt(),
            Leg::Turn { radius, .. } => std::f64::consts::PI * radius,
        }
    }

    fn at(&self, s: f64) -> [f64; 2] {
        match self {
            Leg::Line { from, to } => {
                let f = s / self.length();
                [from[0] + f * (to[0] - from[0]), from[1] + f * (to[1] - from[1])]
            }
            Leg::Turn { centre, radius, up } => {
                let a = std::f64::consts::PI * (1.0 - s / self.length());
                let sign = if *up { 1.0 } else { -1.0 };
                [centre[0] + radius * a.cos(), centre[1] + sign * radius * a.sin()]
            }
        }
    }
}

struct Path {
    legs: Vec<Leg>,
}

impl Path {
    fn length(&self) -> f64 {
        self.legs.iter().map(Leg::length).sum()
    }

    fn at(&self, mut s: f64) -> [f64; 2] {
        for leg in &self.legs {
            let l = leg.length();
            if s <= l {
                return leg.at(s);
            }
            s -= l;
        }
        let last = self.legs.last().expect("path has legs");
        last.at(last.length())
    }
}

/// First ground crossing along `origin + t dir` for `t ≤ t_max`.
fn ground_hit(origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<f64> {
    if dir.z >= 0.0 {
        return None;
    }
    let f = |t: f64| {
        let p = origin + dir * t;
        p.z - ground_height(p.x, p.y)
    };
    let t_lo = ((origin.z - GROUND_BOUND) / -dir.z).max(0.0);
    let t_hi = ((origin.z + GROUND_BOUND) / -dir.z).min(t_max);
    const STEP: f64 = 0.05;
    let mut a = t_lo;
    while a < t_hi {
        let b = (a + STEP).min(t_hi);
        if f(b) <= 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        a = b;
    }
    None
}

/// Output of [`generate_vineyard`].
#[derive(Debug, Clone)]
pub struct SyntheticVineyard {
    pub measurements: Vec<RawMeasurement>,
    pub cloud: RayCloud,
    pub true_leaf_area: f64,
}

const BATCH: usize = 4096;

/// Simulates one survey of the vineyard.
pub fn generate_vineyard(config: &VineyardConfig) -> Result<SyntheticVineyard> {
    config.validate()?;
    let path = config.path();
    let duration = path.length() / config.speed;
    let count = (duration * config.pulse_rate).floor() as usize;
    let boxes = config.canopy_boxes();
    let lambda_max = config.max_density() / 2.0;
    let exp = Exp::new(lambda_max).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (sin_lo, sin_hi) = (
        config.min_elevation.to_radians().sin(),
        config.max_elevation.to_radians().sin(),
    );

    let measurements: Vec<RawMeasurement> = (0..count.div_ceil(BATCH))
        .into_par_iter()
        .flat_map_iter(|batch| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(batch as u64);
            let range = batch * BATCH..((batch + 1) * BATCH).min(count);
            let (path, boxes) = (&path, &boxes);
            range
                .map(move |i| {
                    let time = i as f64 / config.pulse_rate;
                    let [x, y] = path.at(time * config.speed);
                    let origin = Vec3::new(x, y, ground_height(x, y) + config.sensor_height);
                    let azimuth = rng.random::<f64>() * std::f64::consts::TAU;
                    let sin_e = sin_lo + rng.random::<f64>() * (sin_hi - sin_lo);
                    let cos_e = (1.0 - sin_e * sin_e).sqrt();
                    let dir = Vec3::new(cos_e * azimuth.cos(), cos_e * azimuth.sin(), sin_e);
                    let limit = ground_hit(&origin, &dir, config.max_range);
                    let t_end = limit.unwrap_or(config.max_range);
                    let mut hit = limit;
                    let mut spans: Vec<(f64, f64)> = boxes
                        .iter()
                        .filter_map(|b| b.clip_segment(&origin, &dir, 0.0, t_end))
                        .collect();
                    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
                    'spans: for (t0, t1) in spans {
                        let mut t = t0;
                        loop {
                            t += exp.sample(&mut rng);
                            if t > t1 {
                                break;
                            }
                            let p = origin + dir * t;
                            if rng.random::<f64>() * lambda_max < config.density_at(&p) / 2.0 {
                                hit = Some(t);
                                break 'spans;
                            }
                        }
                    }
                    RawMeasurement {
                        origin,
                        direction: dir,
                        range: hit,
                        time,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let cloud = classify_nonreturns(&measurements, config.max_range)?;
    Ok(SyntheticVineyard {
        measurements,
        cloud,
        true_leaf_area: config.total_leaf_area(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_leaf_area_matches_quadrature() {
        let c = VineyardConfig::default();
        let (nx, ny, nz) = (40, 1400, 60);
        let (x0, x1) = (1.5 - 0.3, 1.5 + 0.3);
        let mut sum = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                let x = x0 + (i as f64 + 0.5) * (x1 - x0) / nx as f64;
                let y = (j as f64 + 0.5) * c.row_length / ny as f64;
                let g = ground_height(x, y);
                for k in 0..nz {
                    let z = g + c.canopy_base + (k as f64 + 0.5) * (c.canopy_top - c.canopy_base) / nz as f64;
                    sum += c.density_at(&Vec3::new(x, y, z));
                }
            }
        }
        let cell = (x1 - x0) / nx as f64 * c.row_length / ny as f64 * (c.canopy_top - c.canopy_base) / nz as f64;
        let area = sum * cell;
        assert!(
            (area / c.row_leaf_area() - 1.0).abs() < 1e-3,
            "{area} vs {}",
            c.row_leaf_area()
        );
    }

    #[test]
    fn path_is_continuous() {
        let p = VineyardConfig::default().path();
        let len = p.length();
        let mut last = p.at(0.0);
        for k in 1..=2000 {
            let q = p.at(len * k as f64 / 2000.0);
            let d = ((q[0] - last[0]).powi(2) + (q[1] - last[1]).powi(2)).sqrt();
            assert!(d < 0.1, "jump of {d} at step {k}");
            last = q;
        }
    }

    #[test]
    fn ground_hit_lands_on_terrain() {
        let o = Vec3::new(1.0, 2.0, ground_height(1.0, 2.0) + 1.2);
        let d = Vec3::new(0.6, 0.3, -0.5).normalize();
        let t = ground_hit(&o, &d, 20.0).unwrap();
        let p = o + d * t;
        assert!((p.z - ground_height(p.x, p.y)).abs() < 1e-9);
        assert!(ground_hit(&o, &Vec3::new(0.0, 0.0, 1.0), 20.0).is_none());
    }

    #[test]
    fn small_survey_is_deterministic() {
        let c = VineyardConfig {
            pulse_rate: 50.0,
            ..Default::default()
        };
        let a = generate_vineyard(&c).unwrap();
        let b = generate_vineyard(&c).unwrap();
        assert_eq!(a.measurements, b.measurements);
        assert!(a.cloud.rays().iter().any(|r| r.contact));
        assert!(a.cloud.rays().iter().any(|r| !r.contact));
    }
}
