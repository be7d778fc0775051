//! Ray cloud data model and file I/O.
//!
//! A ray cloud stores every lidar ray as a segment from sensor origin to
//! endpoint, with a timestamp and a contact flag. Non-contact rays are
//! upward non-returns, stored at the sensor's maximum range.
//!
//! On disk a cloud is a binary little-endian PLY with per-vertex
//! `x,y,z` (endpoint), `nx,ny,nz` (origin − endpoint), `time` (seconds
//! relative to the first ray) and `flags` (bit 0 = contact). A CSV with the
//! same columns is accepted on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Tolerance on ray lengths relative to the maximum range.
pub const LENGTH_TOLERANCE: f64 = 1e-6;

const FLAG_CONTACT: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub endpoint: Vec3,
    pub time: f64,
    pub contact: bool,
}

impl Ray {
    pub fn new(origin: Vec3, endpoint: Vec3, time: f64, contact: bool) -> Self {
        Self {
            origin,
            endpoint,
            time,
            contact,
        }
    }

    pub fn length(&self) -> f64 {
        (self.endpoint - self.origin).norm()
    }

    /// Unnormalised direction, origin to endpoint.
    pub fn vector(&self) -> Vec3 {
        self.endpoint - self.origin
    }

    /// Shifts both ends of the ray vertically.
    pub fn shifted_z(&self, dz: f64) -> Self {
        let mut r = *self;
        r.origin.z += dz;
        r.endpoint.z += dz;
        r
    }
}

/// A single sensor record before non-return classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMeasurement {
    pub origin: Vec3,
    pub direction: Vec3,
    /// `None` for a non-return.
    pub range: Option<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayCloud {
    rays: Vec<Ray>,
    max_range: f64,
    frame_id: String,
}

impl RayCloud {
    /// Builds a cloud, checking every ray against the cloud invariants and
    /// sorting by time.
    pub fn new(mut rays: Vec<Ray>, max_range: f64, frame_id: impl Into<String>) -> Result<Self> {
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "max_range must be positive, got {max_range}"
            )));
        }
        for (index, ray) in rays.iter().enumerate() {
            validate_ray(ray, max_range).map_err(|message| Error::InvalidRay { index, message })?;
        }
        rays.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Self {
            rays,
            max_range,
            frame_id: frame_id.into(),
        })
    }

    pub fn empty(max_range: f64, frame_id: impl Into<String>) -> Self {
        Self {
            rays: Vec::new(),
            max_range,
            frame_id: frame_id.into(),
        }
    }

    /// Builds a cloud from rays already known to be valid and time sorted,
    /// such as a rigid transform of an existing cloud.
    pub(crate) fn from_parts_unchecked(rays: Vec<Ray>, max_range: f64, frame_id: String) -> Self {
        debug_assert!(rays.windows(2).all(|w| w[0].time <= w[1].time));
        Self {
            rays,
            max_range,
            frame_id,
        }
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn contact_endpoints(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.rays.iter().filter(|r| r.contact).map(|r| r.endpoint)
    }

    /// Keeps rays whose endpoint lies inside `[min, max]`. Ray geometry is not
    /// clipped.
    pub fn crop_box(&self, min: Vec3, max: Vec3) -> Result<RayCloud> {
        if (0..3).any(|a| !(min[a] < max[a])) {
            return Err(Error::InvalidArgument(format!(
                "degenerate crop box {:?} .. {:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        let rays = self
            .rays
            .iter()
            .filter(|r| (0..3).all(|a| r.endpoint[a] >= min[a] && r.endpoint[a] <= max[a]))
            .copied()
            .collect();
        Ok(Self::from_parts_unchecked(rays, self.max_range, self.frame_id.clone()))
    }
}

fn validate_ray(ray: &Ray, max_range: f64) -> std::result::Result<(), String> {
    let finite = ray.origin.iter().chain(ray.endpoint.iter()).all(|v| v.is_finite());
    if !finite {
        return Err("non-finite coordinate".into());
    }
    if !(ray.time.is_finite() && ray.time >= 0.0) {
        return Err(format!("time {} must be finite and non-negative", ray.time));
    }
    let len = ray.length();
    if len <= 0.0 {
        return Err("zero-length ray".into());
    }
    if len > max_range + LENGTH_TOLERANCE {
        return Err(format!("length {len} exceeds max_range {max_range}"));
    }
    if !ray.contact && (len - max_range).abs() > LENGTH_TOLERANCE {
        return Err(format!(
            "non-contact ray length {len} differs from max_range {max_range}"
        ));
    }
    Ok(())
}

/// Converts sensor records into a ray cloud.
///
/// Returns become contact rays. Non-returns pointing strictly upward
/// (`direction.z > 0`) become non-contact rays of length `max_range`; all
/// other non-returns are dropped since their length is unknown.
pub fn classify_nonreturns(measurements: &[RawMeasurement], max_range: f64) -> Result<RayCloud> {
    if !(max_range.is_finite() && max_range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "max_range must be positive, got {max_range}"
        )));
    }
    let invalid = measurements
        .iter()
        .filter(|m| !measurement_is_valid(m, max_range))
        .count();
    if invalid > 0 {
        return Err(Error::InvalidMeasurements { count: invalid });
    }
    let rays = measurements
        .iter()
        .filter_map(|m| match m.range {
            Some(range) => Some(Ray::new(m.origin, m.origin + m.direction * range, m.time, true)),
            None if m.direction.z > 0.0 => Some(Ray::new(m.origin, m.origin + m.direction * max_range, m.time, false)),
            None => None,
        })
        .collect();
    RayCloud::new(rays, max_range, "global")
}

fn measurement_is_valid(m: &RawMeasurement, max_range: f64) -> bool {
    let finite =
        m.origin.iter().chain(m.direction.iter()).all(|v| v.is_finite()) && m.time.is_finite() && m.time >= 0.0;
    let unit = (m.direction.norm() - 1.0).abs() <= 1e-9;
    let range_ok = match m.range {
        Some(r) => r.is_finite() && r > 0.0 && r <= max_range + LENGTH_TOLERANCE,
        None => true,
    };
    finite && unit && range_ok
}

/// Reads sensor records from CSV with columns `ox,oy,oz,dx,dy,dz,range,time`;
/// an empty `range` marks a non-return. Directions are normalised on read.
pub fn load_measurements_csv(path: &Path) -> Result<Vec<RawMeasurement>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (record, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("ox") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 8 {
            return Err(Error::Parse {
                record,
                message: format!("expected 8 columns, found {}", cols.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            cols[i].parse::<f64>().map_err(|e| Error::Parse {
                record,
                message: format!("column {i}: {e}"),
            })
        };
        let origin = Vec3::new(num(0)?, num(1)?, num(2)?);
        let dir = Vec3::new(num(3)?, num(4)?, num(5)?);
        let range = if cols[6].is_empty() { None } else { Some(num(6)?) };
        let direction = dir / dir.norm();
        out.push(RawMeasurement {
            origin,
            direction,
            range,
            time: num(7)?,
        });
    }
    Ok(out)
}

/// Writes sensor records in the layout read by [`load_measurements_csv`].
pub fn save_measurements_csv(measurements: &[RawMeasurement], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "ox,oy,oz,dx,dy,dz,range,time")?;
        for m in measurements {
            let range = m.range.map_or(String::new(), |r| format!("{r:?}"));
            let (o, d) = (m.origin, m.direction);
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?},{range},{:?}",
                o.x, o.y, o.z, d.x, d.y, d.z, m.time
            )?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Writes a ray cloud as binary little-endian PLY.
pub fn save_raycloud(cloud: &RayCloud, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply(cloud, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn time_offset(cloud: &RayCloud) -> f64 {
    cloud.rays.first().map_or(0.0, |r| r.time)
}

fn write_ply<W: Write>(cloud: &RayCloud, w: &mut W) -> std::io::Result<()> {
    let t0 = time_offset(cloud);
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "comment max_range {:e}", cloud.max_range)?;
    writeln!(w, "comment time_offset {:e}", t0)?;
    writeln!(w, "comment frame_id {}", cloud.frame_id)?;
    writeln!(w, "element vertex {}", cloud.rays.len())?;
    for name in ["x", "y", "z", "nx", "ny", "nz", "time"] {
        writeln!(w, "property double {name}")?;
    }
    writeln!(w, "property uchar flags")?;
    writeln!(w, "end_header")?;
    let mut buf = Vec::with_capacity(cloud.rays.len() * 57);
    for ray in &cloud.rays {
        let back = ray.origin - ray.endpoint;
        for v in [
            ray.endpoint.x,
            ray.endpoint.y,
            ray.endpoint.z,
            back.x,
            back.y,
            back.z,
            ray.time - t0,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.push(if ray.contact { FLAG_CONTACT } else { 0 });
    }
    w.write_all(&buf)
}

/// Writes a ray cloud as CSV with the PLY column layout.
pub fn save_raycloud_csv(cloud: &RayCloud, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let t0 = time_offset(cloud);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "# max_range {:e}", cloud.max_range)?;
        writeln!(w, "# time_offset {:e}", t0)?;
        writeln!(w, "# frame_id {}", cloud.frame_id)?;
        writeln!(w, "x,y,z,nx,ny,nz,time,flags")?;
        for r in &cloud.rays {
            let b = r.origin - r.endpoint;
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.endpoint.x,
                r.endpoint.y,
                r.endpoint.z,
                b.x,
                b.y,
                b.z,
                r.time - t0,
                u8::from(r.contact)
            )?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Loads a ray cloud from PLY, or from CSV when the file does not start with
/// the PLY magic.
pub fn load_raycloud(path: &Path) -> Result<RayCloud> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"ply") {
        parse_ply(&bytes)
    } else {
        parse_csv(&bytes)
    }
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Header metadata shared by the PLY and CSV readers.
#[derive(Default)]
struct Meta {
    max_range: Option<f64>,
    time_offset: f64,
    frame_id: Option<String>,
}

impl Meta {
    /// Consumes a `key value` comment, returning whether it was recognised.
    fn absorb(&mut self, comment: &str, record: usize) -> Result<()> {
        let mut it = comment.split_whitespace();
        let (Some(key), rest) = (it.next(), it.collect::<Vec<_>>().join(" ")) else {
            return Ok(());
        };
        let num = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                record,
                message: format!("bad {key} value: {e}"),
            })
        };
        match key {
            "max_range" => self.max_range = Some(num(&rest)?),
            "time_offset" => self.time_offset = num(&rest)?,
            "frame_id" => self.frame_id = Some(rest),
            _ => {}
        }
        Ok(())
    }

    fn finish(self, rays: Vec<Ray>) -> Result<RayCloud> {
        let max_range = match self.max_range {
            Some(r) => r,
            None => rays.iter().map(Ray::length).fold(0.0, f64::max).max(f64::MIN_POSITIVE),
        };
        RayCloud::new(rays, max_range, self.frame_id.unwrap_or_else(|| "global".into()))
    }
}

fn ray_from_columns(cols: [f64; 8], time_offset: f64) -> Ray {
    let endpoint = Vec3::new(cols[0], cols[1], cols[2]);
    let origin = endpoint + Vec3::new(cols[3], cols[4], cols[5]);
    Ray::new(
        origin,
        endpoint,
        cols[6] + time_offset,
        (cols[7] as u8) & FLAG_CONTACT != 0,
    )
}

const COLUMNS: [&str; 8] = ["x", "y", "z", "nx", "ny", "nz", "time", "flags"];

fn parse_ply(bytes: &[u8]) -> Result<RayCloud> {
    let mut meta = Meta::default();
    let mut offset = 0usize;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut line_no = 0usize;
    let mut in_vertex = false;
    let mut binary = false;
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse {
                record: line_no,
                message: "unterminated PLY header".into(),
            })?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| Error::Parse {
                record: line_no,
                message: "non-UTF8 header".into(),
            })?
            .trim_end_matches('\r')
            .to_string();
        offset += end + 1;
        line_no += 1;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => match words.next() {
                Some("binary_little_endian") => binary = true,
                Some("ascii") => binary = false,
                other => {
                    return Err(Error::Parse {
                        record: line_no,
                        message: format!("unsupported PLY format {other:?}"),
                    })
                }
            },
            Some("comment") => meta.absorb(line.trim_start_matches("comment").trim(), line_no)?,
            Some("element") => {
                let name = words.next().unwrap_or("");
                in_vertex = name == "vertex";
                if in_vertex {
                    count = words.next().and_then(|n| n.parse::<usize>().ok());
                } else if words.next().and_then(|n| n.parse::<usize>().ok()) != Some(0) {
                    return Err(Error::Parse {
                        record: line_no,
                        message: format!("unsupported non-empty element {name}"),
                    });
                }
            }
            Some("property") if in_vertex => {
                let ty = words.next().unwrap_or("");
                let scalar = Scalar::parse(ty).ok_or_else(|| Error::Parse {
                    record: line_no,
                    message: format!("unsupported property type {ty}"),
                })?;
                props.push((words.next().unwrap_or("").to_string(), scalar));
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| Error::Parse {
        record: line_no,
        message: "missing vertex element".into(),
    })?;
    let slots: Vec<Option<usize>> = COLUMNS.iter().map(|c| props.iter().position(|(n, _)| n == c)).collect();
    if let Some(missing) = COLUMNS.iter().zip(&slots).take(7).find(|(_, s)| s.is_none()) {
        return Err(Error::Parse {
            record: line_no,
            message: format!("missing property {}", missing.0),
        });
    }
    let mut rays = Vec::with_capacity(count);
    if binary {
        let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
        let offsets: Vec<usize> = props
            .iter()
            .scan(0, |acc, (_, s)| {
                let o = *acc;
                *acc += s.size();
                Some(o)
            })
            .collect();
        let body = &bytes[offset..];
        if body.len() < stride * count {
            return Err(Error::Parse {
                record: body.len() / stride.max(1),
                message: format!("truncated body: expected {count} records"),
            });
        }
        for i in 0..count {
            let rec = &body[i * stride..(i + 1) * stride];
            let mut cols = [0.0; 8];
            cols[7] = FLAG_CONTACT as f64;
            for (c, slot) in slots.iter().enumerate() {
                if let Some(p) = slot {
                    cols[c] = props[*p].1.read(&rec[offsets[*p]..]);
                }
            }
            rays.push(ray_from_columns(cols, meta.time_offset));
        }
    } else {
        let text = std::str::from_utf8(&bytes[offset..]).map_err(|_| Error::Parse {
            record: 0,
            message: "non-UTF8 ascii body".into(),
        })?;
        for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).take(count).enumerate() {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    record: i,
                    message: e.to_string(),
                })?;
            if vals.len() != props.len() {
                return Err(Error::Parse {
                    record: i,
                    message: format!("expected {} values, found {}", props.len(), vals.len()),
                });
            }
            let mut cols = [0.0; 8];
            cols[7] = FLAG_CONTACT as f64;
            for (c, slot) in slots.iter().enumerate() {
                if let Some(p) = slot {
                    cols[c] = vals[*p];
                }
            }
            rays.push(ray_from_columns(cols, meta.time_offset));
        }
        if rays.len() != count {
            return Err(Error::Parse {
                record: rays.len(),
                message: format!("expected {count} records"),
            });
        }
    }
    meta.finish(rays)
}

fn parse_csv(bytes: &[u8]) -> Result<RayCloud> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse {
        record: 0,
        message: "file is neither PLY nor UTF-8 CSV".into(),
    })?;
    let mut meta = Meta::default();
    let mut rays = Vec::new();
    let mut order: Option<Vec<usize>> = None;
    for (record, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            meta.absorb(comment.trim(), record)?;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if order.is_none() {
            if cols.first().is_some_and(|c| c.parse::<f64>().is_err()) {
                let idx: Option<Vec<usize>> = COLUMNS.iter().map(|c| cols.iter().position(|h| h == c)).collect();
                order = Some(idx.ok_or_else(|| Error::Parse {
                    record,
                    message: format!("CSV header must name columns {}", COLUMNS.join(",")),
                })?);
                continue;
            }
            order = Some((0..8).collect());
        }
        let idx = order.as_ref().unwrap();
        let mut vals = [0.0; 8];
        for (c, &i) in idx.iter().enumerate() {
            let s = cols.get(i).ok_or_else(|| Error::Parse {
                record,
                message: format!("missing column {}", COLUMNS[c]),
            })?;
            vals[c] = s.parse::<f64>().map_err(|e| Error::Parse {
                record,
                message: format!("column {}: {e}", COLUMNS[c]),
            })?;
        }
        rays.push(ray_from_columns(vals, meta.time_offset));
    }
    meta.finish(rays)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(dir: Vec3, range: Option<f64>, time: f64) -> RawMeasurement {
        RawMeasurement {
            origin: Vec3::new(1.0, 2.0, 1.5),
            direction: dir.normalize(),
            range,
            time,
        }
    }

    #[test]
    fn returns_pass_through_as_contact_rays() {
        let cloud = classify_nonreturns(&[meas(Vec3::x(), Some(5.0), 0.0)], 40.0).unwrap();
        assert_eq!(cloud.len(), 1);
        assert!(cloud.rays()[0].contact);
        assert!((cloud.rays()[0].length() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn upward_nonreturn_reaches_max_range() {
        let cloud = classify_nonreturns(&[meas(Vec3::z(), None, 0.0)], 40.0).unwrap();
        let r = cloud.rays()[0];
        assert!(!r.contact);
        assert_eq!(r.endpoint, r.origin + Vec3::new(0.0, 0.0, 40.0));
    }

    #[test]
    fn downward_and_horizontal_nonreturns_are_discarded() {
        let m = [meas(-Vec3::z(), None, 0.0), meas(Vec3::x(), None, 1.0)];
        assert!(classify_nonreturns(&m, 40.0).unwrap().is_empty());
    }

    #[test]
    fn output_is_time_sorted_and_counts_match() {
        let m = [
            meas(Vec3::x(), Some(2.0), 3.0),
            meas(Vec3::new(0.3, 0.0, 1.0), None, 1.0),
            meas(Vec3::new(0.3, 0.0, -1.0), None, 2.0),
            meas(Vec3::y(), Some(1.0), 0.5),
        ];
        let cloud = classify_nonreturns(&m, 10.0).unwrap();
        assert_eq!(cloud.len(), 3);
        let times: Vec<f64> = cloud.rays().iter().map(|r| r.time).collect();
        assert_eq!(times, vec![0.5, 1.0, 3.0]);
    }

    #[test]
    fn non_finite_records_are_counted() {
        let mut bad = meas(Vec3::x(), Some(1.0), 0.0);
        bad.origin.x = f64::NAN;
        let mut bad2 = meas(Vec3::x(), Some(f64::INFINITY), 0.0);
        bad2.time = 1.0;
        let err = classify_nonreturns(&[bad, bad2, meas(Vec3::x(), Some(1.0), 0.0)], 10.0).unwrap_err();
        assert!(matches!(err, Error::InvalidMeasurements { count: 2 }));
    }

    #[test]
    fn cloud_rejects_overlong_ray() {
        let rays = vec![
            Ray::new(Vec3::zeros(), Vec3::x(), 0.0, true),
            Ray::new(Vec3::zeros(), Vec3::x() * 12.0, 0.1, true),
        ];
        let err = RayCloud::new(rays, 10.0, "g").unwrap_err();
        assert!(matches!(err, Error::InvalidRay { index: 1, .. }));
    }

    #[test]
    fn crop_box_filters_by_endpoint() {
        let rays = vec![
            Ray::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), 0.0, true),
            Ray::new(Vec3::zeros(), Vec3::new(5.0, 1.0, 1.0), 0.0, true),
        ];
        let cloud = RayCloud::new(rays, 10.0, "g").unwrap();
        let all = cloud.crop_box(Vec3::repeat(-10.0), Vec3::repeat(10.0)).unwrap();
        assert_eq!(all, cloud);
        let none = cloud.crop_box(Vec3::repeat(20.0), Vec3::repeat(30.0)).unwrap();
        assert!(none.is_empty());
        let one = cloud.crop_box(Vec3::zeros(), Vec3::repeat(2.0)).unwrap();
        assert_eq!(one.len(), 1);
        assert!(cloud.crop_box(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
    }
}
