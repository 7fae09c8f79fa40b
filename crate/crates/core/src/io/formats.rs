//! Point-cloud sample files.
//!
//! * XYZ text: one `x y z [label]` per line, `#` starts a comment, blank
//!   lines are ignored. Either every point has a label or none does. A
//!   `# category <id>` comment line sets the shape category.
//! * NPC1 packed binary, little-endian: magic `NPC1`, `u32` N, `u8`
//!   has_labels, `u8` has_category, N×3 `f32` coordinates, optional N `u16`
//!   labels, optional `u16` category.

use std::fs;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom;

pub const PACKED_MAGIC: &[u8; 4] = b"NPC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Xyz,
    Packed,
}

impl SampleFormat {
    /// `.npc` is packed; anything else is read as XYZ text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("npc") => SampleFormat::Packed,
            _ => SampleFormat::Xyz,
        }
    }
}

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut labeled: Option<bool> = None;
    let mut category = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(c) = raw
            .trim_start()
            .strip_prefix('#')
            .and_then(|c| c.trim().strip_prefix("category "))
        {
            let c = c
                .trim()
                .parse::<u16>()
                .map_err(|e| Error::parse_line(line_no, format!("bad category {c:?}: {e}")))?;
            category = Some(c);
            continue;
        }
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse_line(
                line_no,
                format!("expected 3 or 4 fields, found {}", fields.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (a, f) in fields[..3].iter().enumerate() {
            p[a] = f
                .parse::<f64>()
                .map_err(|e| Error::parse_line(line_no, format!("bad coordinate {f:?}: {e}")))?;
        }
        let has_label = fields.len() == 4;
        match labeled {
            None => labeled = Some(has_label),
            Some(prev) if prev != has_label => {
                return Err(Error::parse_line(line_no, "labels must be given for all points or none"));
            }
            _ => {}
        }
        if has_label {
            let l = fields[3]
                .parse::<u16>()
                .map_err(|e| Error::parse_line(line_no, format!("bad label {:?}: {e}", fields[3])))?;
            labels.push(l);
        }
        points.push(p);
    }
    let mut cloud = PointCloud::new(points)?;
    if labeled == Some(true) {
        cloud = cloud.with_labels(labels)?;
    }
    if let Some(c) = category {
        cloud = cloud.with_category(c);
    }
    Ok(cloud)
}

/// XYZ text with nine significant digits per coordinate.
pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    if let Some(c) = cloud.category() {
        out.push_str(&format!("# category {c}\n"));
    }
    for (i, p) in cloud.points().iter().enumerate() {
        out.push_str(&format!("{:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]));
        if let Some(l) = cloud.labels() {
            out.push_str(&format!(" {}", l[i]));
        }
        out.push('\n');
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse_offset(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn flag(&mut self, what: &str) -> Result<bool> {
        let at = self.pos;
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::parse_offset(at, format!("{what} must be 0 or 1, found {v}"))),
        }
    }
}

pub fn parse_packed(bytes: &[u8]) -> Result<PointCloud> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != PACKED_MAGIC {
        return Err(Error::parse_offset(0, "missing NPC1 magic"));
    }
    let n = cur.u32("point count")? as usize;
    let has_labels = cur.flag("has_labels")?;
    let has_category = cur.flag("has_category")?;
    let mut points = Vec::with_capacity(n.min(bytes.len() / 12));
    for _ in 0..n {
        let x = cur.f32("coordinates")?;
        let y = cur.f32("coordinates")?;
        let z = cur.f32("coordinates")?;
        points.push([f64::from(x), f64::from(y), f64::from(z)]);
    }
    let labels = if has_labels {
        Some((0..n).map(|_| cur.u16("labels")).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let category = if has_category {
        Some(cur.u16("category")?)
    } else {
        None
    };
    if cur.pos != bytes.len() {
        return Err(Error::parse_offset(cur.pos, "trailing bytes after packed cloud"));
    }
    let mut cloud = PointCloud::new(points)?;
    if let Some(l) = labels {
        cloud = cloud.with_labels(l)?;
    }
    if let Some(c) = category {
        cloud = cloud.with_category(c);
    }
    Ok(cloud)
}

/// Packed encoding; coordinates are narrowed to `f32`.
pub fn encode_packed(cloud: &PointCloud) -> Vec<u8> {
    let n = cloud.len();
    let mut out = Vec::with_capacity(10 + 12 * n + 2 * n + 2);
    out.extend_from_slice(PACKED_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(u8::from(cloud.labels().is_some()));
    out.push(u8::from(cloud.category().is_some()));
    for p in cloud.points() {
        for &v in p {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    if let Some(labels) = cloud.labels() {
        for &l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    if let Some(c) = cloud.category() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

/// Reads a sample, sniffing the NPC1 magic before falling back to text.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(PACKED_MAGIC) {
        parse_packed(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            location: format!("byte offset {}", e.utf8_error().valid_up_to()),
            message: "XYZ file is not valid UTF-8".into(),
        })?;
        parse_xyz(&text)
    }
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, format: SampleFormat) -> Result<()> {
    match format {
        SampleFormat::Xyz => fs::write(path, format_xyz(cloud))?,
        SampleFormat::Packed => fs::write(path, encode_packed(cloud))?,
    }
    Ok(())
}

/// Loads a sample with exactly `n_points` points, subsampling larger files
/// with farthest point sampling.
pub fn load_sample(path: &Path, n_points: usize) -> Result<PointCloud> {
    let cloud = read_cloud(path)?;
    reduce_to(cloud, n_points)
}

pub fn reduce_to(cloud: PointCloud, n_points: usize) -> Result<PointCloud> {
    match cloud.len() {
        n if n < n_points => Err(Error::TooFewPoints {
            required: n_points,
            available: n,
        }),
        n if n == n_points => Ok(cloud),
        _ => {
            let keep = geom::fps(cloud.points(), n_points)?;
            cloud.select(&keep)
        }
    }
}
