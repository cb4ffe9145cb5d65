//! Scan and trajectory readers/writers: raw float32 binary scans, PLY clouds
//! (ascii and binary little-endian), TUM and KITTI trajectory formats.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub entries: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn push(&mut self, timestamp: f64, pose: Pose) -> Result<()> {
        if let Some((last, _)) = self.entries.last() {
            if timestamp <= *last {
                return Err(Error::Contract(format!(
                    "timestamps must be strictly increasing ({timestamp} after {last})"
                )));
            }
        }
        self.entries.push((timestamp, pose));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.entries.iter().map(|(_, p)| p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanFormat {
    KittiBin,
    Ply,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroundTruthFormat {
    Tum,
    Kitti,
}

#[derive(Clone, Debug)]
pub struct DatasetLayout {
    pub scan_dir: PathBuf,
    pub format: ScanFormat,
    pub scan_paths: Vec<PathBuf>,
    pub groundtruth: Option<(PathBuf, GroundTruthFormat)>,
}

impl DatasetLayout {
    /// Scans a directory for `.bin` or `.ply` files (lexicographic order) and
    /// an optional `groundtruth.txt` (TUM) or `poses.txt` (KITTI).
    pub fn discover(dir: &Path) -> Result<Self> {
        let mut bins = Vec::new();
        let mut plys = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            match path.extension().and_then(|e| e.to_str()) {
                Some("bin") => bins.push(path),
                Some("ply") => plys.push(path),
                _ => {}
            }
        }
        let (format, mut scan_paths) = if !bins.is_empty() {
            (ScanFormat::KittiBin, bins)
        } else if !plys.is_empty() {
            (ScanFormat::Ply, plys)
        } else {
            return Err(Error::Config(format!("no scans found in {}", dir.display())));
        };
        scan_paths.sort();
        let mut groundtruth = None;
        let tum = dir.join("groundtruth.txt");
        let kitti = dir.join("poses.txt");
        if tum.is_file() {
            groundtruth = Some((tum, GroundTruthFormat::Tum));
        } else if kitti.is_file() {
            groundtruth = Some((kitti, GroundTruthFormat::Kitti));
        }
        Ok(DatasetLayout {
            scan_dir: dir.to_path_buf(),
            format,
            scan_paths,
            groundtruth,
        })
    }

    /// Timestamp for scan `index`: the file stem when it parses as seconds,
    /// otherwise index times a nominal 0.1 s period.
    pub fn timestamp(&self, index: usize) -> f64 {
        self.scan_paths
            .get(index)
            .and_then(|p| p.file_stem())
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|t| t.is_finite())
            .unwrap_or(index as f64 * 0.1)
    }
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Reads a scan; non-finite points are dropped.
pub fn read_scan(path: &Path, format: ScanFormat) -> Result<Vec<Point3>> {
    match format {
        ScanFormat::KittiBin => read_kitti_bin(path),
        ScanFormat::Ply => read_ply(path),
    }
}

/// Little-endian float32 quadruples (x, y, z, intensity); intensity dropped.
fn read_kitti_bin(path: &Path) -> Result<Vec<Point3>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 16 != 0 {
        return Err(parse_err(
            path,
            format!("truncated record at byte offset {}", bytes.len() - bytes.len() % 16),
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for chunk in bytes.chunks_exact(16) {
        let x = f32::from_le_bytes(chunk[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(chunk[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(chunk[8..12].try_into().unwrap()) as f64;
        if x.is_finite() && y.is_finite() && z.is_finite() {
            points.push(Point3::new(x, y, z));
        }
    }
    Ok(points)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy)]
enum PlyScalar {
    F32,
    F64,
    U8,
    I32,
    U32,
}

impl PlyScalar {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "float" | "float32" => Some(PlyScalar::F32),
            "double" | "float64" => Some(PlyScalar::F64),
            "uchar" | "uint8" => Some(PlyScalar::U8),
            "int" | "int32" => Some(PlyScalar::I32),
            "uint" | "uint32" => Some(PlyScalar::U32),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            PlyScalar::U8 => 1,
            PlyScalar::F32 | PlyScalar::I32 | PlyScalar::U32 => 4,
            PlyScalar::F64 => 8,
        }
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            PlyScalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyScalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            PlyScalar::U8 => bytes[0] as f64,
            PlyScalar::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyScalar::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        }
    }
}

fn read_ply(path: &Path) -> Result<Vec<Point3>> {
    let bytes = fs::read(path)?;
    // Header is ascii lines up to and including "end_header".
    let mut offset = 0usize;
    let mut lines = Vec::new();
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(path, "missing end_header"))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| parse_err(path, format!("non-ascii header at byte {offset}")))?
            .trim_end_matches('\r')
            .to_string();
        offset += end + 1;
        let done = line == "end_header";
        lines.push(line);
        if done {
            break;
        }
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(parse_err(path, "missing ply magic"));
    }
    let mut encoding = None;
    let mut vertex_count = None;
    let mut properties: Vec<(PlyScalar, String)> = Vec::new();
    let mut in_vertex_element = false;
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", "ascii", _] => encoding = Some(PlyEncoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(PlyEncoding::BinaryLe),
            ["format", other, _] => {
                return Err(parse_err(path, format!("unsupported format {other}")))
            }
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse::<usize>()
                        .map_err(|_| parse_err(path, "bad vertex count"))?,
                );
                in_vertex_element = true;
            }
            ["element", ..] => in_vertex_element = false,
            ["property", ty, name] if in_vertex_element => {
                let scalar = PlyScalar::parse(ty)
                    .ok_or_else(|| parse_err(path, format!("unsupported property type {ty}")))?;
                properties.push((scalar, name.to_string()));
            }
            _ => {}
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(path, "missing format line"))?;
    let count = vertex_count.ok_or_else(|| parse_err(path, "missing vertex element"))?;
    let find = |name: &str| properties.iter().position(|(_, n)| n == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(parse_err(path, "vertex element lacks x/y/z properties")),
    };
    let mut points = Vec::with_capacity(count);
    match encoding {
        PlyEncoding::Ascii => {
            let body = std::str::from_utf8(&bytes[offset..])
                .map_err(|_| parse_err(path, "non-utf8 ascii body"))?;
            for (ln, line) in body.lines().take(count).enumerate() {
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(path, format!("bad float on vertex line {ln}")))?;
                if vals.len() < properties.len() {
                    return Err(parse_err(path, format!("short vertex line {ln}")));
                }
                let p = Point3::new(vals[ix], vals[iy], vals[iz]);
                if p.x.is_finite() && p.y.is_finite() && p.z.is_finite() {
                    points.push(p);
                }
            }
            if points.capacity() < count && body.lines().count() < count {
                return Err(parse_err(path, "fewer vertex lines than declared"));
            }
        }
        PlyEncoding::BinaryLe => {
            let stride: usize = properties.iter().map(|(s, _)| s.size()).sum();
            let offsets: Vec<usize> = properties
                .iter()
                .scan(0usize, |acc, (s, _)| {
                    let o = *acc;
                    *acc += s.size();
                    Some(o)
                })
                .collect();
            if bytes.len() < offset + stride * count {
                return Err(parse_err(
                    path,
                    format!("truncated payload at byte offset {}", bytes.len()),
                ));
            }
            for k in 0..count {
                let rec = &bytes[offset + k * stride..offset + (k + 1) * stride];
                let x = properties[ix].0.read_le(&rec[offsets[ix]..]);
                let y = properties[iy].0.read_le(&rec[offsets[iy]..]);
                let z = properties[iz].0.read_le(&rec[offsets[iz]..]);
                if x.is_finite() && y.is_finite() && z.is_finite() {
                    points.push(Point3::new(x, y, z));
                }
            }
        }
    }
    Ok(points)
}

/// Writes a binary little-endian PLY with float x/y/z and an optional uchar
/// `label` property.
pub fn write_ply(path: &Path, points: &[Point3], labels: Option<&[u8]>) -> Result<()> {
    if let Some(l) = labels {
        assert_eq!(l.len(), points.len());
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        points.len()
    )?;
    if labels.is_some() {
        write!(w, "property uchar label\n")?;
    }
    write!(w, "end_header\n")?;
    for (i, p) in points.iter().enumerate() {
        w.write_all(&(p.x as f32).to_le_bytes())?;
        w.write_all(&(p.y as f32).to_le_bytes())?;
        w.write_all(&(p.z as f32).to_le_bytes())?;
        if let Some(l) = labels {
            w.write_all(&[l[i]])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rotation matrix to quaternion `(qx, qy, qz, qw)`, sign-canonical: `qw > 0`,
/// or when `qw == 0` the first nonzero of `(qx, qy, qz)` is positive.
pub fn rotation_to_quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let trace = r.trace();
    let (qw, qx, qy, qz);
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        qw = 0.25 * s;
        qx = (r[(2, 1)] - r[(1, 2)]) / s;
        qy = (r[(0, 2)] - r[(2, 0)]) / s;
        qz = (r[(1, 0)] - r[(0, 1)]) / s;
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        qw = (r[(2, 1)] - r[(1, 2)]) / s;
        qx = 0.25 * s;
        qy = (r[(0, 1)] + r[(1, 0)]) / s;
        qz = (r[(0, 2)] + r[(2, 0)]) / s;
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        qw = (r[(0, 2)] - r[(2, 0)]) / s;
        qx = (r[(0, 1)] + r[(1, 0)]) / s;
        qy = 0.25 * s;
        qz = (r[(1, 2)] + r[(2, 1)]) / s;
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        qw = (r[(1, 0)] - r[(0, 1)]) / s;
        qx = (r[(0, 2)] + r[(2, 0)]) / s;
        qy = (r[(1, 2)] + r[(2, 1)]) / s;
        qz = 0.25 * s;
    }
    let norm = (qw * qw + qx * qx + qy * qy + qz * qz).sqrt();
    let mut q = [qx / norm, qy / norm, qz / norm, qw / norm];
    let flip = if q[3] < 0.0 {
        true
    } else if q[3] == 0.0 {
        q.iter().take(3).find(|&&v| v != 0.0).map_or(false, |&v| v < 0.0)
    } else {
        false
    };
    if flip {
        for v in &mut q {
            *v = -*v;
        }
    }
    // Normalize -0.0 so canonical forms compare and print identically.
    for v in &mut q {
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    q
}

pub fn quaternion_to_rotation(q: &[f64; 4]) -> Matrix3<f64> {
    let [x, y, z, w] = *q;
    let n = (x * x + y * y + z * z + w * w).sqrt();
    let (x, y, z, w) = (x / n, y / n, z / n, w / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// One line per pose: `timestamp tx ty tz qx qy qz qw`. The timestamp keeps
/// nine decimals; pose fields use the shortest round-trip representation.
pub fn write_trajectory_tum(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (t, pose) in &traj.entries {
        let q = rotation_to_quaternion(&pose.rotation);
        let tr = pose.translation;
        writeln!(
            out,
            "{t:.9} {} {} {} {} {} {} {}",
            tr.x, tr.y, tr.z, q[0], q[1], q[2], q[3]
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory_tum(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut traj = Trajectory::default();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, format!("bad float on line {}", ln + 1)))?;
        if vals.len() != 8 {
            return Err(parse_err(
                path,
                format!("expected 8 fields on line {}, got {}", ln + 1, vals.len()),
            ));
        }
        let pose = Pose::new(
            quaternion_to_rotation(&[vals[4], vals[5], vals[6], vals[7]]),
            Vector3::new(vals[1], vals[2], vals[3]),
        );
        traj.push(vals[0], pose)
            .map_err(|_| parse_err(path, format!("non-monotone timestamp on line {}", ln + 1)))?;
    }
    Ok(traj)
}

fn read_trajectory_kitti(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut traj = Trajectory::default();
    let mut index = 0usize;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, format!("bad float on line {}", ln + 1)))?;
        if vals.len() != 12 {
            return Err(parse_err(
                path,
                format!("expected 12 fields on line {}, got {}", ln + 1, vals.len()),
            ));
        }
        let r = Matrix3::new(
            vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
        );
        let t = Vector3::new(vals[3], vals[7], vals[11]);
        traj.push(index as f64 * 0.1, Pose::new(r, t)).unwrap();
        index += 1;
    }
    Ok(traj)
}

pub fn read_groundtruth(path: &Path, format: GroundTruthFormat) -> Result<Trajectory> {
    match format {
        GroundTruthFormat::Tum => read_trajectory_tum(path),
        GroundTruthFormat::Kitti => read_trajectory_kitti(path),
    }
}
