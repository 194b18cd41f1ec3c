//! ASCII PLY / XYZ point files and the 4-line pose format.
//!
//! PLY subset, one token group per line:
//!
//! ```text
//! ply
//! format ascii 1.0
//! element vertex N
//! property float x        (float or double; x, y, z in this order)
//! property float y
//! property float z
//! end_header
//! <N lines of three numbers>
//! ```
//!
//! `comment` lines are allowed anywhere in the header. XYZ files hold one
//! point per line as three whitespace-separated numbers; blank lines are
//! skipped. Numbers are written with nine significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use igasa_core::{nearest_rotation, Cloud, Transform};
use nalgebra::{Matrix3, Vector3};

use crate::error::{BenchError, Result};
use crate::fmt::sig9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    Xyz,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "ply" => Ok(Self::PlyAscii),
            Some(e) if e == "xyz" || e == "txt" => Ok(Self::Xyz),
            _ => Err(BenchError::UnknownFormat(path.to_path_buf())),
        }
    }
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let (i, l) = self.inner.next()?;
        self.last = i + 1;
        Some((i + 1, l.trim()))
    }

    /// Next header line, skipping comments.
    fn header(&mut self) -> Option<(usize, &'a str)> {
        loop {
            match self.next() {
                Some((_, l)) if l.starts_with("comment") => continue,
                other => return other,
            }
        }
    }

    fn parse_err(&self, line: usize, message: impl Into<String>) -> BenchError {
        BenchError::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

fn parse_point(path: &Path, line_no: usize, line: &str) -> Result<Vector3<f64>> {
    let parse_err = |message: String| BenchError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let mut it = line.split_whitespace();
    let mut xyz = [0.0f64; 3];
    for v in &mut xyz {
        let tok = it.next().ok_or_else(|| parse_err("expected three coordinates".into()))?;
        *v = tok.parse().map_err(|_| parse_err(format!("not a number: {tok:?}")))?;
    }
    if it.next().is_some() {
        return Err(parse_err("expected exactly three coordinates".into()));
    }
    if !xyz.iter().all(|v| v.is_finite()) {
        return Err(BenchError::InvalidData {
            path: path.to_path_buf(),
            line: line_no,
            message: "non-finite coordinate".into(),
        });
    }
    Ok(Vector3::new(xyz[0], xyz[1], xyz[2]))
}

fn parse_ply(path: &Path, text: &str) -> Result<Vec<Vector3<f64>>> {
    let eof = text.lines().count() + 1;
    let mut lines = Lines::new(path, text);
    match lines.header() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(lines_err(path, n, "missing 'ply' magic")),
        None => return Err(lines_err(path, 1, "empty file")),
    }
    match lines.header() {
        Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == ["format", "ascii", "1.0"] => {}
        Some((n, _)) => return Err(lines_err(path, n, "expected 'format ascii 1.0'")),
        None => return Err(lines_err(path, eof, "truncated header")),
    }
    let count = match lines.header() {
        Some((n, l)) => match l.split_whitespace().collect::<Vec<_>>()[..] {
            ["element", "vertex", c] => c
                .parse::<usize>()
                .map_err(|_| lines_err(path, n, format!("bad vertex count {c:?}")))?,
            _ => return Err(lines_err(path, n, "expected 'element vertex N'")),
        },
        None => return Err(lines_err(path, eof, "truncated header")),
    };
    for axis in ["x", "y", "z"] {
        match lines.header() {
            Some((n, l)) => match l.split_whitespace().collect::<Vec<_>>()[..] {
                ["property", "float" | "double" | "float32" | "float64", name] if name == axis => {}
                _ => return Err(lines_err(path, n, format!("expected 'property float {axis}'"))),
            },
            None => return Err(lines_err(path, eof, "truncated header")),
        }
    }
    match lines.header() {
        Some((_, "end_header")) => {}
        Some((n, _)) => return Err(lines_err(path, n, "expected 'end_header' (only x, y, z vertex properties are supported)")),
        None => return Err(lines_err(path, eof, "truncated header")),
    }
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        match lines.next() {
            Some((_, "")) => continue,
            Some((n, l)) => points.push(parse_point(path, n, l)?),
            None => {
                return Err(lines.parse_err(
                    lines.last + 1,
                    format!("expected {count} vertices, found {}", points.len()),
                ))
            }
        }
    }
    while let Some((n, l)) = lines.next() {
        if !l.is_empty() {
            return Err(lines.parse_err(n, "unexpected data after vertex list"));
        }
    }
    Ok(points)
}

fn lines_err(path: &Path, line: usize, message: impl Into<String>) -> BenchError {
    BenchError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_xyz(path: &Path, text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut points = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if !l.is_empty() {
            points.push(parse_point(path, i + 1, l)?);
        }
    }
    if points.is_empty() {
        return Err(lines_err(path, 1, "no points"));
    }
    Ok(points)
}

pub fn parse_cloud(path: &Path, text: &str, format: CloudFormat) -> Result<Cloud> {
    let points = match format {
        CloudFormat::PlyAscii => parse_ply(path, text)?,
        CloudFormat::Xyz => parse_xyz(path, text)?,
    };
    Ok(Cloud::new(points)?)
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<Cloud> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_cloud(path, &text, format)
}

/// Loads with the format implied by the extension.
pub fn load_cloud_auto(path: &Path) -> Result<Cloud> {
    load_cloud(path, CloudFormat::from_path(path)?)
}

pub fn render_cloud(cloud: &Cloud, format: CloudFormat) -> String {
    let mut out = String::new();
    if format == CloudFormat::PlyAscii {
        out.push_str("ply\nformat ascii 1.0\n");
        out.push_str(&format!("element vertex {}\n", cloud.len()));
        out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    }
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", sig9(p.x), sig9(p.y), sig9(p.z)));
    }
    out
}

pub fn save_cloud(cloud: &Cloud, path: &Path, format: CloudFormat) -> Result<()> {
    write_file(path, &render_cloud(cloud, format))
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

/// Three rotation rows followed by the translation, space-separated.
pub fn render_transform(t: &Transform) -> String {
    let r = t.rotation();
    let mut out = String::new();
    for i in 0..3 {
        out.push_str(&format!("{} {} {}\n", sig9(r[(i, 0)]), sig9(r[(i, 1)]), sig9(r[(i, 2)])));
    }
    let v = t.translation();
    out.push_str(&format!("{} {} {}\n", sig9(v.x), sig9(v.y), sig9(v.z)));
    out
}

/// Rotations read from text are snapped to the nearest proper rotation when
/// they are within `1e-6` of orthonormal (nine-digit rounding leaves ~1e-9).
pub fn parse_transform(path: &Path, text: &str) -> Result<Transform> {
    let rows: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if rows.len() != 4 {
        return Err(lines_err(path, rows.last().map_or(1, |r| r.0), format!("expected 4 lines, found {}", rows.len())));
    }
    let v: Vec<Vector3<f64>> = rows
        .iter()
        .map(|&(n, l)| parse_point(path, n, l))
        .collect::<Result<_>>()?;
    let m = Matrix3::from_rows(&[v[0].transpose(), v[1].transpose(), v[2].transpose()]);
    let residual = (m.transpose() * m - Matrix3::identity()).norm();
    if !(residual <= 1e-6 && m.determinant() > 0.0) {
        return Err(BenchError::InvalidData {
            path: path.to_path_buf(),
            line: rows[0].0,
            message: format!("rotation rows are not a proper rotation (‖RᵀR − I‖ = {residual:e})"),
        });
    }
    Ok(Transform::new(nearest_rotation(&m), v[3])?)
}

pub fn load_transform(path: &Path) -> Result<Transform> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_transform(path, &text)
}

pub fn save_transform(t: &Transform, path: &Path) -> Result<()> {
    write_file(path, &render_transform(t))
}

pub fn ensure_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|e| BenchError::io(path, e))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use igasa_core::SeededStream;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn empty_files_are_parse_errors() {
        for f in [CloudFormat::PlyAscii, CloudFormat::Xyz] {
            assert!(matches!(parse_cloud(p(), "", f), Err(BenchError::Parse { line: 1, .. })));
        }
    }

    #[test]
    fn hand_written_xyz() {
        let c = parse_cloud(p(), "0 0 0\n1.5 -2 3e-1\n\n  4 5 6  \n", CloudFormat::Xyz).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(*c.point(1), Vector3::new(1.5, -2.0, 0.3));
        assert_eq!(*c.point(2), Vector3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn hand_written_ply() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float x\nproperty float y\nproperty double z\nend_header\n1 2 3\n-1 -2 -3\n";
        let c = parse_cloud(p(), text, CloudFormat::PlyAscii).unwrap();
        assert_eq!(c.points(), &[Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, -2.0, -3.0)]);
    }

    #[test]
    fn malformed_headers_report_lines() {
        let cases = [
            ("plx\n", 1),
            ("ply\nformat binary_little_endian 1.0\n", 2),
            ("ply\nformat ascii 1.0\nelement face 3\n", 3),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float z\n", 5),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\n", 7),
            ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n", 9),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2\n", 8),
        ];
        for (text, line) in cases {
            match parse_cloud(p(), text, CloudFormat::PlyAscii) {
                Err(BenchError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn non_finite_is_invalid_data() {
        let r = parse_cloud(p(), "0 0 0\n1 nan 2\n", CloudFormat::Xyz);
        assert!(matches!(r, Err(BenchError::InvalidData { line: 2, .. })));
        let r = parse_cloud(p(), "inf 0 0\n", CloudFormat::Xyz);
        assert!(matches!(r, Err(BenchError::InvalidData { line: 1, .. })));
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = SeededStream::new(8);
        let cloud = Cloud::new(
            (0..1000)
                .map(|_| Vector3::new(rng.normal(), rng.normal(), rng.normal()))
                .collect(),
        )
        .unwrap();
        for f in [CloudFormat::PlyAscii, CloudFormat::Xyz] {
            let back = parse_cloud(p(), &render_cloud(&cloud, f), f).unwrap();
            let delta = cloud
                .points()
                .iter()
                .zip(back.points())
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max);
            assert!(delta <= 1e-8, "{delta}");
        }
    }

    #[test]
    fn transform_round_trip() {
        let t = Transform::from_rotation_vector(Vector3::new(0.3, -1.2, 0.5), Vector3::new(1.0, -2.0, 0.25));
        let back = parse_transform(p(), &render_transform(&t)).unwrap();
        assert!((back.rotation() - t.rotation()).amax() < 1e-8);
        assert!(back.orthogonality_residual() < 1e-12);
        assert!(parse_transform(p(), "1 0 0\n0 1 0\n0 0 1\n").is_err());
        assert!(matches!(
            parse_transform(p(), "1 0 0\n0 1 0\n0 0 -1\n0 0 0\n"),
            Err(BenchError::InvalidData { .. })
        ));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(CloudFormat::from_path(Path::new("a/b.PLY")).unwrap(), CloudFormat::PlyAscii);
        assert_eq!(CloudFormat::from_path(Path::new("a.xyz")).unwrap(), CloudFormat::Xyz);
        assert!(CloudFormat::from_path(Path::new("a.pcd")).is_err());
    }
}
