//! File formats: ASCII PLY point clouds and TUM-style trajectories.
//!
//! Both writers are byte-deterministic and print every value with 17
//! significant digits, so a write → read round trip reproduces each f64
//! exactly. Readers report malformed input with 1-based line numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, UnitVector3};
use crate::trajectory::Trajectory;

/// Tolerance for unit-norm checks on quaternions and normals read from
/// files; values inside it are renormalized on load.
const UNIT_NORM_TOL: f64 = 1e-6;

/// 17 significant digits: lossless for f64.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("non-numeric {what}: '{token}'")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(line, format!("non-finite {what}: '{token}'")))
            }
        })
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cloud_to_string(cloud)).map_err(Error::Io)
}

pub fn cloud_to_string(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.has_normals() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    match cloud.normals() {
        Some(normals) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {}",
                    fmt_f64(p.x),
                    fmt_f64(p.y),
                    fmt_f64(p.z),
                    fmt_f64(n.x()),
                    fmt_f64(n.y()),
                    fmt_f64(n.z())
                );
            }
        }
        None => {
            for p in cloud.points() {
                let _ = writeln!(out, "{} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z));
            }
        }
    }
    out
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let text = fs::read_to_string(&path).map_err(Error::Io)?;
    cloud_from_string(&text)
}

pub fn cloud_from_string(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();

    let mut next_meaningful = |skip_comments: bool| -> Option<(usize, &str)> {
        for (idx, raw) in lines.by_ref() {
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if skip_comments && trimmed.starts_with("comment") {
                continue;
            }
            return Some((idx + 1, trimmed));
        }
        None
    };

    let (line, magic) = next_meaningful(true).ok_or(Error::parse(1, "empty file"))?;
    if magic != "ply" {
        return Err(Error::parse(line, "expected 'ply' magic"));
    }
    let (line, format) = next_meaningful(true).ok_or(Error::parse(line, "truncated header"))?;
    if format != "format ascii 1.0" {
        return Err(Error::parse(line, "expected 'format ascii 1.0'"));
    }
    let (line, element) = next_meaningful(true).ok_or(Error::parse(line, "truncated header"))?;
    let count: usize = element
        .strip_prefix("element vertex ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or(Error::parse(line, "expected 'element vertex <count>'"))?;

    let mut properties = Vec::new();
    let mut end_line = line;
    loop {
        let (line, entry) =
            next_meaningful(true).ok_or(Error::parse(end_line, "header missing end_header"))?;
        end_line = line;
        if entry == "end_header" {
            break;
        }
        let mut parts = entry.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("property"), Some(kind), Some(name))
                if kind == "double" || kind == "float" =>
            {
                properties.push(name.to_string());
            }
            (Some("element"), ..) => {
                return Err(Error::parse(line, "only a vertex element is supported"));
            }
            _ => return Err(Error::parse(line, format!("unsupported header entry '{entry}'"))),
        }
    }

    let with_normals = match properties.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "nx", "ny", "nz"] => true,
        _ => {
            return Err(Error::parse(
                end_line,
                "vertex properties must be x y z or x y z nx ny nz",
            ))
        }
    };
    let arity = if with_normals { 6 } else { 3 };

    let mut points = Vec::with_capacity(count);
    let mut normals = if with_normals { Some(Vec::with_capacity(count)) } else { None };
    for _ in 0..count {
        let (line, row) = next_meaningful(false)
            .ok_or(Error::parse(end_line, format!("expected {count} vertex rows")))?;
        let tokens: Vec<&str> = row.split_whitespace().collect();
        if tokens.len() != arity {
            return Err(Error::parse(
                line,
                format!("expected {arity} values per vertex, got {}", tokens.len()),
            ));
        }
        let x = parse_f64(tokens[0], line, "coordinate")?;
        let y = parse_f64(tokens[1], line, "coordinate")?;
        let z = parse_f64(tokens[2], line, "coordinate")?;
        points.push(Point3::new(x, y, z));
        if let Some(normals) = normals.as_mut() {
            let nx = parse_f64(tokens[3], line, "normal component")?;
            let ny = parse_f64(tokens[4], line, "normal component")?;
            let nz = parse_f64(tokens[5], line, "normal component")?;
            let norm = (nx * nx + ny * ny + nz * nz).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::parse(line, format!("normal has norm {norm}, expected 1")));
            }
            normals.push(
                UnitVector3::new(nx, ny, nz)
                    .map_err(|_| Error::parse(line, "zero-length normal"))?,
            );
        }
    }
    if let Some((line, _)) = next_meaningful(false) {
        return Err(Error::parse(line, "trailing content after vertex rows"));
    }

    match normals {
        Some(normals) => PointCloud::with_normals(points, normals, ""),
        None => Ok(PointCloud::new(points, "")),
    }
}

pub fn write_trajectory(trajectory: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, trajectory_to_string(trajectory)).map_err(Error::Io)
}

/// One pose per line: `stamp tx ty tz qx qy qz qw`.
pub fn trajectory_to_string(trajectory: &Trajectory) -> String {
    let mut out = String::from("# stamp tx ty tz qx qy qz qw\n");
    for entry in trajectory.entries() {
        let t = entry.pose.translation();
        let q = entry.pose.rotation().quaternion();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            fmt_f64(entry.stamp),
            fmt_f64(t.x),
            fmt_f64(t.y),
            fmt_f64(t.z),
            fmt_f64(q.i),
            fmt_f64(q.j),
            fmt_f64(q.k),
            fmt_f64(q.w)
        );
    }
    out
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let text = fs::read_to_string(&path).map_err(Error::Io)?;
    trajectory_from_string(&text)
}

pub fn trajectory_from_string(text: &str) -> Result<Trajectory> {
    let mut trajectory = Trajectory::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 8 {
            return Err(Error::parse(
                line,
                format!("expected 8 fields (stamp tx ty tz qx qy qz qw), got {}", tokens.len()),
            ));
        }
        let stamp = parse_f64(tokens[0], line, "timestamp")?;
        let tx = parse_f64(tokens[1], line, "translation")?;
        let ty = parse_f64(tokens[2], line, "translation")?;
        let tz = parse_f64(tokens[3], line, "translation")?;
        let qx = parse_f64(tokens[4], line, "quaternion component")?;
        let qy = parse_f64(tokens[5], line, "quaternion component")?;
        let qz = parse_f64(tokens[6], line, "quaternion component")?;
        let qw = parse_f64(tokens[7], line, "quaternion component")?;
        let pose =
            RigidTransform::from_quaternion_coeffs(qw, qx, qy, qz, Vector3::new(tx, ty, tz), UNIT_NORM_TOL)
                .map_err(|e| Error::parse(line, e.to_string()))?;
        trajectory
            .push(stamp, pose)
            .map_err(|e| Error::parse(line, e.to_string()))?;
    }
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(trajectory)
}
