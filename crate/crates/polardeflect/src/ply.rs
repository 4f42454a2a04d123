//! ASCII PLY point clouds with per-vertex normals.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use polardeflect_core::Vec3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedPoint {
    pub position: Vec3,
    pub normal: Vec3,
}

/// Shortest decimal forms that parse back to the same `f64`.
pub fn encode(points: &[OrientedPoint]) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", points.len());
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        let _ = writeln!(s, "property double {p}");
    }
    s.push_str("end_header\n");
    for p in points {
        let (a, n) = (p.position, p.normal);
        let _ = writeln!(s, "{} {} {} {} {} {}", a.x, a.y, a.z, n.x, n.y, n.z);
    }
    s
}

pub fn decode(text: &str) -> std::result::Result<Vec<OrientedPoint>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err("missing ply magic".into());
    }
    let mut count = None;
    let mut props = Vec::new();
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(format!("unsupported format {other}")),
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|e| e.to_string())?),
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => break,
            ["comment", ..] | [] => {}
            _ => return Err(format!("unexpected header line {line:?}")),
        }
    }
    let count = count.ok_or("no vertex element")?;
    let idx = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or(format!("missing property {name}"))
    };
    let cols = [idx("x")?, idx("y")?, idx("z")?, idx("nx")?, idx("ny")?, idx("nz")?];
    let mut out = Vec::with_capacity(count);
    for line in lines.take(count) {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<_, _>>()?;
        if vals.len() != props.len() {
            return Err(format!(
                "vertex line has {} values, expected {}",
                vals.len(),
                props.len()
            ));
        }
        let v = cols.map(|c| vals[c]);
        out.push(OrientedPoint {
            position: Vec3::new(v[0], v[1], v[2]),
            normal: Vec3::new(v[3], v[4], v[5]),
        });
    }
    if out.len() != count {
        return Err(format!("expected {count} vertices, found {}", out.len()));
    }
    Ok(out)
}

pub fn write(path: &Path, points: &[OrientedPoint]) -> Result<()> {
    fs::write(path, encode(points)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<OrientedPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text).map_err(|m| Error::Data(format!("{}: {m}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud_has_valid_header() {
        let s = encode(&[]);
        assert!(s.contains("element vertex 0\n"));
        assert!(s.ends_with("end_header\n"));
        assert!(decode(&s).unwrap().is_empty());
    }

    #[test]
    fn bit_exact_round_trip() {
        let pts: Vec<OrientedPoint> = (0..3)
            .map(|k| {
                let a = 0.1 + k as f64 / 3.0;
                OrientedPoint {
                    position: Vec3::new(a * 1e-7, -a * 12345.678, 1.0 / 3.0 + a),
                    normal: Vec3::new(a.cos(), a.sin(), 0.0),
                }
            })
            .collect();
        let back = decode(&encode(&pts)).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in pts.iter().zip(&back) {
            assert_eq!(
                a.position.to_array().map(f64::to_bits),
                b.position.to_array().map(f64::to_bits)
            );
            assert_eq!(
                a.normal.to_array().map(f64::to_bits),
                b.normal.to_array().map(f64::to_bits)
            );
        }
    }
}
