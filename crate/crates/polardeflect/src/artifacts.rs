//! On-disk layout of simulation and reconstruction directories.

use std::fs;
use std::path::Path;

use polardeflect_core::codec::FrameLabel;
use polardeflect_core::polarization::PolarizationStack;
use polardeflect_core::reconstruct::{FusionResult, FusionSummary, PixelStatus};
use polardeflect_core::simulator::GroundTruth;
use polardeflect_core::{DopModel, Raster, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::SceneManifest;
use crate::pfm::{self, Pfm};
use crate::pipeline::{Decoded, FrameRole, Mode, RenderedFrame, Solution};
use crate::ply::{self, OrientedPoint};
use crate::record::Staging;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_FILE: &str = "frames.json";
pub const SOLUTION_FILE: &str = "solution.json";
pub const CHANNELS: [&str; 4] = ["i0", "i45", "i90", "i135"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub role: FrameRole,
    pub label: FrameLabel,
    /// One greyscale PFM per polarizer channel, 0°, 45°, 90°, 135°.
    pub files: Vec<String>,
}

fn nan_or<T>(v: Option<T>, f: impl Fn(T) -> f64) -> f64 {
    v.map_or(f64::NAN, f)
}

fn vec_pfm(r: &Raster<Option<Vec3>>) -> Vec<u8> {
    Pfm::rgb(&r.map(|n| n.map_or([f64::NAN; 3], |n| n.to_array()))).encode()
}

fn read_grey_rel(dir: &Path, rel: &str) -> Result<Raster<f64>> {
    pfm::read_grey(&dir.join(rel))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Error::data(format!("{}: at `{at}`: {}", path.display(), e.into_inner()))
    })
}

/// Required inputs that are absent from `dir`, by name.
pub fn missing(dir: &Path, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| !dir.join(n).exists())
        .map(|n| n.to_string())
        .collect()
}

pub fn require(dir: &Path, names: &[&str]) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::data(format!("input directory {} does not exist", dir.display())));
    }
    let m = missing(dir, names);
    if m.is_empty() {
        Ok(())
    } else {
        Err(Error::data(format!("{} is missing: {}", dir.display(), m.join(", "))))
    }
}

pub fn write_frames(st: &mut Staging, frames: &[RenderedFrame]) -> Result<()> {
    let mut entries = Vec::with_capacity(frames.len());
    for (index, f) in frames.iter().enumerate() {
        let mut files = Vec::with_capacity(4);
        for (name, ch) in CHANNELS.iter().zip(f.stack.channels()) {
            let rel = format!("frames/f{index:03}_{name}.pfm");
            st.write(&rel, &Pfm::grey(ch).encode())?;
            files.push(rel);
        }
        entries.push(FrameEntry {
            index,
            role: f.role,
            label: f.label,
            files,
        });
    }
    st.write_json(FRAMES_FILE, &entries)
}

pub fn load_frames(dir: &Path) -> Result<Vec<RenderedFrame>> {
    require(dir, &[FRAMES_FILE])?;
    let entries: Vec<FrameEntry> = read_json(&dir.join(FRAMES_FILE))?;
    let absent: Vec<&str> = entries
        .iter()
        .flat_map(|e| e.files.iter())
        .filter(|f| !dir.join(f).exists())
        .map(String::as_str)
        .collect();
    if !absent.is_empty() {
        return Err(Error::data(format!(
            "{} is missing: {}",
            dir.display(),
            absent.join(", ")
        )));
    }
    entries
        .iter()
        .map(|e| {
            let [a, b, c, d] = <[String; 4]>::try_from(e.files.clone())
                .map_err(|_| Error::data(format!("frame {} does not list four channels", e.index)))?;
            let stack = PolarizationStack::new(
                read_grey_rel(dir, &a)?,
                read_grey_rel(dir, &b)?,
                read_grey_rel(dir, &c)?,
                read_grey_rel(dir, &d)?,
            )
            .map_err(|err| Error::data(format!("frame {}: {err}", e.index)))?;
            Ok(RenderedFrame {
                role: e.role,
                label: e.label,
                stack,
            })
        })
        .collect()
}

pub const TRUTH_FILES: [&str; 4] = [
    "truth/normals.pfm",
    "truth/depth.pfm",
    "truth/display.pfm",
    "truth/points.ply",
];

pub fn write_truth(st: &mut Staging, truth: &GroundTruth) -> Result<()> {
    let s = &truth.samples;
    st.write(TRUTH_FILES[0], &vec_pfm(&truth.normals()))?;
    st.write(TRUTH_FILES[1], &Pfm::grey(&s.map(|t| nan_or(*t, |t| t.s))).encode())?;
    let disp = s.map(|t| {
        t.map_or([f64::NAN; 3], |t| {
            [t.display_ij[0], t.display_ij[1], t.theta.to_degrees()]
        })
    });
    st.write(TRUTH_FILES[2], &Pfm::rgb(&disp).encode())?;
    let pts: Vec<OrientedPoint> = s
        .as_slice()
        .iter()
        .flatten()
        .map(|t| OrientedPoint {
            position: t.point,
            normal: t.normal,
        })
        .collect();
    st.write(TRUTH_FILES[3], ply::encode(&pts).as_bytes())
}

/// Ground-truth normals and ray depths as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthMaps {
    pub normals: Raster<Option<Vec3>>,
    pub depth: Raster<Option<f64>>,
}

impl TruthMaps {
    pub fn from_truth(truth: &GroundTruth) -> Self {
        Self {
            normals: truth.normals(),
            depth: truth.samples.map(|t| t.map(|t| t.s)),
        }
    }
}

fn unit_from_rgb(c: [f64; 3]) -> Option<Vec3> {
    if c.iter().any(|v| v.is_nan()) {
        return None;
    }
    Vec3::new(c[0], c[1], c[2]).normalize()
}

fn read_normals(path: &Path) -> Result<Raster<Option<Vec3>>> {
    Ok(pfm::read_rgb(path)?.map(|c| unit_from_rgb(*c)))
}

fn read_depth(path: &Path) -> Result<Raster<Option<f64>>> {
    Ok(pfm::read_grey(path)?.map(|v| (!v.is_nan()).then_some(*v)))
}

pub fn load_truth(dir: &Path) -> Result<TruthMaps> {
    require(dir, &TRUTH_FILES[..2])?;
    let normals = read_normals(&dir.join(TRUTH_FILES[0]))?;
    let depth = read_depth(&dir.join(TRUTH_FILES[1]))?;
    if !normals.same_dims(&depth) {
        return Err(Error::data("truth normal and depth maps differ in size"));
    }
    Ok(TruthMaps { normals, depth })
}

pub fn write_manifest(st: &mut Staging, manifest: &SceneManifest) -> Result<()> {
    st.write(MANIFEST_FILE, manifest.to_json().as_bytes())
}

pub fn load_manifest(dir: &Path) -> Result<SceneManifest> {
    require(dir, &[MANIFEST_FILE])?;
    SceneManifest::load(&dir.join(MANIFEST_FILE))
}

/// Summary written next to the solution rasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionInfo {
    pub scene: String,
    pub mode: Mode,
    pub model: DopModel,
    pub strict_dop: bool,
    pub ok_fraction: f64,
    pub summary: FusionSummary,
    pub qualitative: bool,
}

pub const SOLUTION_FILES: [&str; 3] = ["normals.pfm", "depth.pfm", "points.ply"];

fn status_code(s: PixelStatus) -> f64 {
    PixelStatus::ALL.iter().position(|&p| p == s).unwrap_or(0) as f64
}

/// Rasters: `normals` and `depth` (`Ok` pixels only, NaN elsewhere),
/// `status` (index into ok, no-root, both-feasible, saturated-dop,
/// invalid-decode, degenerate-geometry; NaN outside the mask), `theta`
/// (degrees), `dop`, `aolp` (degrees) and `correspondence` (display `i`,
/// `j`, validity).
pub fn write_solution(st: &mut Staging, info: &SolutionInfo, fusion: &FusionResult, decoded: &Decoded) -> Result<()> {
    let sol = Solution::from_fusion(fusion);
    st.write(SOLUTION_FILES[0], &vec_pfm(&sol.normals))?;
    st.write(
        SOLUTION_FILES[1],
        &Pfm::grey(&sol.depth.map(|d| nan_or(*d, |d| d))).encode(),
    )?;
    let ok = fusion.ok_surface();
    let pts: Vec<OrientedPoint> = ok
        .as_slice()
        .iter()
        .flatten()
        .map(|p| OrientedPoint {
            position: p.point,
            normal: p.normal,
        })
        .collect();
    st.write(SOLUTION_FILES[2], ply::encode(&pts).as_bytes())?;
    let status = fusion.solutions.map(|s| nan_or(*s, |s| status_code(s.status)));
    st.write("status.pfm", &Pfm::grey(&status).encode())?;
    st.write(
        "theta.pfm",
        &Pfm::grey(&ok.map(|p| nan_or(*p, |p| p.theta.to_degrees()))).encode(),
    )?;
    let dop = decoded.stokes.map(|s| if s.valid { s.dop } else { f64::NAN });
    st.write("dop.pfm", &Pfm::grey(&dop).encode())?;
    let aolp = decoded
        .stokes
        .map(|s| if s.valid { s.aolp.to_degrees() } else { f64::NAN });
    st.write("aolp.pfm", &Pfm::grey(&aolp).encode())?;
    let c = &decoded.correspondence;
    let corr = Raster::from_fn(c.coords.width(), c.coords.height(), |x, y| {
        let [i, j] = *c.coords.get(x, y);
        [i, j, if *c.valid.get(x, y) { 1.0 } else { 0.0 }]
    });
    st.write("correspondence.pfm", &Pfm::rgb(&corr).encode())?;
    st.write_json(SOLUTION_FILE, info)
}

pub fn load_solution(dir: &Path) -> Result<(SolutionInfo, Solution)> {
    let mut names = vec![SOLUTION_FILE];
    names.extend(SOLUTION_FILES);
    require(dir, &names)?;
    let info: SolutionInfo = read_json(&dir.join(SOLUTION_FILE))?;
    let normals = read_normals(&dir.join(SOLUTION_FILES[0]))?;
    let depth = read_depth(&dir.join(SOLUTION_FILES[1]))?;
    let points = ply::read(&dir.join(SOLUTION_FILES[2]))?
        .into_iter()
        .map(|p| p.position)
        .collect();
    if !normals.same_dims(&depth) {
        return Err(Error::data("solution normal and depth maps differ in size"));
    }
    Ok((
        info.clone(),
        Solution {
            normals,
            depth,
            points,
            summary: info.summary,
        },
    ))
}
