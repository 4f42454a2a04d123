//! Per-pixel fusion of polarization and deflectometry.
//!
//! A camera ray `O + s·d` and its decoded display point `D` fix every
//! candidate surface point up to the scalar `s`; the incidence angle at such a
//! point is half the angle between `−d` and `D − S`, which falls strictly as
//! `s` grows. The DoP-derived incidence angle therefore pins `s` (and with it
//! the normal) with a one-dimensional root search.

use core::f64::consts::{FRAC_PI_2, PI};

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::codec::CorrespondenceMap;
use crate::geometry::{bisector_normal, DisplayPlane, PinholeCamera, Vec3, WorkingDistance};
use crate::polarization::{DopInverter, SaturationPolicy, StokesEstimate};
use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconstructError {
    #[error("input rasters do not match the camera resolution")]
    DimensionMismatch,
    #[error("display point lies on the camera ray")]
    DegenerateGeometry,
    #[error("invalid fusion configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Branch {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PixelStatus {
    Ok,
    NoRoot,
    BothFeasible,
    SaturatedDop,
    InvalidDecode,
    DegenerateGeometry,
}

impl PixelStatus {
    pub const ALL: [PixelStatus; 6] = [
        PixelStatus::Ok,
        PixelStatus::NoRoot,
        PixelStatus::BothFeasible,
        PixelStatus::SaturatedDop,
        PixelStatus::InvalidDecode,
        PixelStatus::DegenerateGeometry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PixelStatus::Ok => "ok",
            PixelStatus::NoRoot => "no-root",
            PixelStatus::BothFeasible => "both-feasible",
            PixelStatus::SaturatedDop => "saturated-dop",
            PixelStatus::InvalidDecode => "invalid-decode",
            PixelStatus::DegenerateGeometry => "degenerate-geometry",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Resolution of pixels where both incidence candidates give in-range depths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TiePolicy {
    #[default]
    PreferLow,
    PreferHigh,
    /// Leave the pixel without a solution.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionConfig {
    /// Depth bisection tolerance, mm.
    pub tol_s: f64,
    /// DoP inversion tolerance, rad.
    pub tol_theta: f64,
    pub saturation: SaturationPolicy,
    pub tie: TiePolicy,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tol_s: 1e-3,
            tol_theta: 1e-7,
            saturation: SaturationPolicy::Clamp,
            tie: TiePolicy::PreferLow,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), ReconstructError> {
        if !(self.tol_s > 0.0 && self.tol_s.is_finite()) {
            return Err(ReconstructError::InvalidConfig("tol_s must be positive"));
        }
        if !(self.tol_theta > 0.0 && self.tol_theta < 0.1) {
            return Err(ReconstructError::InvalidConfig("tol_theta must lie in (0, 0.1)"));
        }
        Ok(())
    }
}

/// Incidence angle at `O + s·d` for light arriving from `dp`. Total for any
/// `s > 0` with `dp` off the ray.
fn incidence_on_ray(o: Vec3, d: Vec3, dp: Vec3, s: f64) -> f64 {
    let w = dp - (o + d * s);
    let back = -d;
    0.5 * back.cross(w).norm().atan2(back.dot(w))
}

/// Depth `s` on the unit ray `O + s·d` at which a specular reflection from
/// `dp` arrives at incidence `theta`, to within `tol_s`; `None` when the
/// root lies outside `interval` or `theta` is not in `(0, π/2)`.
pub fn solve_depth_for_theta(
    o: Vec3,
    d: Vec3,
    dp: Vec3,
    theta: f64,
    interval: &WorkingDistance,
    tol_s: f64,
) -> Result<Option<f64>, ReconstructError> {
    let rel = dp - o;
    if rel.cross(d).norm() <= 1e-12 * rel.norm().max(1.0) {
        return Err(ReconstructError::DegenerateGeometry);
    }
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return Ok(None);
    }
    let g = |s: f64| incidence_on_ray(o, d, dp, s) - theta;
    let (mut lo, mut hi) = (interval.s_min, interval.s_max);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo < 0.0 || g_hi > 0.0 {
        return Ok(None);
    }
    if g_lo == 0.0 {
        return Ok(Some(lo));
    }
    if g_hi == 0.0 {
        return Ok(Some(hi));
    }
    while hi - lo > tol_s {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Fused solution at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub s: f64,
    /// `s / |OC|` with `C` on the image plane at unit focal distance.
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub theta: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSolution {
    pub status: PixelStatus,
    /// Present for `Ok`, and for flagged pixels that still carry a depth
    /// (saturated or tie-resolved).
    pub surface: Option<SurfacePoint>,
}

impl PixelSolution {
    fn bare(status: PixelStatus) -> Self {
        Self { status, surface: None }
    }
}

/// Everything `fuse_pixel` needs that does not vary per pixel.
#[derive(Debug, Clone, Copy)]
pub struct FusionContext {
    pub origin: Vec3,
    /// World-frame optical axis, for `t`.
    pub axis: Vec3,
    pub inverter: DopInverter,
    pub working: WorkingDistance,
    pub config: FusionConfig,
}

impl FusionContext {
    pub fn new(camera: &PinholeCamera, inverter: DopInverter, working: WorkingDistance, config: FusionConfig) -> Self {
        Self {
            origin: camera.center(),
            axis: camera.principal_axis(),
            inverter,
            working,
            config,
        }
    }
}

/// Fuses one pixel: unit ray `d`, decoded display point (if any) and DoP.
pub fn fuse_pixel(ctx: &FusionContext, d: Vec3, display_point: Option<Vec3>, rho: Option<f64>) -> PixelSolution {
    let (Some(dp), Some(rho)) = (display_point, rho) else {
        return PixelSolution::bare(PixelStatus::InvalidDecode);
    };
    if !rho.is_finite() {
        return PixelSolution::bare(PixelStatus::InvalidDecode);
    }
    let cfg = &ctx.config;
    let cands = ctx.inverter.invert(rho, cfg.tol_theta, cfg.saturation);
    let mut tried = [(Branch::Low, cands.low), (Branch::High, cands.high)];
    if cands.low == cands.high {
        tried[1].1 = None;
    }
    let mut feasible: [Option<SurfacePoint>; 2] = [None, None];
    for (slot, (branch, theta)) in tried.into_iter().enumerate() {
        let Some(theta) = theta else { continue };
        let s = match solve_depth_for_theta(ctx.origin, d, dp, theta, &ctx.working, cfg.tol_s) {
            Ok(Some(s)) => s,
            Ok(None) => continue,
            Err(_) => return PixelSolution::bare(PixelStatus::DegenerateGeometry),
        };
        let point = ctx.origin + d * s;
        let Ok(normal) = bisector_normal(point, ctx.origin, dp) else {
            return PixelSolution::bare(PixelStatus::DegenerateGeometry);
        };
        // The normal lies in the plane through the ray and D for every s.
        debug_assert!(normal.dot((dp - ctx.origin).cross(d)).abs() < 1e-6 * (dp - ctx.origin).norm());
        feasible[slot] = Some(SurfacePoint {
            s,
            t: s * d.dot(ctx.axis),
            point,
            normal,
            theta,
            branch,
        });
    }
    let (status, surface) = match feasible {
        [None, None] => (PixelStatus::NoRoot, None),
        [Some(p), None] | [None, Some(p)] => (PixelStatus::Ok, Some(p)),
        [Some(low), Some(high)] => (
            PixelStatus::BothFeasible,
            match cfg.tie {
                TiePolicy::PreferLow => Some(low),
                TiePolicy::PreferHigh => Some(high),
                TiePolicy::Reject => None,
            },
        ),
    };
    if cands.saturated {
        return PixelSolution {
            status: PixelStatus::SaturatedDop,
            surface,
        };
    }
    PixelSolution { status, surface }
}

/// Per-status pixel counts over the fusion mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionSummary {
    pub masked: usize,
    pub ok: usize,
    pub no_root: usize,
    pub both_feasible: usize,
    pub saturated_dop: usize,
    pub invalid_decode: usize,
    pub degenerate_geometry: usize,
}

impl FusionSummary {
    pub fn count(&self, status: PixelStatus) -> usize {
        match status {
            PixelStatus::Ok => self.ok,
            PixelStatus::NoRoot => self.no_root,
            PixelStatus::BothFeasible => self.both_feasible,
            PixelStatus::SaturatedDop => self.saturated_dop,
            PixelStatus::InvalidDecode => self.invalid_decode,
            PixelStatus::DegenerateGeometry => self.degenerate_geometry,
        }
    }

    pub fn ok_fraction(&self) -> f64 {
        if self.masked == 0 {
            0.0
        } else {
            self.ok as f64 / self.masked as f64
        }
    }

    pub fn from_solutions(solutions: &Raster<Option<PixelSolution>>) -> Self {
        let mut counts = [0usize; 6];
        let mut masked = 0;
        for sol in solutions.as_slice().iter().flatten() {
            masked += 1;
            counts[sol.status.index()] += 1;
        }
        Self {
            masked,
            ok: counts[0],
            no_root: counts[1],
            both_feasible: counts[2],
            saturated_dop: counts[3],
            invalid_decode: counts[4],
            degenerate_geometry: counts[5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    /// `None` outside the fusion mask.
    pub solutions: Raster<Option<PixelSolution>>,
    pub summary: FusionSummary,
}

impl FusionResult {
    pub fn surface(&self) -> Raster<Option<SurfacePoint>> {
        self.solutions.map(|s| s.and_then(|s| s.surface))
    }

    /// Surface points of `Ok` pixels only.
    pub fn ok_surface(&self) -> Raster<Option<SurfacePoint>> {
        self.solutions
            .map(|s| s.and_then(|s| if s.status == PixelStatus::Ok { s.surface } else { None }))
    }
}

/// Fuses pixel `(x, y)` from the map-level inputs. `None` outside the mask,
/// which is every pixel the polarimetric decode marks as lit.
pub fn fuse_map_pixel(
    camera: &PinholeCamera,
    display: &DisplayPlane,
    stokes: &Raster<StokesEstimate>,
    correspondence: &CorrespondenceMap,
    ctx: &FusionContext,
    x: usize,
    y: usize,
) -> Option<PixelSolution> {
    let st = stokes.get(x, y);
    if !st.valid {
        return None;
    }
    let Ok(d) = camera.pixel_to_ray(x as f64, y as f64) else {
        return Some(PixelSolution::bare(PixelStatus::InvalidDecode));
    };
    let dp = correspondence.display_point(x, y, display);
    Some(fuse_pixel(ctx, d, dp, Some(st.dop)))
}

fn check_dims(
    camera: &PinholeCamera,
    stokes: &Raster<StokesEstimate>,
    corr: &CorrespondenceMap,
) -> Result<(), ReconstructError> {
    let dims = (camera.width, camera.height);
    if stokes.dims() != dims || corr.dims() != dims {
        return Err(ReconstructError::DimensionMismatch);
    }
    Ok(())
}

/// Serial fusion over the whole raster.
pub fn fuse_map(
    camera: &PinholeCamera,
    display: &DisplayPlane,
    stokes: &Raster<StokesEstimate>,
    correspondence: &CorrespondenceMap,
    ctx: &FusionContext,
) -> Result<FusionResult, ReconstructError> {
    check_dims(camera, stokes, correspondence)?;
    ctx.config.validate()?;
    let solutions = Raster::from_fn(camera.width, camera.height, |x, y| {
        fuse_map_pixel(camera, display, stokes, correspondence, ctx, x, y)
    });
    let summary = FusionSummary::from_solutions(&solutions);
    Ok(FusionResult { solutions, summary })
}

/// Assembles a result from per-pixel solutions computed elsewhere (e.g. in
/// parallel), after the same validation `fuse_map` performs.
pub fn assemble_fusion(
    camera: &PinholeCamera,
    stokes: &Raster<StokesEstimate>,
    correspondence: &CorrespondenceMap,
    config: &FusionConfig,
    solutions: Raster<Option<PixelSolution>>,
) -> Result<FusionResult, ReconstructError> {
    check_dims(camera, stokes, correspondence)?;
    config.validate()?;
    if solutions.dims() != (camera.width, camera.height) {
        return Err(ReconstructError::DimensionMismatch);
    }
    let summary = FusionSummary::from_solutions(&solutions);
    Ok(FusionResult { solutions, summary })
}

/// Normal under the orthographic assumption in the viewer frame (`+z`
/// towards the camera): zenith `theta`, azimuth `alpha`.
pub fn orthographic_normal(theta: f64, alpha: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    Vec3::new(st * ca, st * sa, ct)
}

/// Up to four orthographic normal candidates for one pixel, in world
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OrthographicCandidates {
    pub normals: [Option<Vec3>; 4],
    pub saturated: bool,
}

impl OrthographicCandidates {
    pub fn iter(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.normals.iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.normals.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Candidate closest in angle to `truth`.
    pub fn closest_to(&self, truth: Vec3) -> Option<Vec3> {
        self.iter()
            .min_by(|a, b| a.angle_to(truth).total_cmp(&b.angle_to(truth)))
    }
}

/// Enumerates `{θ_low, θ_high} × {φ + π/2, φ − π/2}` for one decoded pixel.
pub fn orthographic_pixel(
    camera: &PinholeCamera,
    inverter: &DopInverter,
    st: &StokesEstimate,
    tol_theta: f64,
    policy: SaturationPolicy,
) -> Option<OrthographicCandidates> {
    if !st.valid {
        return None;
    }
    let cands = inverter.invert(st.dop, tol_theta, policy);
    let mut out = OrthographicCandidates {
        saturated: cands.saturated,
        ..Default::default()
    };
    let mut thetas = [cands.low, cands.high];
    if thetas[0] == thetas[1] {
        thetas[1] = None;
    }
    let mut k = 0;
    for theta in thetas.into_iter().flatten() {
        for alpha in [st.aolp + FRAC_PI_2, st.aolp - FRAC_PI_2] {
            let v = orthographic_normal(theta, alpha);
            // viewer frame → camera frame (camera +z looks into the scene)
            let cam = Vec3::new(v.x, v.y, -v.z);
            out.normals[k] = Some(camera.to_world_frame(cam));
            k += 1;
        }
    }
    Some(out)
}

pub fn orthographic_baseline(
    camera: &PinholeCamera,
    inverter: &DopInverter,
    stokes: &Raster<StokesEstimate>,
    tol_theta: f64,
    policy: SaturationPolicy,
) -> Result<Raster<Option<OrthographicCandidates>>, ReconstructError> {
    if stokes.dims() != (camera.width, camera.height) {
        return Err(ReconstructError::DimensionMismatch);
    }
    Ok(stokes.map(|st| orthographic_pixel(camera, inverter, st, tol_theta, policy)))
}

/// Per-pixel candidate closest to the true normal: the most favourable
/// outcome any disambiguation rule could reach.
pub fn orthographic_best_case(
    candidates: &Raster<Option<OrthographicCandidates>>,
    truth: &Raster<Option<Vec3>>,
) -> Result<Raster<Option<Vec3>>, ReconstructError> {
    if !candidates.same_dims(truth) {
        return Err(ReconstructError::DimensionMismatch);
    }
    Ok(Raster::from_fn(truth.width(), truth.height(), |x, y| {
        let t = (*truth.get(x, y))?;
        candidates.get(x, y).as_ref()?.closest_to(t)
    }))
}

/// Angle between two unit directions, in degrees.
pub fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    a.angle_to(b) * 180.0 / PI
}
