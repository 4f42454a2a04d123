//! In-memory stages: simulate, decode, fuse, evaluate and the orthographic
//! baseline. Work inside a stage is spread over the current rayon pool;
//! results do not depend on the number of threads.

use polardeflect_core::codec::{
    decode_fourier_single_shot, decode_phase_shift, erode_mask, estimate_carrier, generate_patterns,
    phase_to_display_coords, unwrap_two_frequency, Axis, CorrespondenceMap, FourierConfig, FrameLabel, PatternKind,
    PhaseMap,
};
use polardeflect_core::metrics::{
    central_subset, depth_rmse, field_angle_profile, fit_sphere, normal_error_map, ErrorStats, EvaluationReport,
    ProfileBin,
};
use polardeflect_core::polarization::{DopInverter, PolarizationStack, SaturationPolicy, StokesAccumulator};
use polardeflect_core::reconstruct::{
    assemble_fusion, fuse_map_pixel, orthographic_best_case, orthographic_pixel, FusionContext, FusionResult,
    FusionSummary, OrthographicCandidates, PixelStatus,
};
use polardeflect_core::simulator::{render_pixel, responses, trace_pixel, GroundTruth};
use polardeflect_core::{PinholeCamera, Raster, StokesEstimate, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::RustFft;
use crate::manifest::Setup;

/// Field-angle bin width used for error profiles, degrees.
pub const PROFILE_BIN_DEG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Phase-shift sequence.
    Multi,
    /// One cross-sinusoid frame.
    Single,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Multi => "multi",
            Mode::Single => "single",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameRole {
    /// The measurement pattern.
    Pattern,
    /// Low-frequency frames that only resolve phase ambiguity.
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub role: FrameRole,
    pub label: FrameLabel,
    pub stack: PolarizationStack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub truth: GroundTruth,
    pub frames: Vec<RenderedFrame>,
}

pub fn par_raster<T: Send>(width: usize, height: usize, f: impl Fn(usize, usize) -> T + Sync) -> Raster<T> {
    let data: Vec<T> = (0..width * height)
        .into_par_iter()
        .map(|k| f(k % width, k / width))
        .collect();
    Raster::from_vec(width, height, data).expect("length matches")
}

/// Ground truth plus one polarization stack per displayed frame, pattern
/// frames first. The noise stream of frame `k` is keyed by `k`.
pub fn simulate(setup: &Setup) -> Result<Simulation> {
    let scene = &setup.scene;
    let cam = &scene.camera;
    let truth = GroundTruth {
        samples: par_raster(cam.width, cam.height, |x, y| trace_pixel(scene, x, y)),
    };
    let resp = responses(scene, &truth);

    let mut plan = Vec::new();
    for (role, spec) in [
        (FrameRole::Pattern, Some(&setup.pattern)),
        (FrameRole::Prior, setup.prior.as_ref()),
    ] {
        let Some(spec) = spec else { continue };
        let frames = generate_patterns(spec, &scene.display).map_err(Error::config)?;
        plan.extend(frames.into_iter().map(|f| (role, f)));
    }

    let frames = plan
        .into_iter()
        .enumerate()
        .map(|(k, (role, pf))| {
            let px = par_raster(cam.width, cam.height, |x, y| {
                render_pixel(&truth, &resp, &pf.raster, &setup.noise, k as u64, x, y)
            });
            let channel = |c: usize| px.map(|v| v[c]);
            let stack = PolarizationStack::new(channel(0), channel(1), channel(2), channel(3)).map_err(Error::data)?;
            Ok(RenderedFrame {
                role,
                label: pf.label,
                stack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation { truth, frames })
}

/// Polarimetric and geometric measurements recovered from the frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub stokes: Raster<StokesEstimate>,
    pub correspondence: CorrespondenceMap,
}

fn phase_shift_group(frames: &[RenderedFrame], role: FrameRole, axis: Axis, frequency: f64) -> Vec<Raster<f64>> {
    let mut group: Vec<(usize, Raster<f64>)> = frames
        .iter()
        .filter(|f| f.role == role)
        .filter_map(|f| match f.label {
            FrameLabel::PhaseShift {
                axis: a,
                frequency: q,
                step,
                ..
            } if a == axis && q == frequency => Some((step, f.stack.total_intensity())),
            _ => None,
        })
        .collect();
    group.sort_by_key(|g| g.0);
    group.into_iter().map(|g| g.1).collect()
}

fn decode_axis(
    frames: &[RenderedFrame],
    role: FrameRole,
    axis: Axis,
    frequencies: &[f64],
    setup: &Setup,
) -> Result<PhaseMap> {
    let mut phase: Option<PhaseMap> = None;
    let mut prev_f = 1.0;
    for &f in frequencies {
        let group = phase_shift_group(frames, role, axis, f);
        if group.is_empty() {
            return Err(Error::data(format!(
                "missing phase-shift frames for axis {axis:?} at {f} cycles"
            )));
        }
        let refs: Vec<&Raster<f64>> = group.iter().collect();
        let wrapped = decode_phase_shift(&refs, setup.decode.modulation_threshold).map_err(Error::data)?;
        phase = Some(match phase {
            None => wrapped.into_unit_period(),
            Some(low) => {
                unwrap_two_frequency(&low, &wrapped, f / prev_f, setup.decode.unwrap_residual).map_err(Error::data)?
            }
        });
        prev_f = f;
    }
    phase.ok_or_else(|| Error::config("pattern has no frequencies"))
}

/// Decodes the frames for the requested mode. Fails, rather than falling
/// back, when the frames do not support that mode.
pub fn decode(setup: &Setup, frames: &[RenderedFrame], mode: Mode) -> Result<Decoded> {
    let display = &setup.scene.display;
    let dark = setup.decode.dark_threshold;
    let pattern: Vec<&RenderedFrame> = frames.iter().filter(|f| f.role == FrameRole::Pattern).collect();
    match (mode, &setup.pattern.kind) {
        (Mode::Multi, PatternKind::PhaseShift { frequencies, .. }) => {
            let (w, h) = pattern
                .first()
                .ok_or_else(|| Error::data("no pattern frames"))?
                .stack
                .dims();
            let mut acc = StokesAccumulator::new(w, h);
            for f in &pattern {
                acc.add(&f.stack).map_err(Error::data)?;
            }
            let stokes = acc.finish(dark);
            let pu = decode_axis(frames, FrameRole::Pattern, Axis::U, frequencies, setup)?;
            let pv = decode_axis(frames, FrameRole::Pattern, Axis::V, frequencies, setup)?;
            let top = *frequencies.last().expect("validated non-empty");
            let correspondence = phase_to_display_coords(&pu, &pv, top, top, display).map_err(Error::data)?;
            Ok(Decoded { stokes, correspondence })
        }
        (Mode::Single, PatternKind::CrossSinusoid { carrier_u, carrier_v }) => {
            let cross = pattern
                .iter()
                .find(|f| matches!(f.label, FrameLabel::Cross { .. }))
                .ok_or_else(|| Error::data("no cross-sinusoid frame"))?;
            let stokes = cross.stack.stokes(dark);
            let low_u = decode_axis(frames, FrameRole::Prior, Axis::U, &[1.0], setup)?;
            let low_v = decode_axis(frames, FrameRole::Prior, Axis::V, &[1.0], setup)?;
            let cu =
                estimate_carrier(&low_u, *carrier_u).ok_or_else(|| Error::data("cannot estimate the u carrier"))?;
            let cv =
                estimate_carrier(&low_v, *carrier_v).ok_or_else(|| Error::data("cannot estimate the v carrier"))?;
            let cfg = FourierConfig {
                carrier_u: cu,
                carrier_v: cv,
                bandwidth: setup.decode.bandwidth,
                guard: setup.decode.guard,
                modulation_threshold: setup.decode.modulation_threshold,
            };
            let image = cross.stack.total_intensity();
            let (fu, fv) = decode_fourier_single_shot(&image, &cfg, &mut RustFft::new()).map_err(Error::data)?;
            let mut pu =
                unwrap_two_frequency(&low_u, &fu, *carrier_u, setup.decode.unwrap_residual).map_err(Error::data)?;
            let mut pv =
                unwrap_two_frequency(&low_v, &fv, *carrier_v, setup.decode.unwrap_residual).map_err(Error::data)?;
            pu.valid = erode_mask(&pu.valid, setup.decode.guard);
            pv.valid = erode_mask(&pv.valid, setup.decode.guard);
            let correspondence =
                phase_to_display_coords(&pu, &pv, *carrier_u, *carrier_v, display).map_err(Error::data)?;
            Ok(Decoded { stokes, correspondence })
        }
        (Mode::Multi, _) => Err(Error::data(
            "mode multi needs phase-shift frames, but the input holds a cross-sinusoid",
        )),
        (Mode::Single, _) => Err(Error::data(
            "mode single needs a cross-sinusoid frame, but the input holds a phase-shift sequence",
        )),
    }
}

pub fn fusion_context(setup: &Setup) -> FusionContext {
    let s = &setup.scene;
    FusionContext::new(&s.camera, DopInverter::new(s.material), s.working, setup.fusion)
}

pub fn fuse(setup: &Setup, decoded: &Decoded) -> Result<FusionResult> {
    let s = &setup.scene;
    let ctx = fusion_context(setup);
    let cam = &s.camera;
    let (sw, sh) = decoded.stokes.dims();
    if (sw, sh) != (cam.width, cam.height) {
        return Err(Error::data(format!(
            "decoded rasters are {sw}x{sh} but the camera is {}x{}",
            cam.width, cam.height
        )));
    }
    let solutions = par_raster(cam.width, cam.height, |x, y| {
        fuse_map_pixel(cam, &s.display, &decoded.stokes, &decoded.correspondence, &ctx, x, y)
    });
    assemble_fusion(cam, &decoded.stokes, &decoded.correspondence, &setup.fusion, solutions).map_err(Error::data)
}

/// The parts of a reconstruction that evaluation looks at: `Ok` pixels
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub normals: Raster<Option<Vec3>>,
    /// Distance `s` along the camera ray, mm.
    pub depth: Raster<Option<f64>>,
    pub points: Vec<Vec3>,
    pub summary: FusionSummary,
}

impl Solution {
    pub fn from_fusion(fusion: &FusionResult) -> Self {
        let ok = fusion.ok_surface();
        Self {
            normals: ok.map(|p| p.map(|p| p.normal)),
            depth: ok.map(|p| p.map(|p| p.s)),
            points: ok.as_slice().iter().flatten().map(|p| p.point).collect(),
            summary: fusion.summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub errors: Raster<Option<f64>>,
    pub profile: Vec<ProfileBin>,
}

/// Scores a solution against ground-truth normals and depths. A sphere is
/// fitted to the solution points when `reference_radius` is given.
pub fn evaluate(
    camera: &PinholeCamera,
    solution: &Solution,
    truth_normals: &Raster<Option<Vec3>>,
    truth_depth: &Raster<Option<f64>>,
    reference_radius: Option<f64>,
) -> Result<Evaluation> {
    let dims = solution.normals.dims();
    if dims != (camera.width, camera.height)
        || truth_normals.dims() != dims
        || truth_depth.dims() != dims
        || solution.depth.dims() != dims
    {
        return Err(Error::data("solution, truth and camera differ in size"));
    }
    let mask = Raster::from_fn(dims.0, dims.1, |x, y| {
        solution.normals.get(x, y).is_some() && truth_normals.get(x, y).is_some()
    });
    let errors = normal_error_map(&solution.normals, truth_normals, &mask).map_err(Error::data)?;
    let normal = ErrorStats::from_errors(errors.as_slice().iter().flatten().copied().collect()).map_err(Error::data)?;
    let central = central_subset(&mask, 0.5);
    let normal_central = ErrorStats::from_errors(
        errors
            .iter_xy()
            .filter(|(x, y, _)| *central.get(*x, *y))
            .filter_map(|(_, _, e)| *e)
            .collect(),
    )
    .map_err(Error::data)?;
    let depth = depth_rmse(&solution.depth, truth_depth, &mask).map_err(Error::data)?;
    let (sphere, radius_error_um) = match reference_radius {
        Some(r) => {
            let fit = fit_sphere(&solution.points).map_err(Error::data)?;
            (Some(fit), Some((fit.radius - r) * 1000.0))
        }
        None => (None, None),
    };
    let truth_count = truth_normals.as_slice().iter().filter(|n| n.is_some()).count();
    let profile = field_angle_profile(&errors, camera, PROFILE_BIN_DEG).map_err(Error::data)?;
    Ok(Evaluation {
        report: EvaluationReport {
            normal,
            normal_central,
            depth,
            sphere,
            radius_error_um,
            valid_fraction: normal.count as f64 / truth_count.max(1) as f64,
            status: solution.summary,
        },
        errors,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub candidates: Raster<Option<OrthographicCandidates>>,
    /// Candidate nearest the truth at each pixel.
    pub best: Raster<Option<Vec3>>,
    pub errors: Raster<Option<f64>>,
    pub stats: ErrorStats,
    pub profile: Vec<ProfileBin>,
}

/// Orthographic shape-from-polarization on the same Stokes estimates,
/// scored by its best case over `mask`.
pub fn baseline(
    setup: &Setup,
    stokes: &Raster<StokesEstimate>,
    truth_normals: &Raster<Option<Vec3>>,
    mask: &Raster<bool>,
) -> Result<Baseline> {
    let s = &setup.scene;
    let cam = &s.camera;
    if stokes.dims() != (cam.width, cam.height) || !stokes.same_dims(truth_normals) || !stokes.same_dims(mask) {
        return Err(Error::data("baseline inputs differ in size"));
    }
    let inverter = DopInverter::new(s.material);
    let tol = setup.fusion.tol_theta;
    let policy: SaturationPolicy = setup.fusion.saturation;
    let candidates = par_raster(cam.width, cam.height, |x, y| {
        orthographic_pixel(cam, &inverter, stokes.get(x, y), tol, policy)
    });
    let best = orthographic_best_case(&candidates, truth_normals).map_err(Error::data)?;
    let errors = normal_error_map(&best, truth_normals, mask).map_err(Error::data)?;
    let stats = ErrorStats::from_errors(errors.as_slice().iter().flatten().copied().collect()).map_err(Error::data)?;
    let profile = field_angle_profile(&errors, cam, PROFILE_BIN_DEG).map_err(Error::data)?;
    Ok(Baseline {
        candidates,
        best,
        errors,
        stats,
        profile,
    })
}

/// Pixels whose fusion status is `Ok`.
pub fn ok_mask(fusion: &FusionResult) -> Raster<bool> {
    fusion
        .solutions
        .map(|s| matches!(s, Some(s) if s.status == PixelStatus::Ok))
}

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
