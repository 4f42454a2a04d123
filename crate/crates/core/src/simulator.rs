//! Forward model: analytic specular surfaces reflecting an unpolarized
//! display into a four-channel polarization camera.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{
    half_angle, reflect, DisplayPlane, GeometryError, PinholeCamera, RigidTransform, Vec3, WorkingDistance,
};
use crate::polarization::{dop_exact_fresnel, dop_metal, wrap_pi, OpticalMaterial, PolarizationStack};
use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid surface: {0}")]
    InvalidSurface(&'static str),
    #[error("invalid noise model: {0}")]
    InvalidNoise(&'static str),
    #[error("diagnostic requires a metal (kappa > 0)")]
    NotMetal,
    #[error("raster dimensions do not match the camera")]
    DimensionMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Regular grid of heights `z(x, y)` in a local frame, interpolated with
/// Catmull-Rom bicubic patches. Grid node `(ix, iy)` sits at
/// `(x0 + ix·dx, y0 + iy·dy)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Heightfield {
    /// Local → world placement.
    pub frame: RigidTransform,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major heights, `ny` rows of `nx`.
    pub z: Vec<f64>,
}

fn catmull_rom(p: [f64; 4], t: f64) -> (f64, f64) {
    let a = -0.5 * p[0] + 1.5 * p[1] - 1.5 * p[2] + 0.5 * p[3];
    let b = p[0] - 2.5 * p[1] + 2.0 * p[2] - 0.5 * p[3];
    let c = 0.5 * (p[2] - p[0]);
    let d = p[1];
    (((a * t + b) * t + c) * t + d, (3.0 * a * t + 2.0 * b) * t + c)
}

impl Heightfield {
    pub fn new(
        frame: RigidTransform,
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        nx: usize,
        ny: usize,
        z: Vec<f64>,
    ) -> Result<Self, SimulationError> {
        let hf = Self {
            frame,
            x0,
            y0,
            dx,
            dy,
            nx,
            ny,
            z,
        };
        hf.validate()?;
        Ok(hf)
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.nx < 4 || self.ny < 4 {
            return Err(SimulationError::InvalidSurface("heightfield grid must be at least 4x4"));
        }
        if self.z.len() != self.nx * self.ny {
            return Err(SimulationError::InvalidSurface(
                "heightfield sample count does not match grid",
            ));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return Err(SimulationError::InvalidSurface("heightfield spacing must be positive"));
        }
        if self.z.iter().any(|v| !v.is_finite()) || !self.x0.is_finite() || !self.y0.is_finite() {
            return Err(SimulationError::InvalidSurface("heightfield values must be finite"));
        }
        if !self.frame.rotation.is_rotation(1e-9) {
            return Err(SimulationError::InvalidSurface(
                "heightfield frame is not a rigid transform",
            ));
        }
        Ok(())
    }

    fn node(&self, ix: isize, iy: isize) -> f64 {
        let ix = ix.clamp(0, self.nx as isize - 1) as usize;
        let iy = iy.clamp(0, self.ny as isize - 1) as usize;
        self.z[iy * self.nx + ix]
    }

    pub fn x_extent(&self) -> (f64, f64) {
        (self.x0, self.x0 + self.dx * (self.nx - 1) as f64)
    }

    pub fn y_extent(&self) -> (f64, f64) {
        (self.y0, self.y0 + self.dy * (self.ny - 1) as f64)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (xa, xb) = self.x_extent();
        let (ya, yb) = self.y_extent();
        x >= xa && x <= xb && y >= ya && y <= yb
    }

    /// Height and gradient `(z, ∂z/∂x, ∂z/∂y)` at local `(x, y)`; edge rows
    /// are replicated outside the grid.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let gx = ((x - self.x0) / self.dx).clamp(0.0, (self.nx - 1) as f64);
        let gy = ((y - self.y0) / self.dy).clamp(0.0, (self.ny - 1) as f64);
        let ix = (gx.floor() as isize).min(self.nx as isize - 2);
        let iy = (gy.floor() as isize).min(self.ny as isize - 2);
        let tx = gx - ix as f64;
        let ty = gy - iy as f64;
        let mut rows = [0.0; 4];
        let mut drows = [0.0; 4];
        for (k, r) in (-1..=2).enumerate() {
            let p = [
                self.node(ix - 1, iy + r),
                self.node(ix, iy + r),
                self.node(ix + 1, iy + r),
                self.node(ix + 2, iy + r),
            ];
            let (v, dv) = catmull_rom(p, tx);
            rows[k] = v;
            drows[k] = dv;
        }
        let (z, dz_dty) = catmull_rom(rows, ty);
        let (dz_dtx, _) = catmull_rom(drows, ty);
        (z, dz_dtx / self.dx, dz_dty / self.dy)
    }

    fn z_bounds(&self) -> (f64, f64) {
        let lo = self.z.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Catmull-Rom can overshoot the node range by up to a quarter of it.
        let pad = 0.25 * (hi - lo) + 1e-9;
        (lo - pad, hi + pad)
    }

    /// First crossing of the local-frame ray with the surface: march at a
    /// quarter cell, then 20 bisection steps.
    fn intersect_local(&self, o: Vec3, d: Vec3) -> Option<f64> {
        let (xa, xb) = self.x_extent();
        let (ya, yb) = self.y_extent();
        let (za, zb) = self.z_bounds();
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for (oc, dc, lo, hi) in [(o.x, d.x, xa, xb), (o.y, d.y, ya, yb), (o.z, d.z, za, zb)] {
            if dc.abs() < 1e-300 {
                if oc < lo || oc > hi {
                    return None;
                }
                continue;
            }
            let (mut a, mut b) = ((lo - oc) / dc, (hi - oc) / dc);
            if a > b {
                core::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        if !(t0 <= t1) {
            return None;
        }
        let f = |t: f64| {
            let p = o + d * t;
            p.z - self.eval(p.x, p.y).0
        };
        let step = 0.25 * self.dx.min(self.dy);
        let mut ta = t0;
        let mut fa = f(ta);
        if fa == 0.0 {
            return Some(ta);
        }
        while ta < t1 {
            let tb = (ta + step).min(t1);
            let fb = f(tb);
            if fb == 0.0 {
                return Some(tb);
            }
            if (fa < 0.0) != (fb < 0.0) {
                let (mut lo, mut hi, flo) = (ta, tb, fa);
                for _ in 0..20 {
                    let mid = 0.5 * (lo + hi);
                    let fm = f(mid);
                    if (fm < 0.0) == (flo < 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            ta = tb;
            fa = fb;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Surface {
    Sphere { center: Vec3, radius: f64 },
    Plane { point: Vec3, normal: Vec3 },
    Heightfield(Heightfield),
}

/// Ray–surface hit: distance along the unit ray and the unit normal facing
/// the incoming ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub s: f64,
    pub normal: Vec3,
}

impl Surface {
    pub fn validate(&self) -> Result<(), SimulationError> {
        match self {
            Surface::Sphere { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite() && center.is_finite()) {
                    return Err(SimulationError::InvalidSurface("sphere radius must be positive"));
                }
            }
            Surface::Plane { point, normal } => {
                if !point.is_finite() || normal.normalize().is_none() {
                    return Err(SimulationError::InvalidSurface("plane normal must be nonzero"));
                }
            }
            Surface::Heightfield(h) => h.validate()?,
        }
        Ok(())
    }

    pub fn intersect(&self, o: Vec3, d: Vec3) -> Option<SurfaceHit> {
        let (s, n) = match self {
            Surface::Sphere { center, radius } => {
                let oc = *center - o;
                let b = d.dot(oc);
                let c = oc.norm_squared() - radius * radius;
                if c <= 0.0 {
                    return None;
                }
                let disc = b * b - c;
                if disc < 0.0 || b <= 0.0 {
                    return None;
                }
                // stable near root: (b − √disc) = c/(b + √disc)
                let s = c / (b + disc.sqrt());
                (s, ((o + d * s) - *center) / *radius)
            }
            Surface::Plane { point, normal } => {
                let n = normal.normalize()?;
                let denom = d.dot(n);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let s = (*point - o).dot(n) / denom;
                if !(s > 0.0) {
                    return None;
                }
                (s, n)
            }
            Surface::Heightfield(h) => {
                let lo = h.frame.apply_inverse(o);
                let ld = h.frame.rotation.transpose().mul_vec(d);
                let s = h.intersect_local(lo, ld)?;
                let p = lo + ld * s;
                let (_, zx, zy) = h.eval(p.x, p.y);
                let n_local = Vec3::new(-zx, -zy, 1.0).normalize()?;
                (s, h.frame.rotation.mul_vec(n_local))
            }
        };
        let normal = if n.dot(d) > 0.0 { -n } else { n };
        Some(SurfaceHit { s, normal })
    }
}

/// How channel intensities are synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SynthesisModel {
    /// `I_s`, `I_p` from complex Fresnel reflectances.
    #[default]
    ExactFresnel,
    /// Total reflected power from Fresnel, DoP from the material's own
    /// model, so reconstruction inverts exactly what was rendered.
    ModelMatched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub camera: PinholeCamera,
    pub display: DisplayPlane,
    pub working: WorkingDistance,
    pub surface: Surface,
    pub material: OpticalMaterial,
    pub synthesis: SynthesisModel,
}

/// Ground truth at one camera pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    /// Unit camera ray.
    pub ray: Vec3,
    pub s: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub theta: f64,
    pub display_point: Vec3,
    /// Display coordinates `(i, j)` of `display_point`.
    pub display_ij: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub samples: Raster<Option<TruthSample>>,
}

impl GroundTruth {
    pub fn dims(&self) -> (usize, usize) {
        self.samples.dims()
    }

    pub fn mask(&self) -> Raster<bool> {
        self.samples.map(|s| s.is_some())
    }

    pub fn hit_count(&self) -> usize {
        self.samples.as_slice().iter().filter(|s| s.is_some()).count()
    }

    pub fn depth(&self) -> Raster<f64> {
        self.samples.map(|s| s.map_or(f64::NAN, |t| t.s))
    }

    pub fn normals(&self) -> Raster<Option<Vec3>> {
        self.samples.map(|s| s.map(|t| t.normal))
    }

    pub fn points(&self) -> Raster<Option<Vec3>> {
        self.samples.map(|s| s.map(|t| t.point))
    }
}

/// Traces the ray through the centre of pixel `(x, y)`.
pub fn trace_pixel(scene: &Scene, x: usize, y: usize) -> Option<TruthSample> {
    let cam = &scene.camera;
    let o = cam.center();
    let ray = cam.pixel_to_ray(x as f64, y as f64).ok()?;
    let hit = scene.surface.intersect(o, ray)?;
    if !scene.working.contains(hit.s) {
        return None;
    }
    let point = o + ray * hit.s;
    let out = reflect(ray, hit.normal);
    let dh = scene.display.intersect(point, out)?;
    if !scene.display.contains(dh.i, dh.j) {
        return None;
    }
    let theta = half_angle(point, o, dh.point).ok()?;
    Some(TruthSample {
        ray,
        s: hit.s,
        point,
        normal: hit.normal,
        theta,
        display_point: dh.point,
        display_ij: [dh.i, dh.j],
    })
}

pub fn trace(scene: &Scene) -> GroundTruth {
    GroundTruth {
        samples: Raster::from_fn(scene.camera.width, scene.camera.height, |x, y| trace_pixel(scene, x, y)),
    }
}

/// Per-unit-radiance reflection response of one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Response {
    /// `|r_s|²/2` under the chosen synthesis model.
    pub s_gain: f64,
    /// `|r_p|²/2` under the chosen synthesis model.
    pub p_gain: f64,
    /// Sensor-plane orientation of the s-axis, in `[0, π)`.
    pub aolp: f64,
}

impl Response {
    pub fn dop(&self) -> f64 {
        let t = self.s_gain + self.p_gain;
        if t > 0.0 {
            (self.s_gain - self.p_gain) / t
        } else {
            0.0
        }
    }

    /// Intensity behind a polarizer at `angle` for display radiance `l`.
    pub fn channel(&self, l: f64, angle: f64) -> f64 {
        let is = l * self.s_gain;
        let ip = l * self.p_gain;
        0.5 * (is + ip) + 0.5 * (is - ip) * (2.0 * (angle - self.aolp)).cos()
    }
}

/// Orientation on the sensor of the s-axis `d × n`, in `[0, π)`. Zero at
/// normal incidence, where it is undefined.
pub fn s_axis_aolp(camera: &PinholeCamera, ray: Vec3, normal: Vec3) -> f64 {
    match ray.cross(normal).normalize() {
        Some(s) => {
            let c = camera.to_camera_frame(s);
            wrap_pi(c.y.atan2(c.x))
        }
        None => 0.0,
    }
}

pub fn response(scene: &Scene, t: &TruthSample) -> Response {
    let mat = &scene.material;
    let (rs, rp) = mat.reflectance(t.theta);
    let (s_gain, p_gain) = match scene.synthesis {
        SynthesisModel::ExactFresnel => (0.5 * rs, 0.5 * rp),
        SynthesisModel::ModelMatched => {
            let total = 0.5 * (rs + rp);
            let rho = mat.dop(t.theta);
            (0.5 * total * (1.0 + rho), 0.5 * total * (1.0 - rho))
        }
    };
    Response {
        s_gain,
        p_gain,
        aolp: s_axis_aolp(&scene.camera, t.ray, t.normal),
    }
}

pub fn responses(scene: &Scene, truth: &GroundTruth) -> Raster<Option<Response>> {
    truth.samples.map(|s| s.as_ref().map(|t| response(scene, t)))
}

/// Sensor noise. `sigma` is a fraction of full scale (1.0).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    pub sigma: f64,
    /// Scale `sigma` by `sqrt(I)` (shot-noise-like).
    #[cfg_attr(feature = "serde", serde(default))]
    pub photon: bool,
    /// Quantization depth; 0 disables.
    #[cfg_attr(feature = "serde", serde(default))]
    pub bits: u32,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        sigma: 0.0,
        photon: false,
        bits: 0,
        seed: 0,
    };

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            seed,
            ..Self::NONE
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SimulationError::InvalidNoise(
                "sigma must be a finite non-negative number",
            ));
        }
        if ![0, 8, 10, 12, 16].contains(&self.bits) {
            return Err(SimulationError::InvalidNoise("bits must be one of 0, 8, 10, 12, 16"));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma == 0.0 && self.bits == 0
    }

    /// Counter-based stream for one pixel of one frame: the result depends
    /// only on `(seed, frame, pixel)`.
    fn pixel_rng(&self, frame: u64, pixel: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame);
        rng.set_word_pos(u128::from(pixel) * 64);
        rng
    }

    /// Applies noise, clamping and quantization to the four channels of one
    /// pixel.
    pub fn apply(&self, frame: u64, pixel: u64, channels: &mut [f64; 4]) {
        if self.sigma > 0.0 {
            let mut rng = self.pixel_rng(frame, pixel);
            for c in channels.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                let sd = if self.photon {
                    self.sigma * c.max(0.0).sqrt()
                } else {
                    self.sigma
                };
                *c += sd * z;
            }
        }
        for c in channels.iter_mut() {
            *c = c.clamp(0.0, 1.0);
            if self.bits > 0 {
                let levels = ((1u64 << self.bits) - 1) as f64;
                *c = (*c * levels).round() / levels;
            }
        }
    }
}

/// Noiseless channel values `[I0, I45, I90, I135]` for one pixel.
pub fn shade_pixel(resp: &Response, radiance: f64) -> [f64; 4] {
    PolarizationStack::ANGLES.map(|a| resp.channel(radiance, a))
}

/// Renders one pattern frame (`pattern` is the display raster) through the
/// precomputed per-pixel responses.
pub fn render_stack(
    scene: &Scene,
    truth: &GroundTruth,
    responses: &Raster<Option<Response>>,
    pattern: &Raster<f64>,
    noise: &NoiseModel,
    frame: u64,
) -> Result<PolarizationStack, SimulationError> {
    let (w, h) = (scene.camera.width, scene.camera.height);
    if truth.dims() != (w, h) || responses.dims() != (w, h) {
        return Err(SimulationError::DimensionMismatch);
    }
    if pattern.dims() != (scene.display.width, scene.display.height) {
        return Err(SimulationError::DimensionMismatch);
    }
    let mut stack = PolarizationStack::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = render_pixel(truth, responses, pattern, noise, frame, x, y);
            let [c0, c1, c2, c3] = stack.channels_mut();
            *c0.get_mut(x, y) = v[0];
            *c1.get_mut(x, y) = v[1];
            *c2.get_mut(x, y) = v[2];
            *c3.get_mut(x, y) = v[3];
        }
    }
    Ok(stack)
}

/// Channel values of one pixel of one frame. Misses render black before
/// noise.
pub fn render_pixel(
    truth: &GroundTruth,
    responses: &Raster<Option<Response>>,
    pattern: &Raster<f64>,
    noise: &NoiseModel,
    frame: u64,
    x: usize,
    y: usize,
) -> [f64; 4] {
    let mut v = match (truth.samples.get(x, y), responses.get(x, y)) {
        (Some(t), Some(r)) => {
            let l = pattern.sample_bilinear(t.display_ij[0], t.display_ij[1]);
            shade_pixel(r, l)
        }
        _ => [0.0; 4],
    };
    noise.apply(frame, (y * truth.samples.width() + x) as u64, &mut v);
    v
}

/// `|ρ_exact − ρ_model|` per hit pixel; zero elsewhere.
pub fn render_exact_vs_model(scene: &Scene, truth: &GroundTruth) -> Result<Raster<f64>, SimulationError> {
    let OpticalMaterial { m, kappa, .. } = scene.material;
    if !(kappa > 0.0) {
        return Err(SimulationError::NotMetal);
    }
    Ok(truth.samples.map(|s| {
        s.map_or(0.0, |t| {
            (dop_exact_fresnel(t.theta, m, kappa) - dop_metal(t.theta, m, kappa)).abs()
        })
    }))
}

/// Shapes for the qualitative stand-in objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ProceduralShape {
    HorseLike,
    BirdLike,
}

/// Smooth relief built from Gaussian bumps at several scales on an
/// `n × n` grid spanning `size × size` mm, centred on the local origin.
pub fn procedural_heightfield(
    shape: ProceduralShape,
    size: f64,
    n: usize,
    frame: RigidTransform,
) -> Result<Heightfield, SimulationError> {
    // (cx, cy, sigma, amplitude) in units of `size`
    const HORSE: [(f64, f64, f64, f64); 7] = [
        (0.0, 0.05, 0.28, 0.16),
        (-0.22, -0.18, 0.10, 0.07),
        (0.25, -0.2, 0.09, 0.06),
        (0.18, 0.22, 0.06, -0.03),
        (-0.15, 0.25, 0.05, 0.025),
        (0.05, -0.05, 0.035, 0.012),
        (-0.05, 0.1, 0.025, -0.01),
    ];
    const BIRD: [(f64, f64, f64, f64); 7] = [
        (0.0, 0.0, 0.2, 0.12),
        (-0.25, 0.05, 0.12, 0.06),
        (0.25, 0.05, 0.12, 0.06),
        (0.0, -0.25, 0.07, 0.05),
        (0.0, 0.22, 0.05, -0.025),
        (0.1, -0.1, 0.03, 0.01),
        (-0.1, -0.1, 0.03, 0.01),
    ];
    let bumps: &[(f64, f64, f64, f64)] = match shape {
        ProceduralShape::HorseLike => &HORSE,
        ProceduralShape::BirdLike => &BIRD,
    };
    let step = size / (n.max(2) - 1) as f64;
    let x0 = -0.5 * size;
    let mut z = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let x = (x0 + ix as f64 * step) / size;
            let y = (x0 + iy as f64 * step) / size;
            let h: f64 = bumps
                .iter()
                .map(|&(cx, cy, s, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            z.push(0.5 * h * size);
        }
    }
    Heightfield::new(frame, x0, x0, step, step, n, n, z)
}
