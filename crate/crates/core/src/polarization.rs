//! Polarimetric measurement model.
//!
//! Linear-polarizer intensities follow
//! `I(a) = (I_max + I_min)/2 + (I_max − I_min)/2 · cos(2(a − φ))`, from which
//! the degree of linear polarization `ρ = (I_max − I_min)/(I_max + I_min)` and
//! the polarization angle `φ` are recovered. `ρ` is then mapped back to the
//! incidence angle through one of three reflection models.

use core::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg;
use crate::raster::Raster;

/// Incidence angles are searched on `[0, π/2 − GRAZING_EPS]`.
pub const GRAZING_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolarizationError {
    #[error("polarization channels have mismatched dimensions")]
    DimensionMismatch,
    #[error("sinusoid fit needs at least three distinct polarizer angles modulo π")]
    RankDeficient,
    #[error("invalid material: {0}")]
    InvalidMaterial(&'static str),
}

/// Which closed form maps incidence angle to degree of polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DopModel {
    /// Specular reflection off a dielectric (real index).
    Dielectric,
    /// Approximate metal formula using `m` and the attenuation `κ`.
    Metal,
    /// `(R_s − R_p)/(R_s + R_p)` from complex Fresnel coefficients.
    ExactFresnel,
}

/// Complex refractive index `m + iκ` with the model used to interpret DoP.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OpticalMaterial {
    pub m: f64,
    pub kappa: f64,
    pub model: DopModel,
}

impl OpticalMaterial {
    pub fn new(m: f64, kappa: f64, model: DopModel) -> Result<Self, PolarizationError> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(PolarizationError::InvalidMaterial("refractive index must exceed 1"));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(PolarizationError::InvalidMaterial("attenuation must be non-negative"));
        }
        if model == DopModel::Metal && kappa <= 0.0 {
            return Err(PolarizationError::InvalidMaterial("metal model needs attenuation > 0"));
        }
        Ok(Self { m, kappa, model })
    }

    /// Steel bearing ball, `2.76 + 3.79i`.
    pub fn bearing_steel() -> Self {
        Self {
            m: 2.76,
            kappa: 3.79,
            model: DopModel::Metal,
        }
    }

    /// Chrome coating, `3.13 + 3.31i`.
    pub fn chrome() -> Self {
        Self {
            m: 3.13,
            kappa: 3.31,
            model: DopModel::Metal,
        }
    }

    pub fn with_model(self, model: DopModel) -> Result<Self, PolarizationError> {
        Self::new(self.m, self.kappa, model)
    }

    pub fn dop(&self, theta: f64) -> f64 {
        match self.model {
            DopModel::Dielectric => dop_dielectric(theta, self.m),
            DopModel::Metal => dop_metal(theta, self.m, self.kappa),
            DopModel::ExactFresnel => dop_exact_fresnel(theta, self.m, self.kappa),
        }
    }

    pub fn reflectance(&self, theta: f64) -> (f64, f64) {
        fresnel_reflectance(theta, self.m, self.kappa)
    }
}

/// Degree of polarization of specular reflection off a dielectric of index `m`.
pub fn dop_dielectric(theta: f64, m: f64) -> f64 {
    let s = theta.sin();
    let s2 = s * s;
    let m2 = m * m;
    let num = 2.0 * s2 * theta.cos() * (m2 - s2).sqrt();
    let den = m2 - s2 - m2 * s2 + 2.0 * s2 * s2;
    num / den
}

/// Approximate degree of polarization for a conductor with index `m` and
/// attenuation `κ`.
pub fn dop_metal(theta: f64, m: f64, kappa: f64) -> f64 {
    let ts = theta.tan() * theta.sin();
    2.0 * m * ts / (ts * ts + m * m * (1.0 + kappa * kappa))
}

/// Power reflectances `(|r_s|², |r_p|²)` at an air/material interface with
/// complex index `m + iκ`.
pub fn fresnel_reflectance(theta: f64, m: f64, kappa: f64) -> (f64, f64) {
    let n = Complex64::new(m, kappa);
    let n2 = n * n;
    let (sin_t, cos_t) = theta.sin_cos();
    // n·cos(θ_t), principal branch (non-negative real part)
    let root = (n2 - sin_t * sin_t).sqrt();
    let rs = (cos_t - root) / (cos_t + root);
    let rp = (n2 * cos_t - root) / (n2 * cos_t + root);
    (rs.norm_sqr(), rp.norm_sqr())
}

pub fn dop_exact_fresnel(theta: f64, m: f64, kappa: f64) -> f64 {
    let (rs, rp) = fresnel_reflectance(theta, m, kappa);
    (rs - rp) / (rs + rp)
}

/// Per-pixel linear Stokes analysis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StokesEstimate {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    /// Degree of linear polarization, clamped to `[0, 1]`.
    pub dop: f64,
    /// Unclamped ratio, for diagnostics.
    pub dop_raw: f64,
    /// Angle of linear polarization in `[0, π)`.
    pub aolp: f64,
    /// `(I0 + I90) − (I45 + I135)`; zero for a consistent measurement.
    pub residual: f64,
    pub valid: bool,
}

impl StokesEstimate {
    /// Builds the estimate from (possibly frame-summed) Stokes components.
    pub fn from_components(s0: f64, s1: f64, s2: f64, residual: f64, dark_threshold: f64) -> Self {
        let valid = s0 > dark_threshold && s0.is_finite();
        let (dop_raw, aolp) = if valid {
            let aolp = if s1 == 0.0 && s2 == 0.0 {
                0.0
            } else {
                wrap_pi(0.5 * s2.atan2(s1))
            };
            (s1.hypot(s2) / s0, aolp)
        } else {
            (0.0, 0.0)
        };
        Self {
            s0,
            s1,
            s2,
            dop: dop_raw.clamp(0.0, 1.0),
            dop_raw,
            aolp,
            residual,
            valid,
        }
    }

    /// Intensity behind a polarizer at `angle`, resynthesized from the Stokes
    /// components.
    pub fn intensity_at(&self, angle: f64) -> f64 {
        let (s, c) = (2.0 * angle).sin_cos();
        0.5 * (self.s0 + self.s1 * c + self.s2 * s)
    }

    pub fn i_max(&self) -> f64 {
        0.5 * self.s0 * (1.0 + self.dop)
    }

    pub fn i_min(&self) -> f64 {
        0.5 * self.s0 * (1.0 - self.dop)
    }
}

/// Wraps an angle into `[0, π)`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = a.rem_euclid(PI);
    if w >= PI {
        0.0
    } else {
        w
    }
}

/// Closed-form Stokes estimate from polarizer angles 0°, 45°, 90° and 135°.
/// Pixels with `s0 ≤ dark_threshold` are marked invalid.
pub fn stokes_from_quad(i0: f64, i45: f64, i90: f64, i135: f64, dark_threshold: f64) -> StokesEstimate {
    let s0 = 0.5 * (i0 + i45 + i90 + i135);
    StokesEstimate::from_components(s0, i0 - i90, i45 - i135, (i0 + i90) - (i45 + i135), dark_threshold)
}

/// Four co-registered polarizer channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationStack {
    pub i0: Raster<f64>,
    pub i45: Raster<f64>,
    pub i90: Raster<f64>,
    pub i135: Raster<f64>,
}

impl PolarizationStack {
    /// Polarizer angles of the four channels, radians.
    pub const ANGLES: [f64; 4] = [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];

    pub fn new(
        i0: Raster<f64>,
        i45: Raster<f64>,
        i90: Raster<f64>,
        i135: Raster<f64>,
    ) -> Result<Self, PolarizationError> {
        if !(i0.same_dims(&i45) && i0.same_dims(&i90) && i0.same_dims(&i135)) {
            return Err(PolarizationError::DimensionMismatch);
        }
        Ok(Self { i0, i45, i90, i135 })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let z = Raster::filled(width, height, 0.0);
        Self {
            i0: z.clone(),
            i45: z.clone(),
            i90: z.clone(),
            i135: z,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i0.dims()
    }

    pub fn channels(&self) -> [&Raster<f64>; 4] {
        [&self.i0, &self.i45, &self.i90, &self.i135]
    }

    pub fn channels_mut(&mut self) -> [&mut Raster<f64>; 4] {
        [&mut self.i0, &mut self.i45, &mut self.i90, &mut self.i135]
    }

    /// Unpolarized intensity `s0 = (I0 + I45 + I90 + I135)/2`.
    pub fn total_intensity(&self) -> Raster<f64> {
        let mut out = self.i0.clone();
        for (k, v) in out.as_mut_slice().iter_mut().enumerate() {
            *v = 0.5
                * (self.i0.as_slice()[k] + self.i45.as_slice()[k] + self.i90.as_slice()[k] + self.i135.as_slice()[k]);
        }
        out
    }

    pub fn stokes(&self, dark_threshold: f64) -> Raster<StokesEstimate> {
        let (w, h) = self.dims();
        Raster::from_fn(w, h, |x, y| {
            stokes_from_quad(
                *self.i0.get(x, y),
                *self.i45.get(x, y),
                *self.i90.get(x, y),
                *self.i135.get(x, y),
                dark_threshold,
            )
        })
    }
}

/// Running per-pixel sum of Stokes components over several frames that share
/// the same polarization geometry (e.g. all shifts of a fringe sequence).
#[derive(Debug, Clone)]
pub struct StokesAccumulator {
    s0: Raster<f64>,
    s1: Raster<f64>,
    s2: Raster<f64>,
    residual: Raster<f64>,
    frames: usize,
}

impl StokesAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        let z = Raster::filled(width, height, 0.0);
        Self {
            s0: z.clone(),
            s1: z.clone(),
            s2: z.clone(),
            residual: z,
            frames: 0,
        }
    }

    pub fn add(&mut self, stack: &PolarizationStack) -> Result<(), PolarizationError> {
        if !self.s0.same_dims(&stack.i0) {
            return Err(PolarizationError::DimensionMismatch);
        }
        let [a, b, c, d] = stack.channels().map(|r| r.as_slice());
        for k in 0..a.len() {
            self.s0.as_mut_slice()[k] += 0.5 * (a[k] + b[k] + c[k] + d[k]);
            self.s1.as_mut_slice()[k] += a[k] - c[k];
            self.s2.as_mut_slice()[k] += b[k] - d[k];
            self.residual.as_mut_slice()[k] += (a[k] + c[k]) - (b[k] + d[k]);
        }
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Frame-averaged estimate; the dark threshold applies to the mean `s0`.
    pub fn finish(&self, dark_threshold: f64) -> Raster<StokesEstimate> {
        let n = self.frames.max(1) as f64;
        let (w, h) = self.s0.dims();
        Raster::from_fn(w, h, |x, y| {
            StokesEstimate::from_components(
                self.s0.get(x, y) / n,
                self.s1.get(x, y) / n,
                self.s2.get(x, y) / n,
                self.residual.get(x, y) / n,
                dark_threshold,
            )
        })
    }
}

/// Result of fitting the polarizer sinusoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub i_max: f64,
    pub i_min: f64,
    /// Polarization angle in `[0, π)`.
    pub phase: f64,
    /// `false` when the samples carry no measurable modulation.
    pub phase_defined: bool,
    /// `I_min` came out negative and was clamped to zero.
    pub clamped: bool,
}

/// Least-squares fit of `I(a) = c + p·cos 2a + q·sin 2a` to
/// `(polarizer angle, intensity)` samples.
pub fn sinusoid_fit(samples: &[(f64, f64)]) -> Result<SinusoidFit, PolarizationError> {
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for &(a, i) in samples {
        let (s, c) = (2.0 * a).sin_cos();
        let row = [1.0, c, s];
        for r in 0..3 {
            for k in 0..3 {
                ata[r][k] += row[r] * row[k];
            }
            atb[r] += row[r] * i;
        }
    }
    let [offset, p, q] = linalg::solve(ata, atb, 1e-10).ok_or(PolarizationError::RankDeficient)?;
    let amplitude = p.hypot(q);
    let phase_defined = amplitude > 1e-12 * offset.abs().max(1e-300);
    let phase = if phase_defined { wrap_pi(0.5 * q.atan2(p)) } else { 0.0 };
    let i_max = offset + amplitude;
    let raw_min = offset - amplitude;
    Ok(SinusoidFit {
        i_max,
        i_min: raw_min.max(0.0),
        phase,
        phase_defined,
        clamped: raw_min < 0.0,
    })
}

/// What to do when the measured DoP exceeds the model maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SaturationPolicy {
    /// Use the peak angle for both candidates and flag the pixel.
    #[default]
    Clamp,
    /// Report no candidates.
    Strict,
}

/// The (up to) two incidence angles consistent with a measured DoP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidenceCandidates {
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub theta_peak: f64,
    pub rho_max: f64,
    pub saturated: bool,
}

/// Inverts a unimodal DoP curve. Construction locates the peak once so that
/// per-pixel inversion is two bisections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopInverter {
    material: OpticalMaterial,
    theta_peak: f64,
    rho_max: f64,
}

impl DopInverter {
    pub fn new(material: OpticalMaterial) -> Self {
        let theta_peak = golden_section_max(|t| material.dop(t), 0.0, FRAC_PI_2 - GRAZING_EPS, 1e-13);
        Self {
            material,
            theta_peak,
            rho_max: material.dop(theta_peak),
        }
    }

    pub fn material(&self) -> &OpticalMaterial {
        &self.material
    }

    pub fn theta_peak(&self) -> f64 {
        self.theta_peak
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// Both incidence candidates for `rho`, each located to within `tol` rad.
    pub fn invert(&self, rho: f64, tol: f64, policy: SaturationPolicy) -> IncidenceCandidates {
        let mut out = IncidenceCandidates {
            low: None,
            high: None,
            theta_peak: self.theta_peak,
            rho_max: self.rho_max,
            saturated: false,
        };
        if rho > self.rho_max {
            out.saturated = true;
            if policy == SaturationPolicy::Clamp {
                out.low = Some(self.theta_peak);
                out.high = Some(self.theta_peak);
            }
            return out;
        }
        let f = |t: f64| self.material.dop(t);
        let grazing = FRAC_PI_2 - GRAZING_EPS;
        out.low = Some(if rho <= 0.0 {
            0.0
        } else {
            bisect_increasing(f, rho, 0.0, self.theta_peak, tol)
        });
        out.high = Some(if rho <= f(grazing) {
            grazing
        } else {
            // decreasing branch: invert the sign
            bisect_increasing(|t| -f(t), -rho, self.theta_peak, grazing, tol)
        });
        out
    }
}

/// Root of `f(t) = target` for `f` increasing on `[lo, hi]`, clamped to the
/// bracket ends.
fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    if f(lo) >= target {
        return lo;
    }
    if f(hi) <= target {
        return hi;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of a unimodal function on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
