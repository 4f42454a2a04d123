//! Display fringe patterns and their decoding into display coordinates.
//!
//! Phase convention: a display pixel at column `i` of a `w`-pixel-wide panel
//! carries phase `Φ = 2π·f·i/w`, and step `k` of a `K`-step sequence shows
//! `mean + depth·cos(Φ − 2πk/K)`. The `K`-step estimator
//! `atan2(Σ I_k sin(2πk/K), Σ I_k cos(2πk/K))` then returns `Φ` directly.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{DisplayPlane, Vec3};
use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("invalid pattern: {0}")]
    InvalidPattern(&'static str),
    #[error("captured rasters have mismatched dimensions")]
    DimensionMismatch,
    #[error("phase-shift decoding needs at least 3 frames, got {0}")]
    TooFewSteps(usize),
    #[error("frequency ratio {0} is not a positive integer")]
    NonIntegerRatio(f64),
    #[error("fourier configuration: {0}")]
    Configuration(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Axis {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AxisSet {
    U,
    V,
    Both,
}

impl AxisSet {
    pub fn axes(self) -> &'static [Axis] {
        match self {
            AxisSet::U => &[Axis::U],
            AxisSet::V => &[Axis::V],
            AxisSet::Both => &[Axis::U, Axis::V],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum PatternKind {
    /// `steps` shifted sinusoids for every listed frequency (cycles across the
    /// display). A leading frequency of 1 makes the sequence self-unwrapping.
    PhaseShift { steps: usize, frequencies: Vec<f64> },
    /// One frame: `mean + depth·(cos Φ_u + cos Φ_v)/2`.
    CrossSinusoid { carrier_u: f64, carrier_v: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatternSpec {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: PatternKind,
    pub axes: AxisSet,
    pub mean: f64,
    pub depth: f64,
}

impl PatternSpec {
    /// Four steps at 1 and 16 cycles on both axes: 16 frames.
    pub fn multi_shot_default() -> Self {
        Self {
            kind: PatternKind::PhaseShift {
                steps: 4,
                frequencies: vec![1.0, 16.0],
            },
            axes: AxisSet::Both,
            mean: 0.5,
            depth: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if !(self.depth > 0.0 && self.mean - self.depth >= 0.0 && self.mean + self.depth <= 1.0) {
            return Err(CodecError::InvalidPattern(
                "mean ± depth must lie in [0, 1] with depth > 0",
            ));
        }
        match &self.kind {
            PatternKind::PhaseShift { steps, frequencies } => {
                if *steps < 3 {
                    return Err(CodecError::InvalidPattern("phase shifting needs at least 3 steps"));
                }
                if frequencies.is_empty() || frequencies.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
                    return Err(CodecError::InvalidPattern("frequencies must be positive"));
                }
                if frequencies.len() > 1 && frequencies[0] != 1.0 {
                    return Err(CodecError::InvalidPattern(
                        "multi-frequency sequences must start at 1 cycle",
                    ));
                }
            }
            PatternKind::CrossSinusoid { carrier_u, carrier_v } => {
                if !(*carrier_u > 0.0 && *carrier_v > 0.0) {
                    return Err(CodecError::InvalidPattern("carrier frequencies must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn frame_labels(&self) -> Vec<FrameLabel> {
        match &self.kind {
            PatternKind::PhaseShift { steps, frequencies } => {
                let mut out = Vec::new();
                for &axis in self.axes.axes() {
                    for &frequency in frequencies {
                        for step in 0..*steps {
                            out.push(FrameLabel::PhaseShift {
                                axis,
                                frequency,
                                step,
                                steps: *steps,
                            });
                        }
                    }
                }
                out
            }
            PatternKind::CrossSinusoid { carrier_u, carrier_v } => vec![FrameLabel::Cross {
                carrier_u: *carrier_u,
                carrier_v: *carrier_v,
            }],
        }
    }
}

/// Identifies one displayed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum FrameLabel {
    PhaseShift {
        axis: Axis,
        frequency: f64,
        step: usize,
        steps: usize,
    },
    Cross {
        carrier_u: f64,
        carrier_v: f64,
    },
}

/// Display-space phase `2π·f·c/extent` of coordinate `c`.
#[inline]
pub fn display_phase(coord: f64, frequency: f64, extent: usize) -> f64 {
    TAU * frequency * coord / extent as f64
}

impl FrameLabel {
    /// Display intensity of this frame at display pixel `(i, j)`.
    pub fn intensity(&self, spec: &PatternSpec, i: f64, j: f64, display: &DisplayPlane) -> f64 {
        match *self {
            FrameLabel::PhaseShift {
                axis,
                frequency,
                step,
                steps,
            } => {
                let phase = match axis {
                    Axis::U => display_phase(i, frequency, display.width),
                    Axis::V => display_phase(j, frequency, display.height),
                };
                spec.mean + spec.depth * (phase - TAU * step as f64 / steps as f64).cos()
            }
            FrameLabel::Cross { carrier_u, carrier_v } => {
                let pu = display_phase(i, carrier_u, display.width);
                let pv = display_phase(j, carrier_v, display.height);
                spec.mean + spec.depth * 0.5 * (pu.cos() + pv.cos())
            }
        }
    }
}

/// Rendered display frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternFrame {
    pub label: FrameLabel,
    pub raster: Raster<f64>,
}

/// Display rasters for every frame of `spec`, in decode order
/// (axis, then frequency, then step).
pub fn generate_patterns(spec: &PatternSpec, display: &DisplayPlane) -> Result<Vec<PatternFrame>, CodecError> {
    spec.validate()?;
    Ok(spec
        .frame_labels()
        .into_iter()
        .map(|label| PatternFrame {
            label,
            raster: Raster::from_fn(display.width, display.height, |i, j| {
                label.intensity(spec, i as f64, j as f64, display)
            }),
        })
        .collect())
}

/// Decoded phase with per-pixel quality.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub phase: Raster<f64>,
    pub modulation: Raster<f64>,
    /// Unwrapping consistency residual in radians (zero when not unwrapped).
    pub residual: Raster<f64>,
    pub valid: Raster<bool>,
}

impl PhaseMap {
    pub fn dims(&self) -> (usize, usize) {
        self.phase.dims()
    }

    /// Maps wrapped phase into `[0, 2π)`, which is absolute for a
    /// single-period pattern.
    pub fn into_unit_period(mut self) -> Self {
        for p in self.phase.as_mut_slice() {
            *p = p.rem_euclid(TAU);
            if *p >= TAU {
                *p = 0.0;
            }
        }
        self
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v).count()
    }
}

/// Standard `K`-step estimator over equally spaced shifts `2πk/K`.
/// Pixels whose modulation amplitude falls below `modulation_threshold` are
/// invalid.
pub fn decode_phase_shift(frames: &[&Raster<f64>], modulation_threshold: f64) -> Result<PhaseMap, CodecError> {
    let k_steps = frames.len();
    if k_steps < 3 {
        return Err(CodecError::TooFewSteps(k_steps));
    }
    let (w, h) = frames[0].dims();
    if frames.iter().any(|f| f.dims() != (w, h)) {
        return Err(CodecError::DimensionMismatch);
    }
    let shifts: Vec<(f64, f64)> = (0..k_steps)
        .map(|k| (TAU * k as f64 / k_steps as f64).sin_cos())
        .collect();
    let mut phase = Raster::filled(w, h, 0.0);
    let mut modulation = Raster::filled(w, h, 0.0);
    let mut valid = Raster::filled(w, h, false);
    for idx in 0..w * h {
        let (mut num, mut den) = (0.0, 0.0);
        for (f, &(s, c)) in frames.iter().zip(&shifts) {
            let v = f.as_slice()[idx];
            num += v * s;
            den += v * c;
        }
        let amp = 2.0 * num.hypot(den) / k_steps as f64;
        phase.as_mut_slice()[idx] = num.atan2(den);
        modulation.as_mut_slice()[idx] = amp;
        valid.as_mut_slice()[idx] = amp > modulation_threshold && amp.is_finite();
    }
    Ok(PhaseMap {
        phase,
        modulation,
        residual: Raster::filled(w, h, 0.0),
        valid,
    })
}

/// Temporal unwrapping of `high` (wrapped, `ratio` times the frequency of
/// `low_absolute`) against an absolute low-frequency phase.
///
/// Fringe order is `round((ratio·φ_low − φ_high)/2π)`; pixels whose
/// unwrapped phase disagrees with `ratio·φ_low` by more than
/// `residual_threshold` radians are invalidated.
pub fn unwrap_two_frequency(
    low_absolute: &PhaseMap,
    high: &PhaseMap,
    ratio: f64,
    residual_threshold: f64,
) -> Result<PhaseMap, CodecError> {
    if !(ratio >= 1.0 && ratio.fract() == 0.0) {
        return Err(CodecError::NonIntegerRatio(ratio));
    }
    if low_absolute.dims() != high.dims() {
        return Err(CodecError::DimensionMismatch);
    }
    let (w, h) = high.dims();
    let mut out = PhaseMap {
        phase: Raster::filled(w, h, 0.0),
        modulation: high.modulation.clone(),
        residual: Raster::filled(w, h, 0.0),
        valid: Raster::filled(w, h, false),
    };
    for idx in 0..w * h {
        let predicted = ratio * low_absolute.phase.as_slice()[idx];
        let wrapped = high.phase.as_slice()[idx];
        let order = ((predicted - wrapped) / TAU).round();
        let unwrapped = wrapped + TAU * order;
        let residual = (unwrapped - predicted).abs();
        out.phase.as_mut_slice()[idx] = unwrapped;
        out.residual.as_mut_slice()[idx] = residual;
        out.valid.as_mut_slice()[idx] =
            low_absolute.valid.as_slice()[idx] && high.valid.as_slice()[idx] && residual <= residual_threshold;
    }
    Ok(out)
}

/// In-place, unnormalized 2-D discrete Fourier transform over a row-major
/// buffer. Implementations must be deterministic.
pub trait SpectralTransform {
    fn forward(&mut self, data: &mut [Complex64], width: usize, height: usize);
    fn inverse(&mut self, data: &mut [Complex64], width: usize, height: usize);
}

/// Separable direct DFT, `O(W·H·(W+H))`. Reference implementation for small
/// rasters and targets without an FFT library.
#[derive(Debug, Default, Clone, Copy)]
pub struct DirectDft;

impl DirectDft {
    fn transform_lines(data: &mut [Complex64], width: usize, height: usize, sign: f64) {
        let mut scratch = Vec::new();
        // rows
        let tw = twiddles(width, sign);
        for y in 0..height {
            let row = &mut data[y * width..(y + 1) * width];
            dft_line(row, &tw, &mut scratch);
        }
        // columns
        let tw = twiddles(height, sign);
        let mut col = vec![Complex64::new(0.0, 0.0); height];
        for x in 0..width {
            for y in 0..height {
                col[y] = data[y * width + x];
            }
            dft_line(&mut col, &tw, &mut scratch);
            for y in 0..height {
                data[y * width + x] = col[y];
            }
        }
    }
}

fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|m| {
            let (s, c) = (sign * TAU * m as f64 / n as f64).sin_cos();
            Complex64::new(c, s)
        })
        .collect()
}

fn dft_line(line: &mut [Complex64], tw: &[Complex64], scratch: &mut Vec<Complex64>) {
    let n = line.len();
    scratch.clear();
    scratch.extend_from_slice(line);
    for (k, out) in line.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in scratch.iter().enumerate() {
            acc += v * tw[(k * j) % n];
        }
        *out = acc;
    }
}

impl SpectralTransform for DirectDft {
    fn forward(&mut self, data: &mut [Complex64], width: usize, height: usize) {
        Self::transform_lines(data, width, height, -1.0);
    }

    fn inverse(&mut self, data: &mut [Complex64], width: usize, height: usize) {
        Self::transform_lines(data, width, height, 1.0);
    }
}

/// Spatial carrier in cycles across the raster width (`kx`) and height (`ky`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Carrier {
    pub kx: f64,
    pub ky: f64,
}

impl Carrier {
    pub fn magnitude(&self) -> f64 {
        self.kx.hypot(self.ky)
    }

    fn distance(&self, fx: f64, fy: f64) -> f64 {
        (fx - self.kx).hypot(fy - self.ky)
    }

    /// Linear phase `2π(kx·x/W + ky·y/H)` of this carrier at pixel `(x, y)`.
    pub fn ramp(&self, x: f64, y: f64, width: usize, height: usize) -> f64 {
        TAU * (self.kx * x / width as f64 + self.ky * y / height as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierConfig {
    pub carrier_u: Carrier,
    pub carrier_v: Carrier,
    /// Raised-cosine pass-band radius in cycles. `None` gives each lobe half
    /// its distance to the nearest of DC, the other lobe and the conjugates.
    pub bandwidth: Option<f64>,
    /// Border pixels invalidated on every side.
    pub guard: usize,
    pub modulation_threshold: f64,
}

impl FourierConfig {
    /// Distance from `c` to the nearest spectral feature other than itself.
    fn clearance(c: Carrier, other: Carrier) -> f64 {
        let diff = (c.kx - other.kx).hypot(c.ky - other.ky);
        let conj = (c.kx + other.kx).hypot(c.ky + other.ky);
        diff.min(conj).min(c.magnitude())
    }

    /// Pass-band radii for the `u` and `v` lobes.
    pub fn bandwidths(&self) -> (f64, f64) {
        let (u, v) = (self.carrier_u, self.carrier_v);
        match self.bandwidth {
            Some(b) => (b, b),
            None => (0.5 * Self::clearance(u, v), 0.5 * Self::clearance(v, u)),
        }
    }

    fn overlaps(&self) -> bool {
        let (u, v) = (self.carrier_u, self.carrier_v);
        let (bu, bv) = self.bandwidths();
        let diff = (u.kx - v.kx).hypot(u.ky - v.ky);
        let conj = (u.kx + v.kx).hypot(u.ky + v.ky);
        bu > u.magnitude() || bv > v.magnitude() || bu + bv > diff.min(conj)
    }
}

/// Signed frequency of DFT bin `k` of an `n`-point transform.
#[inline]
fn bin_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Single-frame Fourier-transform demodulation of a cross-fringe image.
///
/// Returns wrapped phase maps for the `u` and `v` fringes. Each is the angle
/// of the analytic signal obtained by band-passing one carrier lobe, so it
/// includes the carrier ramp; [`carrier_deviation`] removes it.
pub fn decode_fourier_single_shot<T: SpectralTransform + ?Sized>(
    image: &Raster<f64>,
    config: &FourierConfig,
    transform: &mut T,
) -> Result<(PhaseMap, PhaseMap), CodecError> {
    let (w, h) = image.dims();
    let (bw_u, bw_v) = config.bandwidths();
    if !(bw_u > 0.0 && bw_v > 0.0) {
        return Err(CodecError::Configuration("bandwidth must be positive"));
    }
    for c in [config.carrier_u, config.carrier_v] {
        if c.kx.abs() > (w / 2) as f64 || c.ky.abs() > (h / 2) as f64 {
            return Err(CodecError::Configuration("carrier beyond the Nyquist limit"));
        }
        if c.magnitude() < 4.0 {
            return Err(CodecError::Configuration("raster spans fewer than 4 carrier periods"));
        }
    }
    if config.overlaps() {
        return Err(CodecError::Configuration("carrier lobes overlap each other or DC"));
    }

    let mut spectrum: Vec<Complex64> = image.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform.forward(&mut spectrum, w, h);
    let norm = 1.0 / (w * h) as f64;

    let mut demodulate = |carrier: Carrier, bw: f64| {
        let mut band = spectrum.clone();
        for q in 0..h {
            let fy = bin_frequency(q, h);
            for p in 0..w {
                let r = carrier.distance(bin_frequency(p, w), fy);
                let weight = if r < bw { 0.5 * (1.0 + (PI * r / bw).cos()) } else { 0.0 };
                band[q * w + p] *= weight;
            }
        }
        transform.inverse(&mut band, w, h);
        let mut phase = Raster::filled(w, h, 0.0);
        let mut modulation = Raster::filled(w, h, 0.0);
        let mut valid = Raster::filled(w, h, false);
        for y in 0..h {
            for x in 0..w {
                let a = band[y * w + x] * norm;
                // a ≈ (B/2)·e^{iΦ}
                let amp = 2.0 * a.norm();
                *phase.get_mut(x, y) = a.im.atan2(a.re);
                *modulation.get_mut(x, y) = amp;
                let inside = x >= config.guard && y >= config.guard && x + config.guard < w && y + config.guard < h;
                *valid.get_mut(x, y) = inside && amp > config.modulation_threshold;
            }
        }
        PhaseMap {
            phase,
            modulation,
            residual: Raster::filled(w, h, 0.0),
            valid,
        }
    };
    let u = demodulate(config.carrier_u, bw_u);
    let v = demodulate(config.carrier_v, bw_v);
    Ok((u, v))
}

/// Wrapped difference between a decoded phase and the linear carrier ramp.
pub fn carrier_deviation(map: &PhaseMap, carrier: Carrier) -> Raster<f64> {
    let (w, h) = map.dims();
    Raster::from_fn(w, h, |x, y| {
        wrap_signed(map.phase.get(x, y) - carrier.ramp(x as f64, y as f64, w, h))
    })
}

/// Wraps to `(−π, π]`.
pub fn wrap_signed(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Camera pixel → display coordinates, with validity and decode residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    pub coords: Raster<[f64; 2]>,
    pub valid: Raster<bool>,
    pub residual: Raster<f64>,
}

impl CorrespondenceMap {
    pub fn dims(&self) -> (usize, usize) {
        self.coords.dims()
    }

    /// World position of the display point seen at camera pixel `(x, y)`.
    pub fn display_point(&self, x: usize, y: usize, display: &DisplayPlane) -> Option<Vec3> {
        if !*self.valid.get(x, y) {
            return None;
        }
        let [i, j] = *self.coords.get(x, y);
        display.index_to_point(i, j).ok()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v).count()
    }
}

/// Converts absolute phases to display pixel coordinates
/// `i = φ_u·w_d/(2π f_u)`, `j = φ_v·h_d/(2π f_v)`. Coordinates outside the
/// panel are invalid.
pub fn phase_to_display_coords(
    phase_u: &PhaseMap,
    phase_v: &PhaseMap,
    freq_u: f64,
    freq_v: f64,
    display: &DisplayPlane,
) -> Result<CorrespondenceMap, CodecError> {
    if phase_u.dims() != phase_v.dims() {
        return Err(CodecError::DimensionMismatch);
    }
    let (w, h) = phase_u.dims();
    let mut coords = Raster::filled(w, h, [0.0; 2]);
    let mut valid = Raster::filled(w, h, false);
    let mut residual = Raster::filled(w, h, 0.0);
    let su = display.width as f64 / (TAU * freq_u);
    let sv = display.height as f64 / (TAU * freq_v);
    for idx in 0..w * h {
        let i = phase_u.phase.as_slice()[idx] * su;
        let j = phase_v.phase.as_slice()[idx] * sv;
        coords.as_mut_slice()[idx] = [i, j];
        residual.as_mut_slice()[idx] = phase_u.residual.as_slice()[idx].max(phase_v.residual.as_slice()[idx]);
        valid.as_mut_slice()[idx] =
            phase_u.valid.as_slice()[idx] && phase_v.valid.as_slice()[idx] && display.contains(i, j);
    }
    Ok(CorrespondenceMap {
        coords,
        valid,
        residual,
    })
}

/// Mean carrier of `frequency_ratio · φ_low` over the valid pixels of an
/// absolute low-frequency phase map, in cycles across the raster. Used to
/// aim the Fourier band-pass when the fringe geometry on the sensor is not
/// known in advance.
pub fn estimate_carrier(low_absolute: &PhaseMap, frequency_ratio: f64) -> Option<Carrier> {
    let (w, h) = low_absolute.dims();
    let (mut gx, mut gy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let ok =
                *low_absolute.valid.get(x, y) && *low_absolute.valid.get(x + 1, y) && *low_absolute.valid.get(x, y + 1);
            if !ok {
                continue;
            }
            let p = *low_absolute.phase.get(x, y);
            let dx = wrap_signed(low_absolute.phase.get(x + 1, y) - p);
            let dy = wrap_signed(low_absolute.phase.get(x, y + 1) - p);
            gx += dx;
            gy += dy;
            n += 1;
        }
    }
    (n > 0).then(|| Carrier {
        kx: frequency_ratio * gx / n as f64 * w as f64 / TAU,
        ky: frequency_ratio * gy / n as f64 * h as f64 / TAU,
    })
}

/// Clears every pixel within `radius` (Chebyshev distance) of an invalid
/// pixel or of the raster border.
pub fn erode_mask(mask: &Raster<bool>, radius: usize) -> Raster<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    // separable: rows, then columns
    let pass = |src: &Raster<bool>, horizontal: bool| {
        Raster::from_fn(w, h, |x, y| {
            let (c, n) = if horizontal { (x, w) } else { (y, h) };
            if c < radius || c + radius >= n {
                return false;
            }
            (c - radius..=c + radius).all(|k| if horizontal { *src.get(k, y) } else { *src.get(x, k) })
        })
    };
    pass(&pass(mask, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn display() -> DisplayPlane {
        DisplayPlane::new(Vec3::ZERO, Vec3::X, Vec3::Y, 0.25, 64, 48).unwrap()
    }

    fn single(v: &[f64]) -> Vec<Raster<f64>> {
        v.iter().map(|&x| Raster::filled(1, 1, x)).collect()
    }

    #[test]
    fn four_step_closed_forms() {
        let frames = single(&[1.5, 1.0, 0.5, 1.0]);
        let refs: Vec<_> = frames.iter().collect();
        let m = decode_phase_shift(&refs, 0.1).unwrap();
        assert_eq!(*m.phase.get(0, 0), 0.0);
        assert!((m.modulation.get(0, 0) - 0.5).abs() < 1e-15);
        let frames = single(&[1.0, 1.5, 1.0, 0.5]);
        let refs: Vec<_> = frames.iter().collect();
        let m = decode_phase_shift(&refs, 0.1).unwrap();
        assert!((m.phase.get(0, 0) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn low_modulation_is_invalid() {
        let frames = single(&[1.0, 1.0, 1.0, 1.0]);
        let refs: Vec<_> = frames.iter().collect();
        let m = decode_phase_shift(&refs, 0.01).unwrap();
        assert!(!m.valid.get(0, 0));
        assert!(matches!(
            decode_phase_shift(&refs[..2], 0.01),
            Err(CodecError::TooFewSteps(2))
        ));
    }

    #[test]
    fn generated_patterns_shapes() {
        let disp = display();
        let spec = PatternSpec {
            kind: PatternKind::PhaseShift {
                steps: 4,
                frequencies: vec![1.0],
            },
            axes: AxisSet::U,
            mean: 0.5,
            depth: 0.4,
        };
        let frames = generate_patterns(&spec, &disp).unwrap();
        assert_eq!(frames.len(), 4);
        for f in &frames {
            for x in 0..disp.width {
                let col0 = *f.raster.get(x, 0);
                assert!((0..disp.height).all(|y| *f.raster.get(x, y) == col0));
            }
        }
        // one full cycle across i for step 0: maximum at 0, minimum at w/2
        let r = &frames[0].raster;
        assert!((r.get(0, 0) - 0.9).abs() < 1e-15);
        assert!((r.get(32, 0) - 0.1).abs() < 1e-12);

        let cross = PatternSpec {
            kind: PatternKind::CrossSinusoid {
                carrier_u: 8.0,
                carrier_v: 8.0,
            },
            axes: AxisSet::Both,
            mean: 0.5,
            depth: 0.5,
        };
        let frames = generate_patterns(&cross, &disp).unwrap();
        assert_eq!(frames.len(), 1);
        let vals = frames[0].raster.as_slice();
        assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((vals.iter().cloned().fold(f64::MIN, f64::max) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = PatternSpec::multi_shot_default();
        spec.mean = 0.7;
        assert!(spec.validate().is_err());
        let bad_k = PatternSpec {
            kind: PatternKind::PhaseShift {
                steps: 2,
                frequencies: vec![1.0],
            },
            ..PatternSpec::multi_shot_default()
        };
        assert!(bad_k.validate().is_err());
        let bad_f = PatternSpec {
            kind: PatternKind::PhaseShift {
                steps: 4,
                frequencies: vec![4.0, 16.0],
            },
            ..PatternSpec::multi_shot_default()
        };
        assert!(bad_f.validate().is_err());
    }

    #[test]
    fn decode_reproduces_generation_phase() {
        let disp = display();
        for steps in [3, 4, 5, 8] {
            let spec = PatternSpec {
                kind: PatternKind::PhaseShift {
                    steps,
                    frequencies: vec![3.0],
                },
                axes: AxisSet::Both,
                mean: 0.5,
                depth: 0.5,
            };
            let frames = generate_patterns(&spec, &disp).unwrap();
            for (a, axis_frames) in frames.chunks(steps).enumerate() {
                let refs: Vec<_> = axis_frames.iter().map(|f| &f.raster).collect();
                let m = decode_phase_shift(&refs, 1e-3).unwrap();
                for (x, y, p) in m.phase.iter_xy() {
                    let c = if a == 0 { x } else { y };
                    let extent = if a == 0 { disp.width } else { disp.height };
                    let truth = display_phase(c as f64, 3.0, extent);
                    assert!(wrap_signed(p - truth).abs() < 1e-9);
                }
                // scaling the captured intensities leaves the phase untouched
                let scaled: Vec<_> = axis_frames.iter().map(|f| f.raster.map(|v| v * 3.7)).collect();
                let srefs: Vec<_> = scaled.iter().collect();
                let ms = decode_phase_shift(&srefs, 1e-3).unwrap();
                for (p, q) in m.phase.as_slice().iter().zip(ms.phase.as_slice()) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }

    fn ramp_map(values: Vec<f64>) -> PhaseMap {
        let n = values.len();
        PhaseMap {
            phase: Raster::from_vec(n, 1, values).unwrap(),
            modulation: Raster::filled(n, 1, 1.0),
            residual: Raster::filled(n, 1, 0.0),
            valid: Raster::filled(n, 1, true),
        }
    }

    #[test]
    fn two_frequency_unwrap_is_exact() {
        let ratio = 16.0;
        let truth: Vec<f64> = (0..1000).map(|k| TAU * ratio * k as f64 / 1000.0).collect();
        let low = ramp_map(truth.iter().map(|t| t / ratio).collect());
        let high = ramp_map(truth.iter().map(|&t| wrap_signed(t)).collect());
        let out = unwrap_two_frequency(&low, &high, ratio, 0.5).unwrap();
        for (a, b) in out.phase.as_slice().iter().zip(&truth) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(out.valid.as_slice().iter().all(|&v| v));
        // order steps by one at every wrap of the high phase
        for k in 0..1000 {
            let order = ((out.phase.as_slice()[k] - high.phase.as_slice()[k]) / TAU).round();
            let expect = ((truth[k] + PI) / TAU).floor();
            assert_eq!(order, expect);
        }
        assert!(matches!(
            unwrap_two_frequency(&low, &high, 2.5, 0.5),
            Err(CodecError::NonIntegerRatio(_))
        ));
    }

    #[test]
    fn unwrap_rejects_inconsistent_pixels() {
        let low = ramp_map(vec![1.0]);
        let high = ramp_map(vec![wrap_signed(16.0 + PI * 0.9)]);
        let out = unwrap_two_frequency(&low, &high, 16.0, 0.5).unwrap();
        assert!(!out.valid.get(0, 0));
        assert!(*out.residual.get(0, 0) > 2.0);
    }

    #[test]
    fn display_coords_and_bounds() {
        let disp = display();
        let u = ramp_map(vec![0.0, TAU * 2.0 * 10.0 / 64.0, TAU * 2.0]);
        let v = ramp_map(vec![0.0, TAU * 2.0 * 5.0 / 48.0, 0.0]);
        let c = phase_to_display_coords(&u, &v, 2.0, 2.0, &disp).unwrap();
        assert_eq!(*c.coords.get(0, 0), [0.0, 0.0]);
        let [i, j] = *c.coords.get(1, 0);
        assert!((i - 10.0).abs() < 1e-12 && (j - 5.0).abs() < 1e-12);
        // φ_u = 2π f_u is the far edge, which is off the panel
        assert!((c.coords.get(2, 0)[0] - 64.0).abs() < 1e-12);
        assert!(*c.valid.get(1, 0) && !*c.valid.get(2, 0));
    }

    fn cross_image(w: usize, h: usize, cu: Carrier, cv: Carrier, v_depth: f64) -> Raster<f64> {
        Raster::from_fn(w, h, |x, y| {
            let pu = cu.ramp(x as f64, y as f64, w, h) + 0.3;
            let pv = cv.ramp(x as f64, y as f64, w, h) - 1.1;
            0.5 + 0.25 * pu.cos() + v_depth * pv.cos()
        })
    }

    #[test]
    fn direct_dft_round_trip() {
        let img = Raster::from_fn(6, 5, |x, y| (x * 7 + y * 3) as f64 * 0.1);
        let mut buf: Vec<_> = img.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        DirectDft.forward(&mut buf, 6, 5);
        let dc: f64 = img.as_slice().iter().sum();
        assert!((buf[0].re - dc).abs() < 1e-12);
        DirectDft.inverse(&mut buf, 6, 5);
        for (a, b) in buf.iter().zip(img.as_slice()) {
            assert!((a.re / 30.0 - b).abs() < 1e-12 && (a.im / 30.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_recovers_linear_carriers() {
        let (w, h) = (64, 48);
        let cu = Carrier { kx: 8.0, ky: 0.0 };
        let cv = Carrier { kx: 0.0, ky: 8.0 };
        let img = cross_image(w, h, cu, cv, 0.25);
        let cfg = FourierConfig {
            carrier_u: cu,
            carrier_v: cv,
            bandwidth: None,
            guard: 4,
            modulation_threshold: 0.05,
        };
        let (u, v) = decode_fourier_single_shot(&img, &cfg, &mut DirectDft).unwrap();
        let du = carrier_deviation(&u, cu);
        let dv = carrier_deviation(&v, cv);
        for y in 4..h - 4 {
            for x in 4..w - 4 {
                assert!(*u.valid.get(x, y) && *v.valid.get(x, y));
                assert!((du.get(x, y) - 0.3).abs() < 1e-3);
                assert!((dv.get(x, y) + 1.1).abs() < 1e-3);
            }
        }
        assert!(!u.valid.get(0, 0));
    }

    #[test]
    fn fourier_flags_missing_axis() {
        let (w, h) = (64, 48);
        let cu = Carrier { kx: 8.0, ky: 0.0 };
        let cv = Carrier { kx: 0.0, ky: 8.0 };
        let img = cross_image(w, h, cu, cv, 0.0);
        let cfg = FourierConfig {
            carrier_u: cu,
            carrier_v: cv,
            bandwidth: None,
            guard: 4,
            modulation_threshold: 0.05,
        };
        let (u, v) = decode_fourier_single_shot(&img, &cfg, &mut DirectDft).unwrap();
        assert!(u.valid_count() > 0);
        assert_eq!(v.valid_count(), 0);
    }

    #[test]
    fn fourier_rejects_overlapping_lobes() {
        let img = Raster::filled(64, 64, 0.5);
        let cfg = FourierConfig {
            carrier_u: Carrier { kx: 8.0, ky: 0.0 },
            carrier_v: Carrier { kx: 9.0, ky: 0.0 },
            bandwidth: Some(4.0),
            guard: 0,
            modulation_threshold: 0.0,
        };
        assert!(matches!(
            decode_fourier_single_shot(&img, &cfg, &mut DirectDft),
            Err(CodecError::Configuration(_))
        ));
        let near_dc = FourierConfig {
            carrier_u: Carrier { kx: 2.0, ky: 0.0 },
            carrier_v: Carrier { kx: 0.0, ky: 12.0 },
            bandwidth: Some(1.0),
            ..cfg
        };
        assert!(decode_fourier_single_shot(&img, &near_dc, &mut DirectDft).is_err());

        let auto = FourierConfig {
            carrier_u: Carrier { kx: 8.0, ky: 0.0 },
            carrier_v: Carrier { kx: 0.0, ky: 25.0 },
            bandwidth: None,
            ..cfg
        };
        assert_eq!(auto.bandwidths(), (4.0, 12.5));
        assert!(!auto.overlaps());
    }

    #[test]
    fn carrier_estimate_from_prior() {
        let (w, h) = (40, 30);
        let prior = PhaseMap {
            phase: Raster::from_fn(w, h, |x, y| 0.01 * x as f64 + 0.02 * y as f64),
            modulation: Raster::filled(w, h, 1.0),
            residual: Raster::filled(w, h, 0.0),
            valid: Raster::filled(w, h, true),
        };
        let c = estimate_carrier(&prior, 10.0).unwrap();
        assert!((c.kx - 0.1 * 40.0 / TAU).abs() < 1e-12);
        assert!((c.ky - 0.2 * 30.0 / TAU).abs() < 1e-12);
    }

    #[test]
    fn erosion_trims_edges_and_holes() {
        let mut m = Raster::filled(9, 9, true);
        *m.get_mut(4, 4) = false;
        let e = erode_mask(&m, 1);
        assert!(!e.get(0, 3) && !e.get(8, 3));
        assert!(!e.get(3, 3) && !e.get(5, 5) && !e.get(4, 4));
        assert!(*e.get(1, 1) && *e.get(6, 2));
        assert_eq!(erode_mask(&m, 0), m);
        let count = e.as_slice().iter().filter(|&&v| v).count();
        assert_eq!(count, 7 * 7 - 9);
    }
}
