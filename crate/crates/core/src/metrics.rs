//! Accuracy measures against ground truth.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{PinholeCamera, Vec3};
use crate::linalg;
use crate::raster::Raster;
use crate::reconstruct::FusionSummary;
use crate::sum::Compensated;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no pixels to evaluate")]
    EmptyMask,
    #[error("rasters have mismatched dimensions")]
    DimensionMismatch,
    #[error("sphere fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("points are coplanar or otherwise degenerate")]
    DegeneratePoints,
}

/// Angle between unit normals in degrees (`arccos` of the clamped dot
/// product, evaluated through `atan2` for accuracy at small angles).
pub fn angular_error_deg(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).clamp(-1.0, 1.0)).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorStats {
    pub count: usize,
    pub rmse: f64,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl ErrorStats {
    /// Statistics of non-negative errors. Percentiles use the nearest-rank
    /// rule on the sorted sample.
    pub fn from_errors(mut errors: Vec<f64>) -> Result<Self, MetricsError> {
        if errors.is_empty() {
            return Err(MetricsError::EmptyMask);
        }
        errors.sort_by(f64::total_cmp);
        let n = errors.len();
        let sq: Compensated = errors.iter().map(|e| e * e).collect();
        let sum: Compensated = errors.iter().copied().collect();
        let rank = |p: f64| errors[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Ok(Self {
            count: n,
            rmse: (sq.value() / n as f64).sqrt(),
            mean: sum.value() / n as f64,
            p50: rank(0.5),
            p95: rank(0.95),
            max: errors[n - 1],
        })
    }
}

fn check<T, U>(a: &Raster<T>, b: &Raster<U>) -> Result<(), MetricsError> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(MetricsError::DimensionMismatch)
    }
}

/// Per-pixel angular error in degrees wherever the mask is set and both
/// normals exist.
pub fn normal_error_map(
    estimated: &Raster<Option<Vec3>>,
    truth: &Raster<Option<Vec3>>,
    mask: &Raster<bool>,
) -> Result<Raster<Option<f64>>, MetricsError> {
    check(estimated, truth)?;
    check(estimated, mask)?;
    Ok(Raster::from_fn(estimated.width(), estimated.height(), |x, y| {
        if !*mask.get(x, y) {
            return None;
        }
        Some(angular_error_deg((*estimated.get(x, y))?, (*truth.get(x, y))?))
    }))
}

pub fn normal_rmse(
    estimated: &Raster<Option<Vec3>>,
    truth: &Raster<Option<Vec3>>,
    mask: &Raster<bool>,
) -> Result<ErrorStats, MetricsError> {
    let map = normal_error_map(estimated, truth, mask)?;
    ErrorStats::from_errors(map.as_slice().iter().flatten().copied().collect())
}

/// Absolute depth error in mm over the mask.
pub fn depth_rmse(
    estimated: &Raster<Option<f64>>,
    truth: &Raster<Option<f64>>,
    mask: &Raster<bool>,
) -> Result<ErrorStats, MetricsError> {
    check(estimated, truth)?;
    check(estimated, mask)?;
    let mut errors = Vec::new();
    for (x, y, m) in mask.iter_xy() {
        if !*m {
            continue;
        }
        if let (Some(a), Some(b)) = (*estimated.get(x, y), *truth.get(x, y)) {
            errors.push((a - b).abs());
        }
    }
    ErrorStats::from_errors(errors)
}

/// The `fraction` of mask pixels nearest the mask centroid (ties broken by
/// raster order).
pub fn central_subset(mask: &Raster<bool>, fraction: f64) -> Raster<bool> {
    let pix: Vec<(usize, usize)> = mask.iter_xy().filter(|(_, _, m)| **m).map(|(x, y, _)| (x, y)).collect();
    let mut out = Raster::filled(mask.width(), mask.height(), false);
    if pix.is_empty() {
        return out;
    }
    let n = pix.len() as f64;
    let cx = pix.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cy = pix.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let mut ranked: Vec<(f64, usize, usize)> = pix
        .iter()
        .map(|&(x, y)| ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2), x, y))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    let keep = ((fraction.clamp(0.0, 1.0) * n).ceil() as usize).min(ranked.len());
    for &(_, x, y) in &ranked[..keep] {
        *out.get_mut(x, y) = true;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SphereFit {
    pub center: Vec3,
    pub radius: f64,
    /// RMS orthogonal distance of the points to the sphere.
    pub rms_residual: f64,
    pub points: usize,
}

/// Least-squares sphere: algebraic fit of `|p|² = 2p·c + k` on centred,
/// scaled coordinates, then Gauss-Newton on the orthogonal distances.
pub fn fit_sphere(points: &[Vec3]) -> Result<SphereFit, MetricsError> {
    let n = points.len();
    if n < 4 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let mut mean = Vec3::ZERO;
    {
        let (mut sx, mut sy, mut sz) = (Compensated::default(), Compensated::default(), Compensated::default());
        for p in points {
            sx.add(p.x);
            sy.add(p.y);
            sz.add(p.z);
        }
        mean.x = sx.value() / n as f64;
        mean.y = sy.value() / n as f64;
        mean.z = sz.value() / n as f64;
    }
    let scale = (points.iter().map(|p| (*p - mean).norm_squared()).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(MetricsError::DegeneratePoints);
    }
    let q: Vec<Vec3> = points.iter().map(|p| (*p - mean) / scale).collect();

    if planar(&q) {
        return Err(MetricsError::DegeneratePoints);
    }

    let mut ata = [[0.0; 4]; 4];
    let mut atb = [0.0; 4];
    for p in &q {
        let row = [2.0 * p.x, 2.0 * p.y, 2.0 * p.z, 1.0];
        let rhs = p.norm_squared();
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * rhs;
        }
    }
    let sol = linalg::solve(ata, atb, 1e-13).ok_or(MetricsError::DegeneratePoints)?;
    let mut c = Vec3::new(sol[0], sol[1], sol[2]);
    let r2 = sol[3] + c.norm_squared();
    if !(r2 > 0.0) {
        return Err(MetricsError::DegeneratePoints);
    }
    let mut r = r2.sqrt();

    for _ in 0..50 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for p in &q {
            let v = *p - c;
            let dist = v.norm();
            if dist == 0.0 {
                continue;
            }
            let u = v / dist;
            let row = [-u.x, -u.y, -u.z, -1.0];
            let res = dist - r;
            for i in 0..4 {
                for j in 0..4 {
                    jtj[i][j] += row[i] * row[j];
                }
                jtr[i] -= row[i] * res;
            }
        }
        let Some(step) = linalg::solve(jtj, jtr, 1e-14) else {
            break;
        };
        c += Vec3::new(step[0], step[1], step[2]);
        r += step[3];
        let size = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        if size < 1e-15 {
            break;
        }
    }
    if !(r > 0.0) {
        return Err(MetricsError::DegeneratePoints);
    }
    let sq: Compensated = q.iter().map(|p| ((*p - c).norm() - r).powi(2)).collect();
    Ok(SphereFit {
        center: mean + c * scale,
        radius: r * scale,
        rms_residual: (sq.value() / n as f64).sqrt() * scale,
        points: n,
    })
}

/// True when the centred, unit-RMS cloud has (numerically) no extent along
/// some direction: the covariance determinant vanishes relative to the
/// trace cubed.
fn planar(q: &[Vec3]) -> bool {
    let mut cov = [[0.0; 3]; 3];
    for p in q {
        let a = [p.x, p.y, p.z];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += a[i] * a[j];
            }
        }
    }
    let m = crate::geometry::Mat3(cov);
    let trace = cov[0][0] + cov[1][1] + cov[2][2];
    m.determinant().abs() <= 1e-18 * trace.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfileBin {
    /// Field-angle bin bounds, degrees.
    pub lo: f64,
    pub hi: f64,
    pub mean_error: f64,
    pub count: usize,
}

/// Mean angular error per field-angle bin of width `bin_deg`, skipping
/// empty bins.
pub fn field_angle_profile(
    errors: &Raster<Option<f64>>,
    camera: &PinholeCamera,
    bin_deg: f64,
) -> Result<Vec<ProfileBin>, MetricsError> {
    if errors.dims() != (camera.width, camera.height) {
        return Err(MetricsError::DimensionMismatch);
    }
    let mut bins: Vec<(Compensated, usize)> = Vec::new();
    for (x, y, e) in errors.iter_xy() {
        let Some(e) = e else { continue };
        let fa = camera.field_angle(x as f64, y as f64).to_degrees();
        let k = (fa / bin_deg) as usize;
        if bins.len() <= k {
            bins.resize(k + 1, (Compensated::default(), 0));
        }
        bins[k].0.add(*e);
        bins[k].1 += 1;
    }
    let out: Vec<ProfileBin> = bins
        .into_iter()
        .enumerate()
        .filter(|(_, (_, c))| *c > 0)
        .map(|(k, (s, c))| ProfileBin {
            lo: k as f64 * bin_deg,
            hi: (k + 1) as f64 * bin_deg,
            mean_error: s.value() / c as f64,
            count: c,
        })
        .collect();
    if out.is_empty() {
        return Err(MetricsError::EmptyMask);
    }
    Ok(out)
}

/// Least-squares slope of mean error against bin centre, weighted by count.
pub fn profile_slope(profile: &[ProfileBin]) -> f64 {
    let w: f64 = profile.iter().map(|b| b.count as f64).sum();
    if w == 0.0 {
        return 0.0;
    }
    let xm = profile
        .iter()
        .map(|b| b.count as f64 * 0.5 * (b.lo + b.hi))
        .sum::<f64>()
        / w;
    let ym = profile.iter().map(|b| b.count as f64 * b.mean_error).sum::<f64>() / w;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for b in profile {
        let dx = 0.5 * (b.lo + b.hi) - xm;
        sxy += b.count as f64 * dx * (b.mean_error - ym);
        sxx += b.count as f64 * dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationReport {
    /// Degrees.
    pub normal: ErrorStats,
    /// Degrees, over the central half of the evaluated pixels.
    pub normal_central: ErrorStats,
    /// mm.
    pub depth: ErrorStats,
    pub sphere: Option<SphereFit>,
    /// Fitted radius minus the reference radius, µm.
    pub radius_error_um: Option<f64>,
    /// Evaluated pixels over ground-truth pixels.
    pub valid_fraction: f64,
    pub status: FusionSummary,
}
