//! Camera, display and ray geometry, plus the specular bisector construction.
//!
//! World units are millimetres. The camera looks along its local `+z` with
//! `x` to the right and `y` down the image; pixel centres sit on integer
//! coordinates.

use core::f64::consts::FRAC_PI_2;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("pixel ({u}, {v}) lies outside the sensor")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("display index ({i}, {j}) lies outside the display")]
    DisplayOutOfBounds { i: f64, j: f64 },
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a zero or
    /// non-finite vector.
    pub fn normalize(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Angle in `[0, π]` between two nonzero vectors.
    pub fn angle_to(self, o: Vec3) -> f64 {
        // atan2 form keeps precision near 0 and π.
        self.cross(o).norm().atan2(self.dot(o))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn rotation_x(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn rotation_y(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn rotation_z(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation whose columns are the given camera axes expressed in world
    /// coordinates.
    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Mat3 {
        Mat3([[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Orthonormal with determinant +1, within `tol` entrywise.
    pub fn is_rotation(&self, tol: f64) -> bool {
        let p = self.mul_mat(&self.transpose());
        let ortho = (0..3).all(|i| {
            (0..3).all(|j| {
                let e = if i == j { 1.0 } else { 0.0 };
                (p.0[i][j] - e).abs() <= tol
            })
        });
        ortho && (self.determinant() - 1.0).abs() <= tol
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        if !rotation.is_rotation(1e-9) {
            return Err(GeometryError::InvalidParameter(
                "pose rotation is not orthonormal with det +1",
            ));
        }
        Ok(Self { rotation, translation })
    }

    /// Pose of a camera at `eye` whose optical axis points at `target`, with
    /// image `y` as close as possible to `down`.
    pub fn look_at(eye: Vec3, target: Vec3, down: Vec3) -> Result<Self, GeometryError> {
        let z = (target - eye)
            .normalize()
            .ok_or(GeometryError::Degenerate("look_at target coincides with eye"))?;
        let x = down
            .cross(z)
            .normalize()
            .ok_or(GeometryError::Degenerate("look_at down vector parallel to view"))?;
        let y = z.cross(x);
        Ok(Self {
            rotation: Mat3::from_columns(x, y, z),
            translation: eye,
        })
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn apply_inverse(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(p - self.translation)
    }
}

/// Ideal pinhole camera; no lens distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: RigidTransform,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidParameter("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidParameter("resolution must be nonzero"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidParameter("principal point outside sensor"));
        }
        if !pose.rotation.is_rotation(1e-9) {
            return Err(GeometryError::InvalidParameter(
                "pose rotation is not orthonormal with det +1",
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Square pixels, principal point at the sensor centre, focal length set
    /// from the horizontal half field of view.
    pub fn from_half_fov(
        half_fov_x: f64,
        width: usize,
        height: usize,
        pose: RigidTransform,
    ) -> Result<Self, GeometryError> {
        let f = 0.5 * width as f64 / half_fov_x.tan();
        Self::new(
            f,
            f,
            0.5 * (width as f64 - 1.0),
            0.5 * (height as f64 - 1.0),
            width,
            height,
            pose,
        )
    }

    /// Camera centre `O` in world coordinates.
    #[inline]
    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u <= self.width as f64 - 0.5 && v <= self.height as f64 - 0.5
    }

    /// Camera-frame direction through `(u, v)` scaled to unit depth, i.e.
    /// the point `C` on the normalized image plane.
    pub fn normalized_point(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Unit world-frame direction of the ray from `O` through pixel `(u, v)`.
    pub fn pixel_to_ray(&self, u: f64, v: f64) -> Result<Vec3, GeometryError> {
        if !self.in_bounds(u, v) {
            return Err(GeometryError::PixelOutOfBounds { u, v });
        }
        let local = self.normalized_point(u, v);
        // local.z == 1 so the norm is never zero.
        Ok(self.pose.rotation.mul_vec(local / local.norm()))
    }

    /// Forward projection of a world point. `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let c = self.pose.apply_inverse(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// World-frame optical axis.
    pub fn principal_axis(&self) -> Vec3 {
        self.pose.rotation.mul_vec(Vec3::Z)
    }

    /// Angle between the ray through `(u, v)` and the optical axis.
    pub fn field_angle(&self, u: f64, v: f64) -> f64 {
        let p = self.normalized_point(u, v);
        Vec3::Z.angle_to(p)
    }

    /// World direction expressed in the camera frame.
    pub fn to_camera_frame(&self, dir: Vec3) -> Vec3 {
        self.pose.rotation.transpose().mul_vec(dir)
    }

    pub fn to_world_frame(&self, dir: Vec3) -> Vec3 {
        self.pose.rotation.mul_vec(dir)
    }
}

/// Planar emissive display. Pixel `(i, j)` sits at `origin + pitch·(i·u + j·v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DisplayPlane {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub pitch: f64,
    pub width: usize,
    pub height: usize,
}

/// Intersection of a ray with the display plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplayHit {
    pub i: f64,
    pub j: f64,
    pub point: Vec3,
    /// Ray parameter of the hit.
    pub distance: f64,
}

impl DisplayPlane {
    pub fn new(origin: Vec3, u: Vec3, v: Vec3, pitch: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        if (u.norm() - 1.0).abs() > 1e-9 || (v.norm() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidParameter("display basis vectors must be unit"));
        }
        if u.dot(v).abs() > 1e-9 {
            return Err(GeometryError::InvalidParameter(
                "display basis vectors must be orthogonal",
            ));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(GeometryError::InvalidParameter("display pitch must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidParameter("display resolution must be nonzero"));
        }
        Ok(Self {
            origin,
            u,
            v,
            pitch,
            width,
            height,
        })
    }

    /// Display of the given physical size centred at `center`, facing along
    /// `facing`, with its `u` axis as close as possible to `u_hint`.
    pub fn centered(
        center: Vec3,
        facing: Vec3,
        u_hint: Vec3,
        pitch: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let n = facing
            .normalize()
            .ok_or(GeometryError::InvalidParameter("display facing vector is zero"))?;
        let u = (u_hint - n * u_hint.dot(n))
            .normalize()
            .ok_or(GeometryError::InvalidParameter("display u hint parallel to facing"))?;
        let v = n.cross(u);
        let origin = center - u * (0.5 * pitch * (width as f64 - 1.0)) - v * (0.5 * pitch * (height as f64 - 1.0));
        Self::new(origin, u, v, pitch, width, height)
    }

    /// Unit normal `u × v`.
    pub fn normal(&self) -> Vec3 {
        self.u.cross(self.v)
    }

    /// True between the first and last pixel centres, where the displayed
    /// image is defined.
    pub fn contains(&self, i: f64, j: f64) -> bool {
        i >= 0.0 && j >= 0.0 && i <= (self.width - 1) as f64 && j <= (self.height - 1) as f64
    }

    /// World position of display coordinates `(i, j)`.
    pub fn index_to_point(&self, i: f64, j: f64) -> Result<Vec3, GeometryError> {
        if !self.contains(i, j) {
            return Err(GeometryError::DisplayOutOfBounds { i, j });
        }
        Ok(self.origin + (self.u * i + self.v * j) * self.pitch)
    }

    /// Display coordinates of a world point assumed to lie on the plane.
    pub fn point_to_index(&self, p: Vec3) -> (f64, f64) {
        let r = p - self.origin;
        (r.dot(self.u) / self.pitch, r.dot(self.v) / self.pitch)
    }

    /// Forward intersection of `origin + t·dir`, `t > 0`, with the display
    /// plane. The hit is returned even when it falls outside the panel.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<DisplayHit> {
        let n = self.normal();
        let denom = dir.dot(n);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = (self.origin - origin).dot(n) / denom;
        if !(t > 0.0) {
            return None;
        }
        let point = origin + dir * t;
        let (i, j) = self.point_to_index(point);
        Some(DisplayHit {
            i,
            j,
            point,
            distance: t,
        })
    }
}

/// Admissible range of `s = |OS|` along a unit camera ray.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorkingDistance {
    pub s_min: f64,
    pub s_max: f64,
}

impl WorkingDistance {
    pub fn new(s_min: f64, s_max: f64) -> Result<Self, GeometryError> {
        if !(s_min > 0.0 && s_min < s_max && s_max.is_finite()) {
            return Err(GeometryError::InvalidParameter(
                "working distance needs 0 < s_min < s_max < inf",
            ));
        }
        Ok(Self { s_min, s_max })
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.s_min && s <= self.s_max
    }
}

fn unit_rays(s: Vec3, c: Vec3, d: Vec3) -> Result<(Vec3, Vec3), GeometryError> {
    let to_c = (c - s)
        .normalize()
        .ok_or(GeometryError::Degenerate("surface point coincides with camera"))?;
    let to_d = (d - s)
        .normalize()
        .ok_or(GeometryError::Degenerate("surface point coincides with display point"))?;
    if (to_c + to_d).norm() < 1e-12 {
        return Err(GeometryError::Degenerate("camera and display directions are antipodal"));
    }
    Ok((to_c, to_d))
}

/// Specular normal at `s` that reflects light from display point `d` towards
/// camera point `c` (chip point or centre, which are collinear with `s`).
pub fn bisector_normal(s: Vec3, c: Vec3, d: Vec3) -> Result<Vec3, GeometryError> {
    let (to_c, to_d) = unit_rays(s, c, d)?;
    (to_c + to_d)
        .normalize()
        .ok_or(GeometryError::Degenerate("bisector vanished"))
}

/// Incidence angle θ at `s`: half the angle between `s→c` and `s→d`.
pub fn half_angle(s: Vec3, c: Vec3, d: Vec3) -> Result<f64, GeometryError> {
    let (to_c, to_d) = unit_rays(s, c, d)?;
    let theta = 0.5 * to_c.angle_to(to_d);
    if theta >= FRAC_PI_2 {
        return Err(GeometryError::Degenerate("grazing reflection"));
    }
    Ok(theta)
}

/// Mirror reflection of a propagation direction about a unit normal.
#[inline]
pub fn reflect(dir: Vec3, n: Vec3) -> Vec3 {
    dir - n * (2.0 * dir.dot(n))
}
