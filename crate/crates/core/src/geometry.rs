//! Elementary 3D geometry: vectors, angle-axis rotations, bearings and the
//! angular queries used by the bounds (ray/segment and ray/box).

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::domain::Cuboid;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zeros() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    #[inline]
    pub fn normalize(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    #[inline]
    pub fn zip_map(self, o: Self, f: impl Fn(T, T) -> T) -> Self {
        Self::new(f(self.x, o.x), f(self.y, o.y), f(self.z, o.z))
    }

    #[inline]
    pub fn abs(self) -> Self {
        self.map(T::abs)
    }

    #[inline]
    pub fn max_component(self) -> T {
        self.x.max(self.y).max(self.z)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_rows(r0: Vec3<T>, r1: Vec3<T>, r2: Vec3<T>) -> Self {
        Self {
            m: [r0.to_array(), r1.to_array(), r2.to_array()],
        }
    }

    pub fn from_cols(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        Self::from_rows(c0, c1, c2).transpose()
    }

    #[inline]
    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3::from_array(self.m[i])
    }

    #[inline]
    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `selfᵀ v` without forming the transpose.
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Self { m: out }
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> T {
        self.row(0).dot(self.row(1).cross(self.row(2)))
    }

    pub fn skew(v: Vec3<T>) -> Self {
        let z = T::zero();
        Self {
            m: [[z, -v.z, v.y], [v.z, z, -v.x], [-v.y, v.x, z]],
        }
    }
}

/// Unit-norm bearing vector of an image feature in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bearing<T>(Vec3<T>);

impl<T: Real> Bearing<T> {
    /// Normalises `v`; fails on the zero vector.
    pub fn new(v: Vec3<T>) -> Result<Self> {
        v.normalize().map(Self).ok_or(Error::ZeroVector)
    }

    #[inline]
    pub fn direction(&self) -> Vec3<T> {
        self.0
    }

    pub fn cast<U: Real>(self) -> Bearing<U> {
        let v = self.0.cast::<U>();
        Bearing(v.normalize().unwrap_or(v))
    }
}

/// Angle-axis rotation vector: angle `|r|`, axis `r / |r|`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotationVec<T>(pub Vec3<T>);

impl<T: Real> RotationVec<T> {
    pub fn identity() -> Self {
        Self(Vec3::zeros())
    }

    #[inline]
    pub fn vec(&self) -> Vec3<T> {
        self.0
    }

    #[inline]
    pub fn angle(&self) -> T {
        self.0.norm()
    }

    #[inline]
    pub fn to_matrix(&self) -> RotationMatrix<T> {
        rodrigues(*self)
    }

    /// The representative of the same rotation inside the closed pi-ball, with
    /// the antipodal ambiguity on the surface resolved towards a non-negative
    /// first nonzero component.
    pub fn canonical(&self) -> Self {
        let pi = T::PI();
        let two_pi = pi + pi;
        let mut v = self.0;
        let mut n = v.norm();
        if !n.is_finite() {
            return *self;
        }
        if n > two_pi {
            let turns = (n / two_pi).floor();
            v = v * ((n - turns * two_pi) / n);
            n = v.norm();
        }
        if n > pi {
            // angle n about a == angle (2pi - n) about -a
            v = v * ((n - two_pi) / n);
            n = v.norm();
        }
        if (pi - n).abs() <= T::lit(1e-9) {
            let first = [v.x, v.y, v.z]
                .into_iter()
                .find(|c| c.abs() > T::lit(1e-12))
                .unwrap_or(T::zero());
            if first < T::zero() {
                v = -v;
            }
        }
        Self(v)
    }

    pub fn cast<U: Real>(self) -> RotationVec<U> {
        RotationVec(self.0.cast())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix<T>(pub Mat3<T>);

impl<T: Real> RotationMatrix<T> {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3<T> {
        &self.0
    }

    #[inline]
    pub fn apply(&self, v: Vec3<T>) -> Vec3<T> {
        self.0.mul_vec(v)
    }

    /// Applies the inverse rotation.
    #[inline]
    pub fn apply_inverse(&self, v: Vec3<T>) -> Vec3<T> {
        self.0.tr_mul_vec(v)
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0.mul_mat(&other.0))
    }

    /// Angle-axis extraction (matrix logarithm), canonicalised.
    pub fn to_rotation_vec(&self) -> RotationVec<T> {
        log_map(&self.0)
    }

    /// Geodesic angle between two rotations.
    pub fn angle_to(&self, other: &Self) -> T {
        let rel = self.inverse().compose(other);
        let c = (rel.0.trace() - T::one()) / T::lit(2.0);
        let w = vee(&rel.0);
        // atan2 form stays accurate near 0 and pi
        (w.norm()).atan2(c)
    }
}

/// Camera pose: world point `p` maps to `R_r (p - t)` in the camera frame, so
/// `t` is the camera centre in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose<T> {
    pub r: RotationVec<T>,
    pub t: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(r: RotationVec<T>, t: Vec3<T>) -> Self {
        Self { r, t }
    }

    #[inline]
    pub fn transform(&self, p: Vec3<T>) -> Vec3<T> {
        self.r.to_matrix().apply(p - self.t)
    }

    pub fn canonical(&self) -> Self {
        Self::new(self.r.canonical(), self.t)
    }

    pub fn cast<U: Real>(self) -> Pose<U> {
        Pose::new(self.r.cast(), self.t.cast())
    }
}

/// Pinhole intrinsics, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Result<Self> {
        if !(fx > T::zero() && fy > T::zero()) || !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidConfig("focal lengths must be positive".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Projects a camera-frame point to pixels (no depth check).
    pub fn project(&self, x: Vec3<T>) -> (T, T) {
        (self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy)
    }
}

/// Rotation matrix `exp([r]x)` by Rodrigues' formula.
pub fn rodrigues<T: Real>(r: RotationVec<T>) -> RotationMatrix<T> {
    let v = r.0;
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = Mat3::skew(v);
    let k2 = k.mul_mat(&k);
    let (a, b) = if theta < T::lit(1e-8) {
        // Taylor: sin(x)/x ~ 1 - x^2/6, (1-cos x)/x^2 ~ 1/2 - x^2/24
        (T::one() - theta2 / T::lit(6.0), T::lit(0.5) - theta2 / T::lit(24.0))
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    let mut m = Mat3::identity();
    for i in 0..3 {
        for j in 0..3 {
            m.m[i][j] += a * k.m[i][j] + b * k2.m[i][j];
        }
    }
    RotationMatrix(m)
}

fn vee<T: Real>(m: &Mat3<T>) -> Vec3<T> {
    let h = T::lit(0.5);
    Vec3::new(
        (m.m[2][1] - m.m[1][2]) * h,
        (m.m[0][2] - m.m[2][0]) * h,
        (m.m[1][0] - m.m[0][1]) * h,
    )
}

fn log_map<T: Real>(m: &Mat3<T>) -> RotationVec<T> {
    let w = vee(m); // sin(theta) * axis
    let s = w.norm();
    let c = ((m.trace() - T::one()) / T::lit(2.0)).max(-T::one()).min(T::one());
    let theta = s.atan2(c);
    if theta < T::lit(1e-8) {
        return RotationVec(w);
    }
    if theta < T::PI() - T::lit(1e-3) {
        return RotationVec(w * (theta / s));
    }
    // Near pi: sym(R) - cI = (1 - c) a a^T; take its largest column.
    let b = |i: usize, j: usize| {
        let s = (m.m[i][j] + m.m[j][i]) * T::lit(0.5);
        if i == j {
            s - c
        } else {
            s
        }
    };
    let k = (0..3)
        .max_by(|&i, &j| b(i, i).partial_cmp(&b(j, j)).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let col = Vec3::new(b(0, k), b(1, k), b(2, k));
    let mut axis = col.normalize().unwrap_or(Vec3::new(T::one(), T::zero(), T::zero()));
    if axis.dot(w) < T::zero() {
        axis = -axis;
    }
    RotationVec(axis * theta).canonical()
}

/// Angle between two nonzero vectors in `[0, pi]`.
pub fn angular_distance<T: Real>(u: Vec3<T>, v: Vec3<T>) -> Result<T> {
    if u.norm_squared() <= T::zero() || v.norm_squared() <= T::zero() {
        return Err(Error::ZeroVector);
    }
    Ok(angle_between(u, v))
}

/// `atan2(|u x v|, u . v)`; returns 0 when either argument is zero.
#[inline]
pub fn angle_between<T: Real>(u: Vec3<T>, v: Vec3<T>) -> T {
    u.cross(v).norm().atan2(u.dot(v))
}

/// Normalised `K^-1 (u, v, 1)`.
pub fn bearing_from_pixel<T: Real>(k: &Intrinsics<T>, u: T, v: T) -> Bearing<T> {
    let d = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, T::one());
    // the z component is 1, so the vector is never zero
    Bearing(d / d.norm())
}

/// Minimum angle between the direction `f` and the points of segment `[a, b]`.
///
/// Along `x(s) = a + s d` the stationarity condition of `(f.x)/|x|` is linear
/// in `s`, so the minimum is at an endpoint or at the single root.
pub fn min_angle_ray_segment<T: Real>(f: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> Result<T> {
    let d = b - a;
    let dd = d.dot(d);
    let aa = a.dot(a);
    if dd <= T::zero() {
        if aa <= T::zero() {
            return Err(Error::SegmentThroughOrigin);
        }
        return Ok(angle_between(f, a));
    }
    // closest approach of the segment to the origin
    let s0 = (-a.dot(d) / dd).max(T::zero()).min(T::one());
    let closest = a + d * s0;
    let scale = aa.max(b.dot(b)).sqrt();
    if closest.norm() <= scale * T::epsilon() * T::lit(16.0) {
        return Err(Error::SegmentThroughOrigin);
    }
    Ok(min_angle_ray_segment_unchecked(f, a, b))
}

/// [`min_angle_ray_segment`] without the origin check.
#[inline]
pub fn min_angle_ray_segment_unchecked<T: Real>(f: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> T {
    let d = b - a;
    let mut best = angle_between(f, a).min(angle_between(f, b));
    let fa = f.dot(a);
    let fd = f.dot(d);
    let ad = a.dot(d);
    let aa = a.dot(a);
    let dd = d.dot(d);
    let den = fd * ad - fa * dd;
    if den != T::zero() {
        let s = (fa * ad - fd * aa) / den;
        if s > T::zero() && s < T::one() {
            best = best.min(angle_between(f, a + d * s));
        }
    }
    best
}

/// Whether the ray `{s f : s >= 0}` meets the box (slab method). A box that
/// contains the origin is always hit.
pub fn ray_intersects_box<T: Real>(f: Vec3<T>, bx: &Cuboid<T>) -> bool {
    let mut t_min = T::zero();
    let mut t_max = T::infinity();
    for i in 0..3 {
        let lo = bx.center[i] - bx.half_widths[i];
        let hi = bx.center[i] + bx.half_widths[i];
        let fi = f[i];
        if fi == T::zero() {
            if lo > T::zero() || hi < T::zero() {
                return false;
            }
        } else {
            let (mut t1, mut t2) = (lo / fi, hi / fi);
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            t_min = t_min.max(t1);
            t_max = t_max.min(t2);
            if t_min > t_max {
                return false;
            }
        }
    }
    true
}
