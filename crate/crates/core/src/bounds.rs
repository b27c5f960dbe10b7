//! Objective and bounds.
//!
//! The objective counts bearings that have at least one 3D point within the
//! inlier threshold at a pose. Over a domain `Cr x Ct` (rotation cube,
//! translation cuboid) it is bounded from below by its value at the centre
//! and from above by widening the threshold with rotation and translation
//! uncertainty angles, or, in [`BoundMode::Gamma`], by the exact minimum
//! angle between each bearing ray and the translated point box.
//!
//! Rotations are handled on the bearing side: `angle(f, R(p - t))` equals
//! `angle(R^T f, p - t)`, so each rotation cube rotates the `N` bearings once
//! and the translation-side data is shared by every rotation cube.

use serde::{Deserialize, Serialize};

use crate::domain::{Cuboid, TranslationDomain};
use crate::error::{Error, Result};
use crate::geometry::{
    angle_between, min_angle_ray_segment_unchecked, ray_intersects_box, rodrigues, Bearing, Pose, RotationVec, Vec3,
};
use crate::scalar::Real;

/// Default number of grid cells per face edge when certifying the tight
/// rotation uncertainty angle (pitch `delta / 8`).
pub const DEFAULT_PSI_R_CELLS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T> {
    pub bearings: Vec<Bearing<T>>,
    pub points: Vec<Vec3<T>>,
    /// Inlier threshold in radians.
    pub theta: T,
    pub domain: TranslationDomain<T>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(
        bearings: Vec<Bearing<T>>,
        points: Vec<Vec3<T>>,
        theta: T,
        domain: TranslationDomain<T>,
    ) -> Result<Self> {
        if !(theta > T::zero() && theta < T::PI()) {
            return Err(Error::InvalidInstance(format!(
                "theta must lie in (0, pi), got {theta}"
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInstance(format!("point {i} is not finite")));
        }
        Ok(Self {
            bearings,
            points,
            theta,
            domain,
        })
    }

    pub fn n_bearings(&self) -> usize {
        self.bearings.len()
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Whether the pose's camera centre is in the domain and respects `zeta`.
    pub fn admits(&self, pose: &Pose<T>) -> bool {
        self.domain.admits(pose.t, &self.points)
    }

    pub fn cast<U: Real>(&self) -> ProblemInstance<U> {
        ProblemInstance {
            bearings: self.bearings.iter().map(|b| b.cast()).collect(),
            points: self.points.iter().map(|p| p.cast()).collect(),
            theta: U::lit(self.theta.to_f64_lossy()),
            domain: self.domain.cast(),
        }
    }
}

/// Which upper-bound family to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Sphere-based uncertainty angles for both rotation and translation.
    WeakSphere,
    /// Cuboid-based uncertainty angles (surface-certified rotation angle,
    /// vertex-maximised translation angle).
    TightCuboid,
    /// Exact ray-to-box minimum angle for translation plus the tight
    /// rotation angle.
    #[default]
    Gamma,
}

/// Inlier count at `pose`. A point at the camera centre never counts.
pub fn objective<T: Real>(pose: &Pose<T>, inst: &ProblemInstance<T>) -> usize {
    let rot = rodrigues(pose.r);
    let transformed: Vec<Vec3<T>> = inst.points.iter().map(|&p| rot.apply(p - pose.t)).collect();
    inst.bearings
        .iter()
        .filter(|f| {
            let f = f.direction();
            transformed
                .iter()
                .any(|&x| x.norm_squared() > T::zero() && angle_between(f, x) <= inst.theta)
        })
        .count()
}

/// Lower bound over a domain: the objective at its centre.
pub fn lower_bound<T: Real>(center_pose: &Pose<T>, inst: &ProblemInstance<T>) -> usize {
    objective(center_pose, inst)
}

/// `min(sqrt(3) delta, pi)` for a rotation cube of half-width `delta`.
pub fn psi_r_weak<T: Real>(cube: &Cuboid<T>) -> T {
    (cube.half_widths.norm()).min(T::PI())
}

/// Certified upper bound on `max_{r in cube} angle(R_r v, R_r0 v)`.
pub fn psi_r_tight<T: Real>(v: Vec3<T>, cube: &Cuboid<T>) -> Result<T> {
    psi_r_tight_with(v, cube, DEFAULT_PSI_R_CELLS)
}

pub fn psi_r_tight_with<T: Real>(v: Vec3<T>, cube: &Cuboid<T>, cells: usize) -> Result<T> {
    let u = v.normalize().ok_or(Error::ZeroVector)?;
    Ok(SurfaceSampler::new(cube, cells, false).bound(u))
}

/// Vertex-maximised translation uncertainty angle; `pi` when `p` is inside.
pub fn psi_t<T: Real>(p: Vec3<T>, ct: &Cuboid<T>) -> T {
    if ct.contains(p) {
        return T::PI();
    }
    let axis = p - ct.center;
    ct.vertices()
        .iter()
        .map(|&t| angle_between(p - t, axis))
        .fold(T::zero(), T::max)
}

/// Sphere-based translation uncertainty angle with radius `|half_widths|`.
pub fn psi_t_weak<T: Real>(p: Vec3<T>, ct: &Cuboid<T>) -> T {
    let rho = ct.half_widths.norm();
    let d = (p - ct.center).norm();
    if rho <= d {
        if d == T::zero() {
            return T::zero();
        }
        (rho / d).asin()
    } else {
        T::PI()
    }
}

/// Minimum over `t` in `ct` of `angle(f, p - t)`: zero when the ray meets
/// the box `p - ct`, otherwise the minimum over its 12 edges.
pub fn min_angle_to_translated_box<T: Real>(f: Vec3<T>, p: Vec3<T>, ct: &Cuboid<T>) -> T {
    let bx = Cuboid {
        center: p - ct.center,
        half_widths: ct.half_widths,
    };
    min_angle_to_box(f, &bx)
}

pub(crate) fn min_angle_to_box<T: Real>(f: Vec3<T>, bx: &Cuboid<T>) -> T {
    if ray_intersects_box(f, bx) {
        return T::zero();
    }
    bx.skeleton()
        .iter()
        .map(|&(a, b)| min_angle_ray_segment_unchecked(f, a, b))
        .fold(T::PI(), T::min)
}

/// Vertex data of a box for repeated largest-cosine queries from the origin.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxSkeleton<T> {
    bx: Cuboid<T>,
    /// Vertex `k` takes `+h` on x, y, z when bits 4, 2, 1 of `k` are set.
    verts: [Vec3<T>; 8],
    norm2: [T; 8],
}

impl<T: Real> BoxSkeleton<T> {
    pub fn new(bx: Cuboid<T>) -> Self {
        let h = bx.half_widths;
        let verts = std::array::from_fn(|k| {
            let s = |bit: usize, w: T| if k & bit != 0 { w } else { -w };
            bx.center + Vec3::new(s(4, h.x), s(2, h.y), s(1, h.z))
        });
        let norm2 = verts.map(|v: Vec3<T>| v.norm_squared());
        Self { bx, verts, norm2 }
    }

    /// Largest cosine between `f` and a point of the box, or any value of at
    /// least `enough` once one is found. One if the ray meets the box;
    /// otherwise the maximum is at a vertex or at the single interior
    /// stationary point of an edge.
    pub fn max_cos(&self, f: Vec3<T>, enough: T) -> T {
        if ray_intersects_box(f, &self.bx) {
            return T::one();
        }
        let fv: [T; 8] = std::array::from_fn(|k| f.dot(self.verts[k]));
        let mut best = -T::one();
        for k in 0..8 {
            if self.norm2[k] > T::zero() {
                best = best.max(fv[k] / self.norm2[k].sqrt());
            } else {
                return T::one();
            }
        }
        if best >= enough {
            return best;
        }
        let h2 = self.bx.half_widths * T::lit(2.0);
        for (axis, bit) in [(0, 4), (1, 2), (2, 1)] {
            let len = h2[axis];
            if len <= T::zero() {
                continue;
            }
            let fd = f[axis] * len;
            let dd = len * len;
            for k in (0..8).filter(|k| k & bit == 0) {
                let a = self.verts[k];
                let (fa, aa) = (fv[k], self.norm2[k]);
                let ad = a[axis] * len;
                let den = fd * ad - fa * dd;
                if den == T::zero() {
                    continue;
                }
                let s = (fa * ad - fd * aa) / den;
                if s > T::zero() && s < T::one() {
                    let n2 = aa + s * (T::lit(2.0) * ad + s * dd);
                    if n2 > T::zero() {
                        best = best.max((fa + s * fd) / n2.sqrt());
                    }
                }
            }
        }
        best
    }
}

/// Upper bound of the objective over `cr x ct`.
pub fn upper_bound<T: Real>(cr: &Cuboid<T>, ct: &Cuboid<T>, inst: &ProblemInstance<T>, mode: BoundMode) -> usize {
    let rot = RotationCubeData::compute(cr, &inst.bearings, mode, DEFAULT_PSI_R_CELLS);
    let trans = TranslationCubeData::relaxed(ct, &inst.points, mode);
    count_bounds(&rot, &trans, inst.theta).1
}

/// Bounds used inside the rotation search for rotation cube `cr`.
///
/// With `with_psi_t = false` only the centre of `ct` is used (translation
/// uncertainty zero) and the lower bound is the objective at `(r0, t0)`.
/// With `with_psi_t = true` the translation uncertainty of `ct` is folded in
/// according to `mode`, and both values bound the objective over `cr x ct`
/// from above at the rotation-cube centre and over the whole cube.
pub fn rbb_bounds<T: Real>(
    cr: &Cuboid<T>,
    ct: &Cuboid<T>,
    inst: &ProblemInstance<T>,
    mode: BoundMode,
    with_psi_t: bool,
) -> (usize, usize) {
    let rot = RotationCubeData::compute(cr, &inst.bearings, mode, DEFAULT_PSI_R_CELLS);
    let trans = if with_psi_t {
        TranslationCubeData::relaxed(ct, &inst.points, mode)
    } else {
        TranslationCubeData::exact(ct.center, &inst.points)
    };
    count_bounds(&rot, &trans, inst.theta)
}

/// Grid over the surface of a rotation cube, stored as the symmetric parts
/// of the relative rotations so that `cos(angle)` for a unit vector is one
/// quadratic form per sample.
pub(crate) struct SurfaceSampler<T> {
    forms: Vec<[T; 6]>,
    margin: T,
    weak: T,
}

impl<T: Real> SurfaceSampler<T> {
    /// `inverse = false` bounds `angle(R_r v, R_r0 v)`; `inverse = true`
    /// bounds `angle(R_r^T v, R_r0^T v)`, the displacement of a bearing
    /// rotated back into the world frame.
    pub(crate) fn new(cube: &Cuboid<T>, cells: usize, inverse: bool) -> Self {
        let weak = psi_r_weak(cube);
        let n = cells.max(1);
        if weak == T::zero() {
            return Self {
                forms: Vec::new(),
                margin: T::zero(),
                weak,
            };
        }
        let nt = T::from_usize_lossy(n);
        let lo = cube.min_corner();
        let pitch = cube.half_widths * (T::lit(2.0) / nt);
        let mut sorted = pitch.to_array();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        // farthest a face point can be from its nearest grid node
        let margin = (sorted[0] * sorted[0] + sorted[1] * sorted[1]).sqrt() * T::lit(0.5);

        let r0 = rodrigues(RotationVec(cube.center)).0;
        let mut forms = Vec::with_capacity(6 * (n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let boundary = i == 0 || i == n || j == 0 || j == n || k == 0 || k == n;
                    if !boundary {
                        continue;
                    }
                    let node = Vec3::new(
                        lo.x + pitch.x * T::from_usize_lossy(i),
                        lo.y + pitch.y * T::from_usize_lossy(j),
                        lo.z + pitch.z * T::from_usize_lossy(k),
                    );
                    let rs = rodrigues(RotationVec(node)).0;
                    let m = if inverse {
                        rs.mul_mat(&r0.transpose())
                    } else {
                        r0.transpose().mul_mat(&rs)
                    };
                    let h = T::lit(0.5);
                    forms.push([
                        m.m[0][0],
                        m.m[1][1],
                        m.m[2][2],
                        (m.m[0][1] + m.m[1][0]) * h,
                        (m.m[0][2] + m.m[2][0]) * h,
                        (m.m[1][2] + m.m[2][1]) * h,
                    ]);
                }
            }
        }
        Self { forms, margin, weak }
    }

    /// Bound for a unit vector `u`.
    pub(crate) fn bound(&self, u: Vec3<T>) -> T {
        if self.weak == T::zero() {
            return T::zero();
        }
        let (x, y, z) = (u.x, u.y, u.z);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let two = T::lit(2.0);
        let (xy, xz, yz) = (two * x * y, two * x * z, two * y * z);
        let min_cos = self.forms.iter().fold(T::one(), |acc, s| {
            let q = s[0] * xx + s[1] * yy + s[2] * zz + s[3] * xy + s[4] * xz + s[5] * yz;
            acc.min(q)
        });
        let sampled = min_cos.max(-T::one()).min(T::one()).acos();
        // acos loses accuracy near 1
        let guard = T::epsilon().sqrt() * T::lit(4.0);
        (sampled + self.margin + guard).min(self.weak)
    }
}

/// Per-rotation-cube data: bearings rotated into the world frame by the
/// centre rotation, and each bearing's rotation uncertainty angle.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationCubeData<T> {
    pub center: RotationVec<T>,
    pub rotated: Vec<Vec3<T>>,
    pub psi_r: Vec<T>,
}

impl<T: Real> RotationCubeData<T> {
    pub fn compute(cube: &Cuboid<T>, bearings: &[Bearing<T>], mode: BoundMode, cells: usize) -> Self {
        let rotated = rotate_bearings(cube.center, bearings);
        let psi_r = match mode {
            BoundMode::WeakSphere => vec![psi_r_weak(cube); bearings.len()],
            BoundMode::TightCuboid | BoundMode::Gamma => tight_psi_r_for_bearings(cube, bearings, cells),
        };
        Self {
            center: RotationVec(cube.center),
            rotated,
            psi_r,
        }
    }
}

pub(crate) fn rotate_bearings<T: Real>(center: Vec3<T>, bearings: &[Bearing<T>]) -> Vec<Vec3<T>> {
    let r0 = rodrigues(RotationVec(center));
    bearings.iter().map(|f| r0.apply_inverse(f.direction())).collect()
}

pub(crate) fn tight_psi_r_for_bearings<T: Real>(cube: &Cuboid<T>, bearings: &[Bearing<T>], cells: usize) -> Vec<T> {
    let sampler = SurfaceSampler::new(cube, cells, true);
    bearings.iter().map(|f| sampler.bound(f.direction())).collect()
}

/// How the translation cuboid enters the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    /// Fixed translation (uncertainty zero).
    None,
    /// Widen the threshold by the translation uncertainty angle.
    Angle,
    /// Minimise over the translation box exactly.
    Box,
}

/// Per-translation-cuboid data: `p - t0` for each point and its translation
/// uncertainty angle.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationCubeData<T> {
    pub cuboid: Cuboid<T>,
    pub rel: Vec<Vec3<T>>,
    pub psi_t: Vec<T>,
    pub relaxation: Relaxation,
}

impl<T: Real> TranslationCubeData<T> {
    pub fn exact(t0: Vec3<T>, points: &[Vec3<T>]) -> Self {
        Self {
            cuboid: Cuboid::point(t0),
            rel: points.iter().map(|&p| p - t0).collect(),
            psi_t: vec![T::zero(); points.len()],
            relaxation: Relaxation::None,
        }
    }

    pub fn relaxed(ct: &Cuboid<T>, points: &[Vec3<T>], mode: BoundMode) -> Self {
        let psi_t = points
            .iter()
            .map(|&p| match mode {
                BoundMode::WeakSphere => psi_t_weak(p, ct),
                BoundMode::TightCuboid | BoundMode::Gamma => psi_t(p, ct),
            })
            .collect();
        Self {
            cuboid: *ct,
            rel: points.iter().map(|&p| p - ct.center).collect(),
            psi_t,
            relaxation: match mode {
                BoundMode::Gamma => Relaxation::Box,
                _ => Relaxation::Angle,
            },
        }
    }
}

/// `(lower, upper)` counts for one rotation cube against one translation
/// cuboid. Each bearing counts at most once.
pub fn count_bounds<T: Real>(rot: &RotationCubeData<T>, trans: &TranslationCubeData<T>, theta: T) -> (usize, usize) {
    let mut lower = 0;
    let mut upper = 0;
    for (f, &psi_r) in rot.rotated.iter().zip(&rot.psi_r) {
        let (lo, up) = bearing_bounds(*f, psi_r, trans, theta);
        lower += lo as usize;
        upper += up as usize;
    }
    (lower, upper)
}

/// Only the upper count; skips the lower test.
pub fn count_upper<T: Real>(rot: &RotationCubeData<T>, trans: &TranslationCubeData<T>, theta: T) -> usize {
    count_bounds(rot, trans, theta).1
}

#[inline]
fn bearing_bounds<T: Real>(f: Vec3<T>, psi_r: T, trans: &TranslationCubeData<T>, theta: T) -> (bool, bool) {
    let mut lo = false;
    let mut up = false;
    for (&rel, &psi_t) in trans.rel.iter().zip(&trans.psi_t) {
        if trans.relaxation == Relaxation::None && rel.norm_squared() == T::zero() {
            continue;
        }
        let a = angle_between(f, rel);
        match trans.relaxation {
            Relaxation::None | Relaxation::Angle => {
                if a <= theta + psi_t {
                    lo = true;
                    up = true;
                } else if a <= theta + psi_t + psi_r {
                    up = true;
                }
            }
            Relaxation::Box => {
                if a > theta + psi_r + psi_t {
                    continue;
                }
                if a <= theta {
                    lo = true;
                    up = true;
                } else {
                    let bx = Cuboid {
                        center: rel,
                        half_widths: trans.cuboid.half_widths,
                    };
                    let m = min_angle_to_box(f, &bx);
                    if m <= theta {
                        lo = true;
                        up = true;
                    } else if m <= theta + psi_r {
                        up = true;
                    }
                }
            }
        }
        if lo {
            break;
        }
    }
    (lo, up)
}
