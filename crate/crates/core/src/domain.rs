//! Search-domain parametrisation: axis-aligned cuboids, octree branching,
//! the rotation cube circumscribing the pi-ball, and the translation domain
//! with its minimum-range restriction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

/// `{x : |x_i - c_i| <= delta_i, i = 1..3}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid<T> {
    pub center: Vec3<T>,
    pub half_widths: Vec3<T>,
}

impl<T: Real> Cuboid<T> {
    pub fn new(center: Vec3<T>, half_widths: Vec3<T>) -> Result<Self> {
        if !center.is_finite() || !half_widths.is_finite() {
            return Err(Error::InvalidCuboid("non-finite component".into()));
        }
        if half_widths.x < T::zero() || half_widths.y < T::zero() || half_widths.z < T::zero() {
            return Err(Error::InvalidCuboid("negative half-width".into()));
        }
        Ok(Self { center, half_widths })
    }

    pub fn cube(center: Vec3<T>, half_width: T) -> Result<Self> {
        Self::new(center, Vec3::splat(half_width))
    }

    pub fn point(center: Vec3<T>) -> Self {
        Self {
            center,
            half_widths: Vec3::zeros(),
        }
    }

    #[inline]
    pub fn min_corner(&self) -> Vec3<T> {
        self.center - self.half_widths
    }

    #[inline]
    pub fn max_corner(&self) -> Vec3<T> {
        self.center + self.half_widths
    }

    #[inline]
    pub fn max_half_width(&self) -> T {
        self.half_widths.max_component()
    }

    /// Closed containment, with a few ulps of slack so that points produced
    /// by rounding at a shared face belong to both neighbours.
    pub fn contains(&self, x: Vec3<T>) -> bool {
        let d = (x - self.center).abs();
        let tol = T::epsilon() * T::lit(4.0);
        (0..3).all(|i| d[i] <= self.half_widths[i] + tol * (self.center[i].abs() + self.half_widths[i]))
    }

    pub fn volume(&self) -> T {
        let w = self.half_widths * T::lit(2.0);
        w.x * w.y * w.z
    }

    /// Volume measured only over the non-degenerate axes (1 for a point).
    pub fn measure(&self) -> T {
        let mut m = T::one();
        for i in 0..3 {
            if self.half_widths[i] > T::zero() {
                m *= self.half_widths[i] * T::lit(2.0);
            }
        }
        m
    }

    pub fn closest_point(&self, x: Vec3<T>) -> Vec3<T> {
        x.zip_map(self.min_corner(), T::max).zip_map(self.max_corner(), T::min)
    }

    pub fn distance_to(&self, x: Vec3<T>) -> T {
        (self.closest_point(x) - x).norm()
    }

    /// Distance from `x` to the farthest point of the cuboid.
    pub fn max_distance_to(&self, x: Vec3<T>) -> T {
        let d = (x - self.center).abs() + self.half_widths;
        d.norm()
    }

    /// Octree split: halves every non-degenerate axis. Zero-width axes are
    /// never split, so a flat cuboid yields 4 (or 2) children.
    pub fn subdivide(&self) -> Result<Vec<Self>> {
        let h = self.half_widths;
        if !(h.x > T::zero() || h.y > T::zero() || h.z > T::zero()) {
            return Err(Error::DegenerateCuboid);
        }
        let half = T::lit(0.5);
        let child_h = h * half;
        let offsets = |w: T| -> Vec<T> {
            if w > T::zero() {
                vec![-w * half, w * half]
            } else {
                vec![T::zero()]
            }
        };
        let (ox, oy, oz) = (offsets(h.x), offsets(h.y), offsets(h.z));
        let mut out = Vec::with_capacity(8);
        for &dx in &ox {
            for &dy in &oy {
                for &dz in &oz {
                    out.push(Self {
                        center: self.center + Vec3::new(dx, dy, dz),
                        half_widths: child_h,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Splits the widest axis in two.
    pub fn bisect_widest(&self) -> Result<(Self, Self)> {
        let h = self.half_widths;
        let axis = if h.x >= h.y && h.x >= h.z {
            0
        } else if h.y >= h.z {
            1
        } else {
            2
        };
        if h[axis] <= T::zero() {
            return Err(Error::DegenerateCuboid);
        }
        let mut hw = h.to_array();
        hw[axis] *= T::lit(0.5);
        let mut off = [T::zero(); 3];
        off[axis] = hw[axis];
        let off = Vec3::from_array(off);
        let hw = Vec3::from_array(hw);
        Ok((
            Self {
                center: self.center - off,
                half_widths: hw,
            },
            Self {
                center: self.center + off,
                half_widths: hw,
            },
        ))
    }

    pub fn vertices(&self) -> [Vec3<T>; 8] {
        let c = self.center;
        let h = self.half_widths;
        let mut out = [c; 8];
        for (i, v) in out.iter_mut().enumerate() {
            let sx = if i & 4 != 0 { h.x } else { -h.x };
            let sy = if i & 2 != 0 { h.y } else { -h.y };
            let sz = if i & 1 != 0 { h.z } else { -h.z };
            *v = c + Vec3::new(sx, sy, sz);
        }
        out
    }

    /// The 12 edges as endpoint pairs (collapsed edges are kept).
    pub fn skeleton(&self) -> [(Vec3<T>, Vec3<T>); 12] {
        let v = self.vertices();
        // vertex index bits: x = 4, y = 2, z = 1
        const EDGES: [(usize, usize); 12] = [
            (0, 4),
            (1, 5),
            (2, 6),
            (3, 7),
            (0, 2),
            (1, 3),
            (4, 6),
            (5, 7),
            (0, 1),
            (2, 3),
            (4, 5),
            (6, 7),
        ];
        EDGES.map(|(a, b)| (v[a], v[b]))
    }

    /// Whether the closest point of the cube to the origin lies in the closed
    /// pi-ball, i.e. the cube holds at least one canonical rotation vector.
    pub fn intersects_pi_ball(&self) -> bool {
        self.closest_point(Vec3::zeros()).norm() <= T::PI()
    }

    /// Whether some point lies strictly closer than `zeta` to the cuboid.
    pub fn violates_zeta(&self, points: &[Vec3<T>], zeta: T) -> bool {
        points.iter().any(|&p| self.distance_to(p) < zeta)
    }

    /// Whether the whole cuboid lies strictly inside the `zeta`-ball of some
    /// point, so that no translation in it is admissible.
    pub fn inside_zeta_ball(&self, points: &[Vec3<T>], zeta: T) -> bool {
        points.iter().any(|&p| self.max_distance_to(p) < zeta)
    }

    pub fn cast<U: Real>(self) -> Cuboid<U> {
        Cuboid {
            center: self.center.cast(),
            half_widths: self.half_widths.cast(),
        }
    }
}

/// Translation search domain: a union of cuboids and the minimum camera to
/// point distance `zeta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationDomain<T> {
    pub cuboids: Vec<Cuboid<T>>,
    pub zeta: T,
}

impl<T: Real> TranslationDomain<T> {
    pub fn new(cuboids: Vec<Cuboid<T>>, zeta: T) -> Result<Self> {
        if cuboids.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if !(zeta > T::zero()) || !zeta.is_finite() {
            return Err(Error::InvalidInstance("zeta must be positive".into()));
        }
        Ok(Self { cuboids, zeta })
    }

    pub fn single(cuboid: Cuboid<T>, zeta: T) -> Result<Self> {
        Self::new(vec![cuboid], zeta)
    }

    pub fn contains(&self, t: Vec3<T>) -> bool {
        self.cuboids.iter().any(|c| c.contains(t))
    }

    /// `t` is in the domain and at least `zeta` from every point.
    pub fn admits(&self, t: Vec3<T>, points: &[Vec3<T>]) -> bool {
        self.contains(t) && points.iter().all(|&p| (p - t).norm() >= self.zeta)
    }

    pub fn measure(&self) -> T {
        self.cuboids.iter().fold(T::zero(), |acc, c| acc + c.measure())
    }

    pub fn cast<U: Real>(&self) -> TranslationDomain<U> {
        TranslationDomain {
            cuboids: self.cuboids.iter().map(|c| c.cast()).collect(),
            zeta: U::lit(self.zeta.to_f64_lossy()),
        }
    }
}

/// The rotation search domain: the cube `[-pi, pi]^3` around the pi-ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationDomain<T> {
    pub cube: Cuboid<T>,
}

impl<T: Real> RotationDomain<T> {
    pub fn new() -> Self {
        Self {
            cube: Cuboid {
                center: Vec3::zeros(),
                half_widths: Vec3::splat(T::PI()),
            },
        }
    }
}

impl<T: Real> Default for RotationDomain<T> {
    fn default() -> Self {
        Self::new()
    }
}
