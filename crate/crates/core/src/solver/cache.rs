use std::borrow::Cow;
use std::sync::OnceLock;

use crate::bounds::{psi_r_weak, tight_psi_r_for_bearings, BoundMode};
use crate::domain::Cuboid;
use crate::geometry::{rodrigues, Bearing, RotationMatrix, RotationVec, Vec3};
use crate::scalar::Real;

/// Deepest rotation-octree level that can be cached (about 2.4M slots).
pub const MAX_CACHE_DEPTH: usize = 7;

/// Address of a rotation-octree node: level `L` splits `[-pi, pi]^3` into
/// `2^L` cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub level: u8,
    pub ix: u32,
    pub iy: u32,
    pub iz: u32,
}

impl NodeKey {
    pub const ROOT: NodeKey = NodeKey {
        level: 0,
        ix: 0,
        iy: 0,
        iz: 0,
    };

    pub fn cube<T: Real>(&self) -> Cuboid<T> {
        let pi = T::PI();
        let scale = T::lit((1u64 << self.level) as f64);
        let h = pi / scale;
        let c = |i: u32| -pi + h * (T::lit(2.0) * T::lit(i as f64) + T::one());
        Cuboid {
            center: Vec3::new(c(self.ix), c(self.iy), c(self.iz)),
            half_widths: Vec3::splat(h),
        }
    }

    pub fn children(&self) -> [NodeKey; 8] {
        let mut out = [*self; 8];
        for (b, k) in out.iter_mut().enumerate() {
            k.level = self.level + 1;
            k.ix = 2 * self.ix + ((b >> 2) & 1) as u32;
            k.iy = 2 * self.iy + ((b >> 1) & 1) as u32;
            k.iz = 2 * self.iz + (b & 1) as u32;
        }
        out
    }

    fn slot(&self) -> usize {
        let l = self.level as u32;
        let offset = ((1usize << (3 * l)) - 1) / 7;
        offset + (((self.ix as usize) << (2 * l)) | ((self.iy as usize) << l) | self.iz as usize)
    }
}

/// Number of octree nodes down to `depth` inclusive, before pi-ball culling.
pub fn node_count(depth: usize) -> usize {
    ((1usize << (3 * (depth + 1))) - 1) / 7
}

/// A rotation uncertainty angle with its sine and cosine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEntry<T> {
    pub psi: T,
    pub cos: T,
    pub sin: T,
}

impl<T: Real> PsiEntry<T> {
    fn new(psi: T) -> Self {
        Self {
            psi,
            cos: psi.cos(),
            sin: psi.sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsiTable<T> {
    /// Same angle for every bearing (sphere bound).
    Uniform(PsiEntry<T>),
    PerBearing(Vec<PsiEntry<T>>),
}

/// Data for one rotation cube.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData<T> {
    pub center: RotationVec<T>,
    pub matrix: RotationMatrix<T>,
    /// `R0^T f` for every bearing. Empty for nodes below the cached levels,
    /// which rotate on use through [`NodeData::bearing`].
    pub rotated: Vec<Vec3<T>>,
    pub psi: PsiTable<T>,
}

impl<T: Real> NodeData<T> {
    #[inline]
    pub fn bearing(&self, i: usize, bearings: &[Bearing<T>]) -> Vec3<T> {
        match self.rotated.get(i) {
            Some(v) => *v,
            None => self.matrix.apply_inverse(bearings[i].direction()),
        }
    }

    #[inline]
    pub fn psi(&self, i: usize) -> PsiEntry<T> {
        match &self.psi {
            PsiTable::Uniform(e) => *e,
            PsiTable::PerBearing(v) => v[i],
        }
    }
}

/// Per-node rotation data for the rotation octree. Levels up to `depth` are
/// cached lazily and shared between threads; deeper nodes are built on use
/// by the same routine, so cached and uncached lookups agree bit for bit.
///
/// The certified surface-sampled rotation angle is used down to
/// `tight_levels`; deeper cubes use the sphere bound.
pub struct RotationCache<T> {
    bearings: Vec<Bearing<T>>,
    mode: BoundMode,
    cells: usize,
    tight_levels: u8,
    depth: usize,
    slots: Vec<OnceLock<NodeData<T>>>,
}

impl<T: Real> RotationCache<T> {
    pub fn new(bearings: &[Bearing<T>], depth: usize, mode: BoundMode, cells: usize, tight_levels: u8) -> Self {
        let depth = depth.min(MAX_CACHE_DEPTH);
        let mut slots = Vec::new();
        slots.resize_with(node_count(depth), OnceLock::new);
        Self {
            bearings: bearings.to_vec(),
            mode,
            cells,
            tight_levels,
            depth,
            slots,
        }
    }

    pub fn bearings(&self) -> &[Bearing<T>] {
        &self.bearings
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn get(&self, key: NodeKey) -> Cow<'_, NodeData<T>> {
        if (key.level as usize) <= self.depth {
            Cow::Borrowed(self.slots[key.slot()].get_or_init(|| self.compute(key, true)))
        } else {
            Cow::Owned(self.compute(key, false))
        }
    }

    fn compute(&self, key: NodeKey, store_rotated: bool) -> NodeData<T> {
        let cube: Cuboid<T> = key.cube();
        let center = RotationVec(cube.center);
        let matrix = rodrigues(center);
        let rotated = if store_rotated {
            self.bearings
                .iter()
                .map(|f| matrix.apply_inverse(f.direction()))
                .collect()
        } else {
            Vec::new()
        };
        let tight = self.mode != BoundMode::WeakSphere && key.level <= self.tight_levels;
        let psi = if tight {
            PsiTable::PerBearing(
                tight_psi_r_for_bearings(&cube, &self.bearings, self.cells)
                    .into_iter()
                    .map(PsiEntry::new)
                    .collect(),
            )
        } else {
            PsiTable::Uniform(PsiEntry::new(psi_r_weak(&cube)))
        };
        NodeData {
            center,
            matrix,
            rotated,
            psi,
        }
    }

    /// Fill every cached node that meets the pi-ball.
    pub fn precompute(&self) {
        let mut stack = vec![NodeKey::ROOT];
        while let Some(k) = stack.pop() {
            if !k.cube::<T>().intersects_pi_ball() {
                continue;
            }
            self.get(k);
            if (k.level as usize) < self.depth {
                stack.extend(k.children());
            }
        }
    }

    pub fn filled(&self) -> usize {
        self.slots.iter().filter(|s| s.get().is_some()).count()
    }
}
