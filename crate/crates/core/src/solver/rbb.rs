use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::cache::{NodeData, NodeKey, PsiEntry, RotationCache};
use crate::bounds::{objective, psi_t, psi_t_weak, BoundMode, BoxSkeleton, ProblemInstance, Relaxation};
use crate::domain::Cuboid;
use crate::geometry::{Pose, RotationVec, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SearchKind {
    /// Fixed translation: maximise the objective itself.
    Lower,
    /// Translation uncertainty folded in: the result bounds the objective
    /// over the whole translation cuboid.
    Relaxed,
}

/// Point-side data for one rotation search.
pub(crate) struct PointTable<T> {
    relaxation: Relaxation,
    theta: T,
    cos_theta: T,
    sin_theta: T,
    rel: Vec<Vec3<T>>,
    unit: Vec<Vec3<T>>,
    /// `theta + psi_t` with its cosine and sine.
    widened: Vec<T>,
    cos_w: Vec<T>,
    sin_w: Vec<T>,
    boxes: Vec<BoxSkeleton<T>>,
}

impl<T: Real> PointTable<T> {
    pub fn exact(t0: Vec3<T>, points: &[Vec3<T>], theta: T) -> Self {
        Self::build(Relaxation::None, Cuboid::point(t0), points, theta, |_| T::zero())
    }

    pub fn relaxed(ct: &Cuboid<T>, points: &[Vec3<T>], theta: T, mode: BoundMode) -> Self {
        let relaxation = match mode {
            BoundMode::Gamma => Relaxation::Box,
            _ => Relaxation::Angle,
        };
        Self::build(relaxation, *ct, points, theta, |p| match mode {
            BoundMode::WeakSphere => psi_t_weak(p, ct),
            _ => psi_t(p, ct),
        })
    }

    fn build(relaxation: Relaxation, ct: Cuboid<T>, points: &[Vec3<T>], theta: T, psi: impl Fn(Vec3<T>) -> T) -> Self {
        let rel: Vec<Vec3<T>> = points.iter().map(|&p| p - ct.center).collect();
        let unit = rel.iter().map(|r| r.normalize().unwrap_or_default()).collect();
        let widened: Vec<T> = points.iter().map(|&p| theta + psi(p)).collect();
        Self {
            relaxation,
            theta,
            cos_theta: theta.cos(),
            sin_theta: theta.sin(),
            rel,
            unit,
            cos_w: widened.iter().map(|w| w.cos()).collect(),
            sin_w: widened.iter().map(|w| w.sin()).collect(),
            widened,
            boxes: match relaxation {
                Relaxation::Box => rel_boxes(&ct, points),
                _ => Vec::new(),
            },
        }
    }

    /// Every pair that can ever count; a point at the fixed camera centre
    /// never does.
    fn all_pairs(&self, n_bearings: usize) -> Vec<(u32, u32)> {
        let keep: Vec<u32> = (0..self.rel.len())
            .filter(|&j| self.relaxation != Relaxation::None || self.rel[j].norm_squared() > T::zero())
            .map(|j| j as u32)
            .collect();
        let mut out = Vec::with_capacity(n_bearings * keep.len());
        for i in 0..n_bearings as u32 {
            out.extend(keep.iter().map(|&j| (i, j)));
        }
        out
    }

    /// `(centre inlier, possible inlier anywhere in the cube)` for one pair.
    /// Comparisons are made on cosines; the upper test is padded so rounding
    /// can only make it more permissive.
    #[inline]
    fn test(&self, f: Vec3<T>, ps: PsiEntry<T>, j: usize) -> (bool, bool) {
        let slack = T::lit(1e-12);
        let w = self.widened[j];
        let d = f.dot(self.unit[j]);
        let within = |extra: PsiEntry<T>| {
            w + extra.psi >= T::PI() || d >= self.cos_w[j] * extra.cos - self.sin_w[j] * extra.sin - slack
        };
        match self.relaxation {
            Relaxation::None | Relaxation::Angle => {
                let lo = w >= T::PI() || d >= self.cos_w[j];
                (lo, lo || within(ps))
            }
            Relaxation::Box => {
                if !within(ps) {
                    return (false, false);
                }
                let centred = self.rel[j].norm_squared() > T::zero();
                if d >= self.cos_theta && centred {
                    return (true, true);
                }
                let wide = self.theta + ps.psi >= T::PI();
                let cos_up = self.cos_theta * ps.cos - self.sin_theta * ps.sin - slack;
                // the box lies in the cone of half-angle `w` about its centre
                let lo_open = w >= T::PI() || d >= self.cos_w[j];
                let up_settled = wide || (centred && d >= cos_up);
                if up_settled {
                    return (false, true);
                }
                let c = self.boxes[j].max_cos(f, if lo_open { self.cos_theta } else { cos_up });
                (c >= self.cos_theta, up_settled || c >= cos_up)
            }
        }
    }

    /// Counts over `pairs` (sorted by bearing) and the pairs still possible
    /// inside this cube. Once a bearing is a centre inlier its remaining
    /// pairs are kept without testing.
    fn evaluate(
        &self,
        node: &NodeData<T>,
        cache: &RotationCache<T>,
        pairs: &[(u32, u32)],
    ) -> (usize, usize, Vec<(u32, u32)>) {
        let bearings = cache.bearings();
        let mut keep = Vec::with_capacity(pairs.len());
        let (mut lo, mut up) = (0, 0);
        let mut k = 0;
        while k < pairs.len() {
            let i = pairs[k].0;
            let f = node.bearing(i as usize, bearings);
            let ps = node.psi(i as usize);
            let (mut b_lo, mut b_up) = (false, false);
            while k < pairs.len() && pairs[k].0 == i {
                let pair = pairs[k];
                k += 1;
                if b_lo {
                    keep.push(pair);
                    continue;
                }
                let (l, u) = self.test(f, ps, pair.1 as usize);
                if u {
                    keep.push(pair);
                    b_up = true;
                }
                b_lo |= l;
            }
            lo += b_lo as usize;
            up += (b_up || b_lo) as usize;
        }
        (lo, up, keep)
    }
}

/// The boxes `p - ct` in coordinates centred on the cuboid centre.
fn rel_boxes<T: Real>(ct: &Cuboid<T>, points: &[Vec3<T>]) -> Vec<BoxSkeleton<T>> {
    points
        .iter()
        .map(|&p| {
            BoxSkeleton::new(Cuboid {
                center: p - ct.center,
                half_widths: ct.half_widths,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct RbbOutcome<T> {
    /// `Lower`: the best attained count if it beats the threshold, else the
    /// threshold. `Relaxed`: an upper bound, never below the threshold.
    pub value: usize,
    /// Rotation attaining `value` when it beats the threshold (`Lower`).
    pub rotation: Option<RotationVec<T>>,
    /// Largest centre value evaluated, even if not above the threshold.
    pub best_seen: usize,
    pub best_seen_rotation: RotationVec<T>,
    pub nodes: u64,
}

struct Item {
    bound: usize,
    key: NodeKey,
    seq: u64,
    pairs: Vec<(u32, u32)>,
}

impl PartialEq for Item {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        self.bound
            .cmp(&o.bound)
            .then(self.key.level.cmp(&o.key.level))
            .then(o.seq.cmp(&self.seq))
    }
}

pub(crate) struct RotationSearch<'a, T> {
    pub cache: &'a RotationCache<T>,
    pub inst: &'a ProblemInstance<T>,
    pub max_level: u8,
    pub deadline: Option<Instant>,
}

impl<T: Real> RotationSearch<'_, T> {
    /// Best-first search over rotation cubes inside the pi-ball. Cubes whose
    /// bound does not exceed the running best are discarded.
    pub fn run(&self, table: &PointTable<T>, t0: Vec3<T>, nu_best: usize, kind: SearchKind) -> RbbOutcome<T> {
        let mut best = nu_best;
        let mut best_r = None;
        let mut seen = 0usize;
        let mut seen_r = RotationVec::identity();
        let mut floor = 0usize;
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut nodes = 0u64;

        let mut visit =
            |key: NodeKey, cap: usize, pairs: &[(u32, u32)], heap: &mut BinaryHeap<Item>, best: &mut usize| {
                let data = self.cache.get(key);
                nodes += 1;
                let (lo, up, keep) = table.evaluate(&data, self.cache, pairs);
                let up = up.min(cap);
                if lo > seen {
                    seen = lo;
                    seen_r = data.center;
                }
                if lo > *best {
                    match kind {
                        SearchKind::Lower => {
                            let exact = objective(&Pose::new(data.center, t0), self.inst);
                            if exact > *best {
                                *best = exact;
                                best_r = Some(data.center);
                            }
                        }
                        SearchKind::Relaxed => *best = lo,
                    }
                }
                if up > *best {
                    seq += 1;
                    heap.push(Item {
                        bound: up,
                        key,
                        seq,
                        pairs: keep,
                    });
                }
            };

        let root_pairs = table.all_pairs(self.inst.n_bearings());
        visit(NodeKey::ROOT, usize::MAX, &root_pairs, &mut heap, &mut best);
        let mut pops = 0u64;
        while let Some(item) = heap.pop() {
            if item.bound <= best {
                break;
            }
            pops += 1;
            if pops.is_multiple_of(64) && self.deadline.is_some_and(|d| Instant::now() >= d) {
                floor = floor.max(item.bound);
                break;
            }
            if item.key.level >= self.max_level {
                floor = floor.max(item.bound);
                continue;
            }
            for child in item.key.children() {
                if !child.cube::<T>().intersects_pi_ball() {
                    continue;
                }
                visit(child, item.bound, &item.pairs, &mut heap, &mut best);
            }
        }

        let value = match kind {
            SearchKind::Lower => best,
            SearchKind::Relaxed => best.max(floor),
        };
        RbbOutcome {
            value,
            rotation: best_r,
            best_seen: seen,
            best_seen_rotation: seen_r,
            nodes,
        }
    }
}
