//! Brute-force verifiers: a dense 6D grid search and sampled maxima of the
//! rotation and translation uncertainty angles.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::ProblemInstance;
use crate::domain::Cuboid;
use crate::error::{Error, Result};
use crate::geometry::{angle_between, rodrigues, Pose, RotationVec, Vec3};
use crate::scalar::Real;

/// Default limit on grid evaluations.
pub const DEFAULT_CELL_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult<T> {
    pub nu: usize,
    pub pose: Pose<T>,
    /// Number of (rotation, translation) cells on the grid.
    pub cells: u128,
}

/// Offsets `k * step` with `|k * step| <= half`, symmetric about zero.
fn lattice<T: Real>(half: T, step: T) -> Vec<T> {
    if !(half > T::zero()) {
        return vec![T::zero()];
    }
    let k_max = (half / step).floor().to_usize().unwrap_or(0);
    (0..=2 * k_max)
        .map(|k| T::lit(k as f64 - k_max as f64) * step)
        .collect()
}

fn rotation_grid<T: Real>(step: T) -> Vec<RotationVec<T>> {
    let axis = lattice(T::PI(), step);
    let mut out = Vec::new();
    for &x in &axis {
        for &y in &axis {
            for &z in &axis {
                let v = Vec3::new(x, y, z);
                if v.norm() <= T::PI() {
                    out.push(RotationVec(v));
                }
            }
        }
    }
    out
}

fn translation_grid<T: Real>(inst: &ProblemInstance<T>, step: T) -> Vec<Vec3<T>> {
    let mut out = Vec::new();
    for c in &inst.domain.cuboids {
        let (ax, ay, az) = (
            lattice(c.half_widths.x, step),
            lattice(c.half_widths.y, step),
            lattice(c.half_widths.z, step),
        );
        for &x in &ax {
            for &y in &ay {
                for &z in &az {
                    let t = c.center + Vec3::new(x, y, z);
                    if inst.domain.admits(t, &inst.points) {
                        out.push(t);
                    }
                }
            }
        }
    }
    out
}

/// Grid search with the default cell cap.
pub fn grid_search<T: Real>(inst: &ProblemInstance<T>, rot_step: T, trans_step: T) -> Result<GridResult<T>> {
    grid_search_capped(inst, rot_step, trans_step, DEFAULT_CELL_CAP)
}

/// Rotations grouped by the cell of a rotated bearing on a cubic grid over
/// `[-1, 1]^3`. Two unit vectors within the threshold angle lie in the same
/// or adjacent cells.
struct Buckets {
    size: f64,
    cells: HashMap<(i32, i32, i32), Vec<u32>>,
}

impl Buckets {
    fn key(&self, v: [f64; 3]) -> (i32, i32, i32) {
        let k = |x: f64| (x / self.size).floor() as i32;
        (k(v[0]), k(v[1]), k(v[2]))
    }

    fn near(&self, v: [f64; 3]) -> impl Iterator<Item = &u32> + '_ {
        let (x, y, z) = self.key(v);
        (-1..=1)
            .flat_map(move |dx| (-1..=1).flat_map(move |dy| (-1..=1).map(move |dz| (x + dx, y + dy, z + dz))))
            .filter_map(|k| self.cells.get(&k))
            .flatten()
    }
}

/// Best objective over a regular grid: rotations `k * rot_step` inside the
/// pi-ball and translations `centre + k * trans_step` inside each domain
/// cuboid that respect the minimum range. Among equal counts the first
/// translation, then the first rotation, in grid order is kept.
pub fn grid_search_capped<T: Real>(
    inst: &ProblemInstance<T>,
    rot_step: T,
    trans_step: T,
    cap: u128,
) -> Result<GridResult<T>> {
    if !(rot_step > T::zero() && trans_step > T::zero()) {
        return Err(Error::InvalidConfig("grid steps must be positive".into()));
    }
    let rotations = rotation_grid(rot_step);
    let translations = translation_grid(inst, trans_step);
    let cells = rotations.len() as u128 * translations.len() as u128;
    if cells > cap {
        return Err(Error::GridTooLarge { cells, cap });
    }
    let n = inst.n_bearings();
    let fallback = Pose::new(RotationVec::identity(), inst.domain.cuboids[0].center);
    if translations.is_empty() || n == 0 {
        return Ok(GridResult {
            nu: 0,
            pose: fallback,
            cells,
        });
    }

    // rotated[i][k] = R_k^T f_i
    let rotated: Vec<Vec<Vec3<T>>> = inst
        .bearings
        .iter()
        .map(|f| {
            rotations
                .iter()
                .map(|r| rodrigues(*r).apply_inverse(f.direction()))
                .collect()
        })
        .collect();
    let theta = inst.theta.to_f64_lossy();
    // chord between unit vectors at the threshold angle, padded for rounding
    let size = (2.0 * (theta.min(std::f64::consts::PI) / 2.0).sin() * 1.001 + 1e-9).max(1.0 / 64.0);
    let buckets: Vec<Buckets> = rotated
        .iter()
        .map(|gs| {
            let mut b = Buckets {
                size,
                cells: HashMap::new(),
            };
            for (k, g) in gs.iter().enumerate() {
                let key = b.key(g.cast::<f64>().to_array());
                b.cells.entry(key).or_default().push(k as u32);
            }
            b
        })
        .collect();

    let cos_theta = inst.theta.cos();
    let margin = T::lit(1e-12);
    let mut counts = vec![0u32; rotations.len()];
    let mut stamp = vec![u32::MAX; rotations.len()];
    let mut touched = Vec::new();
    let mut best: Option<(usize, usize, usize)> = None;

    for (ti, &t) in translations.iter().enumerate() {
        let units: Vec<(usize, Vec3<T>)> = inst
            .points
            .iter()
            .enumerate()
            .filter_map(|(j, &p)| (p - t).normalize().map(|u| (j, u)))
            .collect();
        touched.clear();
        for (i, b) in buckets.iter().enumerate() {
            for &(j, u) in &units {
                for &k in b.near(u.cast::<f64>().to_array()) {
                    let k = k as usize;
                    // each bearing counts once per rotation
                    if stamp[k] == i as u32 {
                        continue;
                    }
                    let g = rotated[i][k];
                    let c = g.dot(u);
                    let hit = if (c - cos_theta).abs() > margin {
                        c > cos_theta
                    } else {
                        angle_between(g, inst.points[j] - t) <= inst.theta
                    };
                    if hit {
                        if counts[k] == 0 {
                            touched.push(k);
                        }
                        stamp[k] = i as u32;
                        counts[k] += 1;
                    }
                }
            }
            // stamps only need to differ between consecutive bearings
            if i + 1 == n {
                for &k in &touched {
                    stamp[k] = u32::MAX;
                }
            }
        }
        let mut local: Option<(usize, usize)> = None;
        for &k in &touched {
            let c = counts[k] as usize;
            if local.is_none_or(|(bc, bk)| c > bc || (c == bc && k < bk)) {
                local = Some((c, k));
            }
            counts[k] = 0;
        }
        let (c, k) = local.unwrap_or((0, 0));
        if best.is_none_or(|(bc, _, _)| c > bc) {
            best = Some((c, ti, k));
            if c == n {
                break;
            }
        }
    }
    let (nu, ti, k) = best.unwrap_or((0, 0, 0));
    Ok(GridResult {
        nu,
        pose: Pose::new(rotations[k], translations[ti]),
        cells,
    })
}

/// A coordinate drawn at either end of `[c - h, c + h]` half the time and
/// uniformly otherwise, so faces, edges and vertices are all sampled.
fn biased<T: Real>(rng: &mut ChaCha8Rng, c: T, h: T) -> T {
    if !(h > T::zero()) {
        return c;
    }
    let u: f64 = rng.random_range(0.0..1.0);
    let s = if u < 0.25 {
        -1.0
    } else if u < 0.5 {
        1.0
    } else {
        rng.random_range(-1.0..=1.0)
    };
    c + h * T::lit(s)
}

fn sample_in<T: Real>(rng: &mut ChaCha8Rng, cube: &Cuboid<T>) -> Vec3<T> {
    Vec3::new(
        biased(rng, cube.center.x, cube.half_widths.x),
        biased(rng, cube.center.y, cube.half_widths.y),
        biased(rng, cube.center.z, cube.half_widths.z),
    )
}

/// Largest sampled `angle(R_r v, R_r0 v)` over `r` in the cube; never above
/// the true maximum.
pub fn sample_max_rotation_angle<T: Real>(v: Vec3<T>, cube: &Cuboid<T>, samples: usize, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = rodrigues(RotationVec(cube.center)).apply(v);
    (0..samples)
        .map(|_| {
            let r = sample_in(&mut rng, cube);
            angle_between(rodrigues(RotationVec(r)).apply(v), centre)
        })
        .fold(T::zero(), T::max)
}

/// Largest sampled `angle(p - t, p - t0)` over `t` in the cuboid, counting
/// pi when a sample lands on `p`; never above the true maximum.
pub fn sample_max_translation_angle<T: Real>(p: Vec3<T>, ct: &Cuboid<T>, samples: usize, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = p - ct.center;
    (0..samples)
        .map(|_| {
            let d = p - sample_in(&mut rng, ct);
            if d.norm_squared() == T::zero() || base.norm_squared() == T::zero() {
                if d == base {
                    T::zero()
                } else {
                    T::PI()
                }
            } else {
                angle_between(d, base)
            }
        })
        .fold(T::zero(), T::max)
}
