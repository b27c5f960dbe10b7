//! Local PnP refinement on angular residuals and a RANSAC baseline over
//! randomly sampled correspondences.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{objective, ProblemInstance};
use crate::error::{Error, Result};
use crate::geometry::{angle_between, rodrigues, Mat3, Pose, RotationMatrix, RotationVec, Vec3};
use crate::scalar::Real;
use crate::solver::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Correspondence {
    pub bearing_index: usize,
    pub point_index: usize,
}

/// For each bearing with at least one point within `theta` at `pose`, the
/// angularly closest such point (lowest index on exact ties).
pub fn extract_correspondences<T: Real>(pose: &Pose<T>, inst: &ProblemInstance<T>) -> Vec<Correspondence> {
    let rot = rodrigues(pose.r);
    let transformed: Vec<Vec3<T>> = inst.points.iter().map(|&p| rot.apply(p - pose.t)).collect();
    let mut out = Vec::new();
    for (i, f) in inst.bearings.iter().enumerate() {
        let f = f.direction();
        let mut best: Option<(T, usize)> = None;
        for (j, &x) in transformed.iter().enumerate() {
            if x.norm_squared() == T::zero() {
                continue;
            }
            let a = angle_between(f, x);
            if a <= inst.theta && best.is_none_or(|(b, _)| a < b) {
                best = Some((a, j));
            }
        }
        if let Some((_, j)) = best {
            out.push(Correspondence {
                bearing_index: i,
                point_index: j,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement<T> {
    pub pose: Pose<T>,
    /// Sum of angular residuals at the initial pose.
    pub initial_cost: T,
    /// Sum of angular residuals at the returned pose; never above `initial_cost`.
    pub final_cost: T,
    /// The iteration produced non-finite values; `pose` is the initial pose.
    pub diverged: bool,
    pub iterations: usize,
}

/// Sum of angles between each bearing and its transformed point.
pub fn angular_cost<T: Real>(pose: &Pose<T>, corrs: &[Correspondence], inst: &ProblemInstance<T>) -> T {
    let rot = rodrigues(pose.r);
    corrs.iter().fold(T::zero(), |acc, c| {
        let x = rot.apply(inst.points[c.point_index] - pose.t);
        acc + angle_between(inst.bearings[c.bearing_index].direction(), x)
    })
}

const MAX_ITERATIONS: usize = 100;

/// Damped Gauss-Newton on the chord residuals `normalize(R(p - t)) - f`,
/// whose squared norm is `4 sin^2(angle / 2)`. The returned pose is the
/// iterate with the lowest summed angle.
pub fn refine_pnp<T: Real>(
    corrs: &[Correspondence],
    inst: &ProblemInstance<T>,
    init: &Pose<T>,
) -> Result<Refinement<T>> {
    if corrs.len() < 3 {
        return Err(Error::TooFewCorrespondences(corrs.len()));
    }
    for c in corrs {
        if c.bearing_index >= inst.bearings.len() || c.point_index >= inst.points.len() {
            return Err(Error::InvalidInstance(format!(
                "correspondence ({}, {}) out of range",
                c.bearing_index, c.point_index
            )));
        }
    }
    let initial_cost = angular_cost(init, corrs, inst);
    let unchanged = |diverged, iterations| Refinement {
        pose: *init,
        initial_cost,
        final_cost: initial_cost,
        diverged,
        iterations,
    };
    if !initial_cost.is_finite() {
        return Ok(unchanged(true, 0));
    }

    let tol = T::lit(1e-10);
    let mut x = pack(init);
    let mut res = residuals(&x, corrs, inst);
    let mut sq = sum_sq(&res);
    let mut lambda = T::lit(1e-3);
    let mut best = (initial_cost, *init);
    let mut iterations = 0;

    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        let jac = jacobian(&x, corrs, inst);
        let (jtj, jtr) = normal_equations(&jac, &res);
        let mut accepted = false;
        while lambda < T::lit(1e12) {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * (T::one() + jtj[i][i]);
            }
            let Some(step) = solve6(a, jtr.map(|v| -v)) else {
                lambda *= T::lit(10.0);
                continue;
            };
            let cand: [T; 6] = std::array::from_fn(|i| x[i] + step[i]);
            let cres = residuals(&cand, corrs, inst);
            let csq = sum_sq(&cres);
            if !csq.is_finite() {
                return Ok(unchanged(true, iterations));
            }
            if csq < sq {
                let change = sq - csq;
                x = cand;
                res = cres;
                sq = csq;
                lambda = (lambda * T::lit(0.3)).max(T::lit(1e-12));
                accepted = true;
                let pose = unpack(&x);
                let cost = angular_cost(&pose, corrs, inst);
                if cost < best.0 {
                    best = (cost, pose);
                }
                let step_norm = step.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                let scale = x.iter().fold(T::one(), |m, v| m.max(v.abs()));
                if change <= tol * sq || step_norm <= T::lit(1e-14) * scale {
                    return Ok(finish(best, initial_cost, iterations));
                }
                break;
            }
            lambda *= T::lit(10.0);
        }
        if !accepted {
            break;
        }
    }
    Ok(finish(best, initial_cost, iterations))
}

fn finish<T: Real>(best: (T, Pose<T>), initial_cost: T, iterations: usize) -> Refinement<T> {
    Refinement {
        pose: Pose::new(best.1.r.canonical(), best.1.t),
        initial_cost,
        final_cost: best.0,
        diverged: false,
        iterations,
    }
}

fn pack<T: Real>(p: &Pose<T>) -> [T; 6] {
    [p.r.0.x, p.r.0.y, p.r.0.z, p.t.x, p.t.y, p.t.z]
}

fn unpack<T: Real>(x: &[T; 6]) -> Pose<T> {
    Pose::new(RotationVec(Vec3::new(x[0], x[1], x[2])), Vec3::new(x[3], x[4], x[5]))
}

fn residuals<T: Real>(x: &[T; 6], corrs: &[Correspondence], inst: &ProblemInstance<T>) -> Vec<T> {
    let pose = unpack(x);
    let rot = rodrigues(pose.r);
    let mut out = Vec::with_capacity(3 * corrs.len());
    for c in corrs {
        let y = rot.apply(inst.points[c.point_index] - pose.t);
        let u = y.normalize().unwrap_or(Vec3::splat(T::nan()));
        let d = u - inst.bearings[c.bearing_index].direction();
        out.extend([d.x, d.y, d.z]);
    }
    out
}

fn sum_sq<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |a, &v| a + v * v)
}

fn jacobian<T: Real>(x: &[T; 6], corrs: &[Correspondence], inst: &ProblemInstance<T>) -> Vec<[T; 6]> {
    let h = T::epsilon().cbrt();
    let mut jac = vec![[T::zero(); 6]; 3 * corrs.len()];
    for k in 0..6 {
        let step = h * (T::one() + x[k].abs());
        let mut xp = *x;
        let mut xm = *x;
        xp[k] += step;
        xm[k] -= step;
        let rp = residuals(&xp, corrs, inst);
        let rm = residuals(&xm, corrs, inst);
        for (row, (a, b)) in jac.iter_mut().zip(rp.iter().zip(&rm)) {
            row[k] = (*a - *b) / (step + step);
        }
    }
    jac
}

fn normal_equations<T: Real>(jac: &[[T; 6]], res: &[T]) -> ([[T; 6]; 6], [T; 6]) {
    let mut a = [[T::zero(); 6]; 6];
    let mut b = [T::zero(); 6];
    for (row, &r) in jac.iter().zip(res) {
        for i in 0..6 {
            b[i] += row[i] * r;
            for j in 0..6 {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    (a, b)
}

/// Gaussian elimination with partial pivoting.
fn solve6<T: Real>(mut a: [[T; 6]; 6], mut b: [T; 6]) -> Option<[T; 6]> {
    for col in 0..6 {
        let piv = (col..6).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(a[piv][col].abs() > T::min_positive_value()) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..6 {
            let f = a[r][col] / a[col][col];
            for c in col..6 {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = [T::zero(); 6];
    for r in (0..6).rev() {
        let mut s = b[r];
        for c in r + 1..6 {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Orthonormal frame from a triad of points: `e1` along `b - a`, `e3`
/// normal to the triangle.
fn triad_frame<T: Real>(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Option<Mat3<T>> {
    let e1 = (b - a).normalize()?;
    let e3 = e1.cross(c - a).normalize()?;
    let e2 = e3.cross(e1);
    Some(Mat3::from_cols(e1, e2, e3))
}

/// Depths along `f` that reproduce the triangle side lengths of `p`, by
/// Gauss-Newton from a common starting depth.
fn solve_depths<T: Real>(f: &[Vec3<T>; 3], p: &[Vec3<T>; 3], start: T) -> Option<[T; 3]> {
    const EDGES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    let mut d = [start; 3];
    for _ in 0..30 {
        let mut rows = [Vec3::zeros(); 3];
        let mut r = [T::zero(); 3];
        for (k, &(i, j)) in EDGES.iter().enumerate() {
            let c = f[i].dot(f[j]);
            let mut g = [T::zero(); 3];
            g[i] = T::lit(2.0) * (d[i] - d[j] * c);
            g[j] = T::lit(2.0) * (d[j] - d[i] * c);
            rows[k] = Vec3::from_array(g);
            r[k] = (f[i] * d[i] - f[j] * d[j]).norm_squared() - (p[i] - p[j]).norm_squared();
        }
        let res = Vec3::from_array(r);
        let det = rows[0].dot(rows[1].cross(rows[2]));
        if !(det.abs() > T::epsilon()) {
            return None;
        }
        // Cramer's rule for rows * step = res
        let a = Mat3::from_rows(rows[0], rows[1], rows[2]);
        let (c0, c1, c2) = (a.col(0), a.col(1), a.col(2));
        let step = Vec3::new(res.dot(c1.cross(c2)), c0.dot(res.cross(c2)), c0.dot(c1.cross(res))) / det;
        for (dk, sk) in d.iter_mut().zip(step.to_array()) {
            *dk -= sk;
        }
        if step.norm() <= T::lit(1e-12) * start.max(T::one()) {
            break;
        }
    }
    (d.iter().all(|x| x.is_finite() && *x > T::zero())).then_some(d)
}

/// Coarse pose from three bearing/point pairs: place the points along the
/// bearings at a common depth chosen to match the triangle's scale, then
/// align the two triangles.
fn minimal_initialisation<T: Real>(f: [Vec3<T>; 3], p: [Vec3<T>; 3]) -> Option<Pose<T>> {
    let mut ratio = T::zero();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let chord = (f[i] - f[j]).norm();
        if chord <= T::epsilon() {
            return None;
        }
        ratio += (p[i] - p[j]).norm() / chord;
    }
    let depth = ratio / T::lit(3.0);
    let d = solve_depths(&f, &p, depth).unwrap_or([depth; 3]);
    let q = [f[0] * d[0], f[1] * d[1], f[2] * d[2]];
    let fc = triad_frame(q[0], q[1], q[2])?;
    let fw = triad_frame(p[0], p[1], p[2])?;
    // R maps world directions to camera directions
    let r = fc.mul_mat(&fw.transpose());
    let rot = RotationMatrix(r);
    let cq = (q[0] + q[1] + q[2]) / T::lit(3.0);
    let cp = (p[0] + p[1] + p[2]) / T::lit(3.0);
    // R(cp - t) = cq  =>  t = cp - R^T cq
    let t = cp - rot.apply_inverse(cq);
    Some(Pose::new(rot.to_rotation_vec(), t))
}

/// Hypothesise-and-verify over random bearing and point triples. The
/// threshold for scoring is the instance's `theta`.
pub fn ransac_baseline<T: Real>(inst: &ProblemInstance<T>, iterations: usize, seed: u64) -> Result<Solution<T>> {
    let n = inst.n_bearings();
    let m = inst.n_points();
    let default_pose = Pose::new(RotationVec::identity(), inst.domain.cuboids[0].center);
    if iterations == 0 {
        return Ok(Solution::unoptimised(0, default_pose, Vec::new()));
    }
    if n < 3 || m < 3 {
        return Err(Error::InvalidInstance(format!(
            "RANSAC needs at least 3 bearings and 3 points, got {n} and {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Pose<T>)> = None;
    for _ in 0..iterations {
        let bi = sample(&mut rng, n, 3);
        let pi = sample(&mut rng, m, 3);
        let f = [0, 1, 2].map(|k| inst.bearings[bi.index(k)].direction());
        let p = [0, 1, 2].map(|k| inst.points[pi.index(k)]);
        let Some(init) = minimal_initialisation(f, p) else {
            continue;
        };
        let corrs: Vec<Correspondence> = (0..3)
            .map(|k| Correspondence {
                bearing_index: bi.index(k),
                point_index: pi.index(k),
            })
            .collect();
        let Ok(refined) = refine_pnp(&corrs, inst, &init) else {
            continue;
        };
        if refined.diverged {
            continue;
        }
        let score = objective(&refined.pose, inst);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, refined.pose));
        }
    }
    let (nu, pose) = best.unwrap_or((0, default_pose));
    let nu = if best.is_some() { objective(&pose, inst) } else { nu };
    let corrs = extract_correspondences(&pose, inst);
    Ok(Solution::unoptimised(nu, pose, corrs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Cuboid, TranslationDomain};
    use crate::geometry::Bearing;
    use rand::Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    fn instance(pose: &Pose<f64>, pts: &[Vec3<f64>], theta: f64) -> ProblemInstance<f64> {
        let bearings = pts.iter().map(|&p| Bearing::new(pose.transform(p)).unwrap()).collect();
        let dom = TranslationDomain::single(Cuboid::cube(Vec3::zeros(), 5.0).unwrap(), 1e-3).unwrap();
        ProblemInstance::new(bearings, pts.to_vec(), theta, dom).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec3<f64>> {
        (0..m)
            .map(|_| {
                v(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn identity_corrs(n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|i| Correspondence {
                bearing_index: i,
                point_index: i,
            })
            .collect()
    }

    #[test]
    fn extract_examples() {
        let pose = Pose::new(RotationVec(v(0.1, 0.2, -0.1)), v(0.0, 0.0, -4.0));
        let pts = [v(0.0, 0.0, 0.0), v(0.5, 0.5, 0.0), v(-0.5, 0.2, 0.3)];
        let inst = instance(&pose, &pts, 0.01);
        assert_eq!(extract_correspondences(&pose, &inst), identity_corrs(3));
        let far = Pose::new(RotationVec(v(0.0, 3.0, 0.0)), v(0.0, 0.0, -4.0));
        assert!(extract_correspondences(&far, &inst).is_empty());
    }

    #[test]
    fn extract_prefers_closer_point() {
        let f = Bearing::new(v(0.0, 0.0, 1.0)).unwrap();
        let dom = TranslationDomain::single(Cuboid::cube(Vec3::zeros(), 1.0).unwrap(), 1e-3).unwrap();
        let pts = vec![v(0.02, 0.0, 1.0), v(0.01, 0.0, 1.0)];
        let inst = ProblemInstance::new(vec![f], pts, 0.05, dom).unwrap();
        let c = extract_correspondences(&Pose::default(), &inst);
        assert_eq!(
            c,
            vec![Correspondence {
                bearing_index: 0,
                point_index: 1
            }]
        );
    }

    #[test]
    fn refine_recovers_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = Pose::new(RotationVec(v(0.3, -0.2, 0.1)), v(0.2, -0.1, -4.0));
        let pts = random_points(&mut rng, 8);
        let inst = instance(&gt, &pts, 0.02);
        let init = Pose::new(RotationVec(gt.r.0 + v(0.03, -0.03, 0.02)), gt.t + v(-0.03, 0.03, 0.03));
        let out = refine_pnp(&identity_corrs(8), &inst, &init).unwrap();
        assert!(!out.diverged);
        assert!(out.final_cost < 1e-6, "cost {}", out.final_cost);
        assert!((out.pose.r.0 - gt.r.0).norm() < 1e-6);
        assert!((out.pose.t - gt.t).norm() < 1e-6);
    }

    #[test]
    fn refine_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = Pose::new(RotationVec(v(-0.1, 0.4, 0.0)), v(0.0, 0.3, -3.0));
        let pts = random_points(&mut rng, 6);
        let inst = instance(&gt, &pts, 0.02);
        let out = refine_pnp(&identity_corrs(6), &inst, &gt).unwrap();
        assert!(out.final_cost <= out.initial_cost);
        assert!((out.pose.r.0 - gt.r.0).norm() < 1e-9);
        assert!((out.pose.t - gt.t).norm() < 1e-9);
    }

    #[test]
    fn refine_never_increases_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = Pose::new(RotationVec(v(0.0, 0.0, 0.5)), v(0.0, 0.0, -3.0));
        let pts = random_points(&mut rng, 10);
        let inst = instance(&gt, &pts, 0.02);
        for _ in 0..20 {
            let corrs: Vec<_> = (0..5)
                .map(|i| Correspondence {
                    bearing_index: i,
                    point_index: rng.random_range(0..10),
                })
                .collect();
            let init = Pose::new(RotationVec(v(rng.random_range(-1.0..1.0), 0.2, 0.1)), v(0.0, 0.5, -2.0));
            let out = refine_pnp(&corrs, &inst, &init).unwrap();
            assert!(out.final_cost <= out.initial_cost);
            assert!((angular_cost(&out.pose, &corrs, &inst) - out.final_cost).abs() < 1e-9);
        }
    }

    #[test]
    fn refine_needs_three() {
        let gt = Pose::default();
        let inst = instance(&gt, &[v(0.0, 0.0, 3.0), v(1.0, 0.0, 3.0)], 0.1);
        assert_eq!(
            refine_pnp(&identity_corrs(2), &inst, &gt).unwrap_err(),
            Error::TooFewCorrespondences(2)
        );
    }

    #[test]
    fn minimal_initialisation_exact_on_clean_triple() {
        let gt = Pose::new(RotationVec(v(0.2, 0.1, -0.3)), v(0.1, 0.0, -4.0));
        let p = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)];
        let f = p.map(|q| gt.transform(q).normalize().unwrap());
        let init = minimal_initialisation(f, p).unwrap();
        assert!((init.r.0 - gt.r.0).norm() < 1e-9);
        assert!((init.t - gt.t).norm() < 1e-9);
    }

    #[test]
    fn ransac_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gt = Pose::new(RotationVec(v(0.1, 0.2, 0.3)), v(0.0, 0.0, -4.0));
        let pts = random_points(&mut rng, 6);
        let inst = instance(&gt, &pts, 1f64.to_radians());
        let zero = ransac_baseline(&inst, 0, 7).unwrap();
        assert_eq!(zero.nu_star, 0);
        assert!(!zero.optimal);

        let a = ransac_baseline(&inst, 3000, 7).unwrap();
        let b = ransac_baseline(&inst, 3000, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.nu_star, objective(&a.pose, &inst));
        assert_eq!(a.nu_star, 6);
    }

    #[test]
    fn ransac_score_monotone_in_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt = Pose::new(RotationVec(v(0.1, -0.2, 0.3)), v(0.0, 0.2, -4.0));
        let pts = random_points(&mut rng, 8);
        let inst = instance(&gt, &pts, 1f64.to_radians());
        let mut last = 0;
        for it in [1, 10, 100, 500] {
            let s = ransac_baseline(&inst, it, 11).unwrap().nu_star;
            assert!(s >= last);
            last = s;
        }
    }
}
