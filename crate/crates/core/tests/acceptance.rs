//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::Instant;

use gopac::bounds::{objective, psi_r_tight, psi_r_weak, psi_t, psi_t_weak, rbb_bounds, upper_bound, BoundMode};
use gopac::domain::{Cuboid, TranslationDomain};
use gopac::estimators::refine_pnp;
use gopac::geometry::{angular_distance, rodrigues, Bearing, Pose, RotationVec, Vec3};
use gopac::oracle::{grid_search_capped, sample_max_rotation_angle};
use gopac::solver::{gopac_solve, SolverConfig};
use gopac::synth::{generate, inlier_success, pose_success, Prior, SynthConfig};
use gopac::{ProblemInstanced, Vec3d};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [BoundMode; 3] = [BoundMode::WeakSphere, BoundMode::TightCuboid, BoundMode::Gamma];

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Verdict;

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn v(x: f64, y: f64, z: f64) -> Vec3d {
    Vec3::new(x, y, z)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3d {
    v(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3d {
    loop {
        let u = uniform(rng, -1.0, 1.0);
        let n = u.norm();
        if n > 1e-3 && n <= 1.0 {
            return u / n;
        }
    }
}

fn in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3d {
    loop {
        let u = uniform(rng, -radius, radius);
        if u.norm() <= radius {
            return u;
        }
    }
}

/// A point of the cuboid; a quarter of coordinates sit on each face.
fn in_cuboid(rng: &mut ChaCha8Rng, c: &Cuboid<f64>) -> Vec3d {
    let mut coord = |m: f64, h: f64| match rng.random_range(0..4) {
        0 => m - h,
        1 => m + h,
        _ => m + rng.random_range(-1.0..=1.0) * h,
    };
    v(
        coord(c.center.x, c.half_widths.x),
        coord(c.center.y, c.half_widths.y),
        coord(c.center.z, c.half_widths.z),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn c1_bound_validity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut violations = 0;
    let mut lower_mismatch = 0;
    for _ in 0..1000 {
        let cr = Cuboid::cube(uniform(&mut rng, -3.0, 3.0), rng.random_range(0.005..0.6)).unwrap();
        let hw = v(
            rng.random_range(0.0..0.6),
            rng.random_range(0.0..0.6),
            rng.random_range(0.0..0.6),
        );
        let ct = Cuboid::new(uniform(&mut rng, -1.5, 1.5), hw).unwrap();
        let source = Pose::new(RotationVec(in_cuboid(&mut rng, &cr)), in_cuboid(&mut rng, &ct));
        let m = rng.random_range(1..=8);
        let points: Vec<Vec3d> = (0..m).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let mut bearings = Vec::new();
        for p in &points {
            let x = source.transform(*p);
            if rng.random_bool(0.6) && x.norm() > 0.0 {
                // perturbed so some bearings sit near the threshold
                let f = x / x.norm() + unit(&mut rng) * rng.random_range(0.0..0.1);
                bearings.push(Bearing::new(f).unwrap());
            }
        }
        for _ in 0..rng.random_range(0..4) {
            bearings.push(Bearing::new(unit(&mut rng)).unwrap());
        }
        let theta = rng.random_range(1.0f64..30.0).to_radians();
        let domain = TranslationDomain::single(ct, 1e-3).unwrap();
        let inst = ProblemInstanced::new(bearings, points, theta, domain).unwrap();

        let poses: Vec<Pose<f64>> = std::iter::once(source)
            .chain((0..4).map(|_| Pose::new(RotationVec(in_cuboid(&mut rng, &cr)), in_cuboid(&mut rng, &ct))))
            .collect();
        for mode in MODES {
            let ub = upper_bound(&cr, &ct, &inst, mode);
            violations += poses.iter().filter(|p| objective(p, &inst) > ub).count();
            let centre = objective(&Pose::new(RotationVec(cr.center), ct.center), &inst);
            if rbb_bounds(&cr, &ct, &inst, mode, false).0 != centre {
                lower_mismatch += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        violations == 0 && lower_mismatch == 0 && secs < 60.0,
        format!(
            "1000 triples x 3 modes: {violations} upper violations, {lower_mismatch} centre mismatches, {secs:.1} s"
        ),
    )
}

fn c2_bound_dominance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = f64::NEG_INFINITY;
    let mut max_gap = 0.0f64;
    for k in 0..10_000 {
        let hw = v(
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
        );
        let ct = Cuboid::new(uniform(&mut rng, -2.0, 2.0), hw).unwrap();
        let near = k % 2 == 0;
        let p = if near {
            let d = uniform(&mut rng, -1.0, 1.0);
            ct.center + v(d.x * hw.x, d.y * hw.y, d.z * hw.z) * rng.random_range(0.9..1.6)
        } else {
            ct.center + uniform(&mut rng, -5.0, 5.0)
        };
        let (tight, weak) = (psi_t(p, &ct), psi_t_weak(p, &ct));
        worst = worst.max(tight - weak);
        if near {
            max_gap = max_gap.max(weak - tight);
        }
    }
    verdict(
        worst <= 1e-12 && max_gap > 1.0,
        format!("max(psi_t - psi_t_weak) = {worst:.3e}, largest near-cuboid gap {max_gap:.3} rad"),
    )
}

fn c3_angle_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_lipschitz = f64::NEG_INFINITY;
    for k in 0..10_000 {
        let r1 = in_ball(&mut rng, std::f64::consts::PI);
        let r2 = if k % 2 == 0 {
            in_ball(&mut rng, std::f64::consts::PI)
        } else {
            r1 + in_ball(&mut rng, 0.05)
        };
        let p = unit(&mut rng) * rng.random_range(0.1..10.0);
        let a = angular_distance(rodrigues(RotationVec(r1)).apply(p), rodrigues(RotationVec(r2)).apply(p)).unwrap();
        worst_lipschitz = worst_lipschitz.max(a - (r1 - r2).norm());
    }
    let mut order_violations = 0;
    for k in 0..1000 {
        let cube = Cuboid::cube(uniform(&mut rng, -3.0, 3.0), rng.random_range(0.01..1.0)).unwrap();
        let f = unit(&mut rng);
        let sampled = sample_max_rotation_angle(f, &cube, 2000, k);
        let tight = psi_r_tight(f, &cube).unwrap();
        let weak = psi_r_weak(&cube);
        if !(sampled <= tight && tight <= weak) {
            order_violations += 1;
        }
    }
    verdict(
        worst_lipschitz <= 1e-9 && order_violations == 0,
        format!("max(angle - |r1 - r2|) = {worst_lipschitz:.3e} over 1e4; {order_violations}/1000 ordering violations"),
    )
}

/// Five points in `[-1, 1]^3`; three are seen by the camera and two bearings
/// are random.
fn cloud_instance(seed: u64) -> ProblemInstanced {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = || rng.random_range(-1.0..1.0);
    let gt = Pose::new(
        RotationVec(v(0.3 * r(), 0.3 * r(), 0.3 * r())),
        v(0.8 * r(), 0.8 * r(), 0.8 * r()),
    );
    let pts: Vec<Vec3d> = (0..5).map(|_| v(r(), r(), r())).collect();
    let mut bearings: Vec<_> = pts
        .iter()
        .take(3)
        .map(|&p| Bearing::new(gt.transform(p)).unwrap())
        .collect();
    for _ in 0..2 {
        bearings.push(Bearing::new(v(r(), r(), r())).unwrap());
    }
    let domain = TranslationDomain::single(Cuboid::cube(Vec3::zeros(), 1.0).unwrap(), 1e-3).unwrap();
    ProblemInstanced::new(bearings, pts, 5f64.to_radians(), domain).unwrap()
}

fn c4_oracle_optimality() -> Verdict {
    let mut failures = Vec::new();
    let mut slowest = 0.0f64;
    for seed in 1..=25u64 {
        let inst = cloud_instance(seed);
        let cfg = SolverConfig {
            time_budget: Some(30.0),
            ..Default::default()
        };
        let start = Instant::now();
        let sol = gopac_solve(&inst, &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let grid = grid_search_capped(&inst, 0.1, 0.1, 2_000_000_000).unwrap();
        let final_upper = sol.trace.last().map(|s| s.upper);
        let ok = sol.optimal
            && secs < 30.0
            && sol.nu_star >= grid.nu
            && final_upper == Some(sol.nu_star)
            && objective(&sol.pose, &inst) == sol.nu_star;
        if !ok {
            failures.push(format!(
                "seed {seed}: nu* {} grid {} optimal {} upper {final_upper:?} {secs:.1} s",
                sol.nu_star, grid.nu, sol.optimal
            ));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("25 instances certified, nu* >= grid nu, slowest solve {slowest:.1} s")
        } else {
            failures.join("; ")
        },
    )
}

struct Trial {
    inliers: bool,
    pose: bool,
    secs: f64,
}

fn synth_trial(cfg: &SynthConfig, budget: f64) -> Trial {
    let (inst, gt) = generate(cfg).unwrap();
    let sc = SolverConfig {
        time_budget: Some(budget),
        ..Default::default()
    };
    let start = Instant::now();
    let sol = gopac_solve(&inst, &sc).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let p = pose_success(&sol.pose, &gt.pose);
    Trial {
        inliers: inlier_success(sol.nu_star, &inst, &gt),
        pose: p.rot_ok && p.trans_ok,
        secs,
    }
}

fn rates(trials: &[Trial]) -> (f64, f64, f64) {
    let n = trials.len() as f64;
    (
        trials.iter().filter(|t| t.inliers).count() as f64 / n,
        trials.iter().filter(|t| t.pose).count() as f64 / n,
        median(trials.iter().map(|t| t.secs).collect()),
    )
}

fn c5_clean_torus() -> Verdict {
    let trials: Vec<Trial> = (1..=10u64)
        .map(|seed| {
            let cfg = SynthConfig {
                n_points: 20,
                seed,
                ..Default::default()
            };
            synth_trial(&cfg, 60.0)
        })
        .collect();
    let (inl, pose, med) = rates(&trials);
    verdict(
        inl == 1.0 && pose >= 0.9,
        format!("inlier success {inl:.2}, pose success {pose:.2}, median runtime {med:.2} s"),
    )
}

fn c6_outliers() -> Verdict {
    let trials: Vec<Trial> = (1..=10u64)
        .map(|seed| {
            let cfg = SynthConfig {
                n_points: 10,
                omega_2d: 0.5,
                seed,
                ..Default::default()
            };
            synth_trial(&cfg, 15.0)
        })
        .collect();
    let (inl, pose, med) = rates(&trials);
    verdict(
        inl >= 0.8,
        format!("inlier success {inl:.2}, pose success {pose:.2}, median runtime {med:.2} s (15 s budget)"),
    )
}

fn c7_ablation() -> Verdict {
    let domain = TranslationDomain::single(Cuboid::cube(v(0.0, 0.0, -4.0), 0.2).unwrap(), 1e-3).unwrap();
    let mut times = [Vec::new(), Vec::new()];
    for seed in 1..=10u64 {
        let cfg = SynthConfig {
            n_points: 8,
            omega_2d: 0.5,
            prior: Prior::Domain(domain.clone()),
            seed,
            ..Default::default()
        };
        let (inst, _) = generate(&cfg).unwrap();
        for (k, mode) in [BoundMode::Gamma, BoundMode::WeakSphere].into_iter().enumerate() {
            let sc = SolverConfig {
                bound_mode: mode,
                time_budget: Some(60.0),
                ..Default::default()
            };
            let start = Instant::now();
            gopac_solve(&inst, &sc).unwrap();
            times[k].push(start.elapsed().as_secs_f64());
        }
    }
    let [gamma, weak] = times.map(median);
    verdict(
        gamma <= weak,
        format!("median runtime gamma {gamma:.2} s, weak {weak:.2} s"),
    )
}

/// Points in `[-1, 1]^3` and a 0.5-wide cube around the true camera centre.
fn local_instance(seed: u64) -> ProblemInstanced {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = rng.random_range(4..=7);
    let n_out = rng.random_range(1..=3);
    let mut r = || rng.random_range(-1.0..1.0);
    let gt = Pose::new(
        RotationVec(v(0.3 * r(), 0.3 * r(), 0.3 * r())),
        v(0.8 * r(), 0.8 * r(), 0.8 * r()),
    );
    let pts: Vec<Vec3d> = (0..n_in + n_out).map(|_| v(r(), r(), r())).collect();
    let mut bearings: Vec<_> = pts[..n_in]
        .iter()
        .map(|&p| Bearing::new(gt.transform(p)).unwrap())
        .collect();
    for _ in 0..n_out {
        bearings.push(Bearing::new(v(r(), r(), r())).unwrap());
    }
    let h = 0.25;
    let ct = Cuboid::cube(gt.t + v(0.1 * h, -0.1 * h, 0.05 * h), h).unwrap();
    let domain = TranslationDomain::single(ct, 1e-3).unwrap();
    ProblemInstanced::new(bearings, pts, 5f64.to_radians(), domain).unwrap()
}

fn c8_guess_and_verify() -> Verdict {
    let mut failures = Vec::new();
    for seed in 1..=20u64 {
        let inst = local_instance(seed);
        let plain = gopac_solve(&inst, &SolverConfig::default()).unwrap();
        let gv = gopac_solve(
            &inst,
            &SolverConfig {
                guess_verify: true,
                ..Default::default()
            },
        )
        .unwrap();
        if !(plain.optimal && gv.optimal && plain.nu_star == gv.nu_star) {
            failures.push(format!("seed {seed}: {} vs {}", plain.nu_star, gv.nu_star));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "20 instances, identical certified nu*".into()
        } else {
            failures.join("; ")
        },
    )
}

fn c9_parallel() -> Verdict {
    let mut failures = Vec::new();
    for seed in 1..=10u64 {
        let inst = local_instance(seed);
        let nus: Vec<(usize, bool)> = [1, 2, 4]
            .iter()
            .map(|&threads| {
                let sol = gopac_solve(
                    &inst,
                    &SolverConfig {
                        threads,
                        ..Default::default()
                    },
                )
                .unwrap();
                (sol.nu_star, sol.optimal)
            })
            .collect();
        if !nus.iter().all(|&(nu, opt)| opt && nu == nus[0].0) {
            failures.push(format!("seed {seed}: {nus:?}"));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "10 instances, threads 1/2/4 agree".into()
        } else {
            failures.join("; ")
        },
    )
}

fn c10_refinement() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = 0.0;
    for seed in 1..=20u64 {
        let cfg = SynthConfig {
            n_points: 20,
            sigma_px: 0.0,
            seed,
            ..Default::default()
        };
        let (inst, gt) = generate(&cfg).unwrap();
        let rot = rodrigues(gt.pose.r);
        let tilt = rodrigues(RotationVec(unit(&mut rng) * 0.05));
        let init = Pose::new(tilt.compose(&rot).to_rotation_vec(), gt.pose.t + unit(&mut rng) * 0.05);
        let out = refine_pnp(&gt.inlier_matching, &inst, &init).unwrap();
        let rot_err = rodrigues(out.pose.r).angle_to(&rot);
        let trans_err = (out.pose.t - gt.pose.t).norm();
        worst = worst.max(out.final_cost).max(rot_err).max(trans_err);
    }
    verdict(
        worst <= 1e-6,
        format!("largest residual or pose error over 20 instances {worst:.3e}"),
    )
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("C1 bound validity", c1_bound_validity),
        ("C2 bound dominance", c2_bound_dominance),
        ("C3 rotation angle checks", c3_angle_bounds),
        ("C4 oracle optimality", c4_oracle_optimality),
        ("C5 clean torus trials", c5_clean_torus),
        ("C6 outlier robustness", c6_outliers),
        ("C7 bound ablation", c7_ablation),
        ("C8 guess-and-verify equivalence", c8_guess_and_verify),
        ("C9 parallel equivalence", c9_parallel),
        ("C10 refinement contract", c10_refinement),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, run) in criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1} s]", out.detail, start.elapsed().as_secs_f64());
        failed += !out.pass as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
