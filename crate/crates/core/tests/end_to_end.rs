use gopac::bounds::{objective, BoundMode};
use gopac::domain::{Cuboid, TranslationDomain};
use gopac::geometry::{Bearing, Pose, RotationVec, Vec3};
use gopac::oracle::grid_search_capped;
use gopac::solver::{gopac_solve, SolverConfig};
use gopac::synth::{generate, pose_success, Prior, SynthConfig};
use gopac::{ProblemInstanced, ProblemInstancef, SolverConfigd};

#[test]
fn noise_free_instance_recovers_the_pose() {
    let cfg = SynthConfig {
        n_points: 6,
        sigma_px: 0.0,
        seed: 17,
        ..Default::default()
    };
    let (inst, gt) = generate(&cfg).unwrap();
    assert_eq!(objective(&gt.pose, &inst), inst.n_bearings());
    let sol = gopac_solve(&inst, &SolverConfigd::default()).unwrap();
    assert!(sol.optimal);
    assert_eq!(sol.nu_star, inst.n_bearings());
    let s = pose_success(&sol.pose, &gt.pose);
    assert!(s.rot_ok && s.trans_ok);
}

#[test]
fn every_bound_mode_certifies_the_same_count() {
    let domain = TranslationDomain::single(Cuboid::cube(Vec3::new(0.0, 0.0, -4.0), 0.2).unwrap(), 1e-3).unwrap();
    let cfg = SynthConfig {
        n_points: 6,
        omega_2d: 0.25,
        prior: Prior::Domain(domain),
        seed: 5,
        ..Default::default()
    };
    let (inst, _) = generate(&cfg).unwrap();
    let counts: Vec<usize> = [BoundMode::WeakSphere, BoundMode::TightCuboid, BoundMode::Gamma]
        .into_iter()
        .map(|bound_mode| {
            let sol = gopac_solve(
                &inst,
                &SolverConfigd {
                    bound_mode,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(sol.optimal);
            sol.nu_star
        })
        .collect();
    assert!(counts.iter().all(|&c| c == counts[0]), "{counts:?}");
}

#[test]
fn single_pair_is_found() {
    let p = Vec3::new(0.3, -0.2, 2.0);
    let gt = Pose::new(RotationVec(Vec3::new(0.1, 0.2, -0.1)), Vec3::new(0.05, 0.0, 0.0));
    let f = Bearing::new(gt.transform(p)).unwrap();
    let domain = TranslationDomain::single(Cuboid::cube(Vec3::zeros(), 0.5).unwrap(), 1e-3).unwrap();
    let inst = ProblemInstanced::new(vec![f], vec![p], 1f64.to_radians(), domain).unwrap();
    let sol = gopac_solve(&inst, &SolverConfig::default()).unwrap();
    assert!(sol.optimal);
    assert_eq!(sol.nu_star, 1);
}

#[test]
fn certified_count_is_never_below_the_grid() {
    let pts = [
        Vec3::new(0.5, 0.2, 3.0),
        Vec3::new(-0.4, 0.1, 2.5),
        Vec3::new(0.1, -0.6, 3.5),
    ];
    let gt = Pose::new(RotationVec(Vec3::new(0.05, -0.1, 0.02)), Vec3::new(0.1, 0.05, 0.0));
    let mut bearings: Vec<_> = pts.iter().map(|&p| Bearing::new(gt.transform(p)).unwrap()).collect();
    bearings.push(Bearing::new(Vec3::new(0.3, 0.3, 1.0)).unwrap());
    let domain = TranslationDomain::single(Cuboid::cube(Vec3::zeros(), 0.3).unwrap(), 1e-3).unwrap();
    let inst = ProblemInstanced::new(bearings, pts.to_vec(), 3f64.to_radians(), domain).unwrap();
    let sol = gopac_solve(&inst, &SolverConfig::default()).unwrap();
    let grid = grid_search_capped(&inst, 0.2, 0.1, 100_000_000).unwrap();
    assert!(sol.optimal);
    assert!(sol.nu_star >= grid.nu);
    assert_eq!(objective(&grid.pose, &inst), grid.nu);
}

#[test]
fn single_precision_solves_too() {
    let cfg = SynthConfig {
        n_points: 6,
        sigma_px: 0.0,
        seed: 23,
        ..Default::default()
    };
    let (inst, _) = generate(&cfg).unwrap();
    let inst32: ProblemInstancef = inst.cast();
    let sol32 = gopac_solve(&inst32, &SolverConfig::default()).unwrap();
    let sol64 = gopac_solve(&inst, &SolverConfig::default()).unwrap();
    assert!(sol32.optimal && sol64.optimal);
    assert_eq!(sol32.nu_star, sol64.nu_star);
}
