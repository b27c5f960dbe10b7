use gopac::bounds::{objective, psi_r_tight, psi_r_weak, psi_t, psi_t_weak, upper_bound, BoundMode};
use gopac::domain::{Cuboid, TranslationDomain};
use gopac::geometry::{angle_between, angular_distance, rodrigues, Bearing, Pose, RotationVec, Vec3};
use gopac::io::{instance_to_json, parse_instance};
use gopac::oracle::{sample_max_rotation_angle, sample_max_translation_angle};
use gopac::solver::{gopac_solve, SolverConfig};
use gopac::synth::{generate, Prior, SynthConfig};
use gopac::{ProblemInstanced, Vec3d};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3d> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cube(c: f64, h: (f64, f64)) -> impl Strategy<Value = Cuboid<f64>> {
    (vec3(c), h.0..h.1).prop_map(|(c, h)| Cuboid::cube(c, h).unwrap())
}

fn cuboid(c: f64, h: f64) -> impl Strategy<Value = Cuboid<f64>> {
    (vec3(c), 0.0..h, 0.0..h, 0.0..h).prop_map(|(c, x, y, z)| Cuboid::new(c, Vec3::new(x, y, z)).unwrap())
}

fn lerp(c: &Cuboid<f64>, u: Vec3d) -> Vec3d {
    c.center + Vec3::new(u.x * c.half_widths.x, u.y * c.half_widths.y, u.z * c.half_widths.z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn upper_bound_dominates_interior_objective(
        cr in cube(3.0, (0.01, 0.5)),
        ct in cuboid(1.0, 0.5),
        ur in vec3(1.0),
        ut in vec3(1.0),
        pts in prop::collection::vec(vec3(2.0), 1..6),
        noise in prop::collection::vec(vec3(0.05), 6),
        theta_deg in 1.0f64..20.0,
    ) {
        let pose = Pose::new(RotationVec(lerp(&cr, ur)), lerp(&ct, ut));
        let bearings: Vec<_> = pts
            .iter()
            .zip(&noise)
            .filter_map(|(&p, &n)| {
                let x = pose.transform(p);
                (x.norm() > 1e-9).then(|| Bearing::new(x / x.norm() + n).unwrap())
            })
            .collect();
        let domain = TranslationDomain::single(ct, 1e-3).unwrap();
        let inst = ProblemInstanced::new(bearings, pts, theta_deg.to_radians(), domain).unwrap();
        let nu = objective(&pose, &inst);
        for mode in [BoundMode::WeakSphere, BoundMode::TightCuboid, BoundMode::Gamma] {
            prop_assert!(nu <= upper_bound(&cr, &ct, &inst, mode));
        }
    }

    #[test]
    fn translation_angles_are_ordered(p in vec3(4.0), ct in cuboid(1.0, 1.0), seed in 0u64..1000) {
        let sampled = sample_max_translation_angle(p, &ct, 200, seed);
        let tight = psi_t(p, &ct);
        prop_assert!(sampled <= tight + 1e-12);
        prop_assert!(tight <= psi_t_weak(p, &ct) + 1e-12);
    }

    #[test]
    fn rotation_angles_are_ordered(v in vec3(1.0), cr in cube(3.0, (0.001, 1.0)), seed in 0u64..1000) {
        prop_assume!(v.norm() > 1e-3);
        let sampled = sample_max_rotation_angle(v, &cr, 200, seed);
        let tight = psi_r_tight(v, &cr).unwrap();
        prop_assert!(sampled <= tight);
        prop_assert!(tight <= psi_r_weak(&cr));
    }

    #[test]
    fn rotation_angle_is_lipschitz(r1 in vec3(2.0), r2 in vec3(2.0), p in vec3(5.0)) {
        prop_assume!(p.norm() > 1e-6);
        let a = angular_distance(rodrigues(RotationVec(r1)).apply(p), rodrigues(RotationVec(r2)).apply(p)).unwrap();
        prop_assert!(a <= (r1 - r2).norm() + 1e-9);
    }

    #[test]
    fn instance_files_round_trip(seed in 0u64..500, omega_2d in 0.0f64..0.6) {
        let cfg = SynthConfig { n_points: 6, omega_2d, seed, ..Default::default() };
        let (inst, _) = generate(&cfg).unwrap();
        let (back, off) = parse_instance(&instance_to_json(&inst)).unwrap();
        prop_assert!(off.is_empty());
        prop_assert_eq!(&back.points, &inst.points);
        prop_assert_eq!(&back.domain, &inst.domain);
        for (a, b) in back.bearings.iter().zip(&inst.bearings) {
            prop_assert!((a.direction() - b.direction()).norm() <= 1e-15);
        }
        prop_assert!((back.theta - inst.theta).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Solutions attain their count, correspondences are inliers and the
    /// trace is monotone.
    #[test]
    fn solutions_are_consistent(seed in 0u64..10_000) {
        let domain = TranslationDomain::single(Cuboid::cube(Vec3::new(0.0, 0.0, -4.0), 0.2).unwrap(), 1e-3).unwrap();
        let cfg = SynthConfig {
            n_points: 6,
            omega_2d: 0.2,
            sigma_px: 1.0,
            prior: Prior::Domain(domain),
            seed,
            ..Default::default()
        };
        let (inst, _) = generate(&cfg).unwrap();
        let sol = gopac_solve(&inst, &SolverConfig { time_budget: Some(20.0), ..Default::default() }).unwrap();
        prop_assert_eq!(objective(&sol.pose, &inst), sol.nu_star);
        let rot = rodrigues(sol.pose.r);
        for c in &sol.correspondences {
            let x = rot.apply(inst.points[c.point_index] - sol.pose.t);
            prop_assert!(angle_between(inst.bearings[c.bearing_index].direction(), x) <= inst.theta);
        }
        prop_assert_eq!(sol.correspondences.len(), sol.nu_star);
        for w in sol.trace.windows(2) {
            prop_assert!(w[0].lower <= w[1].lower);
            prop_assert!(w[0].upper >= w[1].upper);
        }
        for s in &sol.trace {
            prop_assert!(s.lower <= s.upper);
        }
        if sol.optimal {
            prop_assert_eq!(sol.trace.last().unwrap().upper, sol.nu_star);
        }
        for p in &inst.points {
            prop_assert!((*p - sol.pose.t).norm() >= inst.domain.zeta);
        }
    }
}
