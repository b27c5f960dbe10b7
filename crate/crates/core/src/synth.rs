//! Synthetic instances: random or lattice models seen by a camera on a torus
//! around them, with occlusion, pixel noise and image clutter.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bounds::{objective, ProblemInstance};
use crate::domain::{Cuboid, TranslationDomain};
use crate::error::{Error, Result};
use crate::estimators::Correspondence;
use crate::geometry::{bearing_from_pixel, Bearing, Intrinsics, Mat3, Pose, RotationMatrix, Vec3};

/// Camera-centre prior: the surface of a torus around the z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPrior {
    pub major_radius: f64,
    pub minor_radius: f64,
    /// Number of translation cubes approximating the torus.
    pub cube_count: usize,
    /// Cube half-width; `None` picks the smallest width that covers the
    /// whole torus surface.
    pub cube_half_width: Option<f64>,
}

impl Default for TorusPrior {
    fn default() -> Self {
        Self {
            major_radius: 4.0,
            minor_radius: 0.5,
            cube_count: 16,
            cube_half_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    Torus(TorusPrior),
    /// Camera centre uniform in the given domain, looking at the origin.
    Domain(TranslationDomain<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Points uniform in `[-1, 1]^3`.
    #[default]
    Random,
    /// The 27-point lattice `{-1, 0, 1}^3`; the point count is ignored.
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_points: usize,
    pub model: Model,
    /// Fraction of points whose bearings are withheld.
    pub omega_3d: f64,
    /// Fraction of the final bearings that are clutter.
    pub omega_2d: f64,
    pub sigma_px: f64,
    pub intrinsics: Intrinsics<f64>,
    pub image_size: (u32, u32),
    pub prior: Prior,
    pub theta: f64,
    pub zeta: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let (w, h) = (640u32, 480u32);
        let f = (w as f64 / 2.0) / 30f64.to_radians().tan();
        Self {
            n_points: 20,
            model: Model::Random,
            omega_3d: 0.0,
            omega_2d: 0.0,
            sigma_px: 2.0,
            intrinsics: Intrinsics {
                fx: f,
                fy: f,
                cx: w as f64 / 2.0,
                cy: h as f64 / 2.0,
            },
            image_size: (w, h),
            prior: Prior::Torus(TorusPrior::default()),
            theta: 1f64.to_radians(),
            zeta: 1e-3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, w) in [("omega_3d", self.omega_3d), ("omega_2d", self.omega_2d)] {
            if !(0.0..1.0).contains(&w) {
                return bad(format!("{name} must lie in [0, 1), got {w}"));
            }
        }
        if !(self.sigma_px >= 0.0) {
            return bad(format!("sigma_px must be non-negative, got {}", self.sigma_px));
        }
        if self.model == Model::Random && self.n_points == 0 {
            return bad("n_points must be positive".into());
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return bad("image size must be positive".into());
        }
        if let Prior::Torus(t) = &self.prior {
            if !(t.major_radius > 0.0 && t.minor_radius >= 0.0 && t.minor_radius < t.major_radius) {
                return bad("torus radii must satisfy 0 <= minor < major".into());
            }
            if t.cube_count == 0 {
                return bad("cube_count must be at least 1".into());
            }
        }
        Intrinsics::new(
            self.intrinsics.fx,
            self.intrinsics.fy,
            self.intrinsics.cx,
            self.intrinsics.cy,
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pose: Pose<f64>,
    pub inlier_matching: Vec<Correspondence>,
    pub point_occluded: Vec<bool>,
    pub bearing_outlier: Vec<bool>,
}

/// The 27 points of the `{-1, 0, 1}^3` lattice.
pub fn cad_lattice() -> Vec<Vec3<f64>> {
    let mut out = Vec::with_capacity(27);
    for x in [-1.0, 0.0, 1.0] {
        for y in [-1.0, 0.0, 1.0] {
            for z in [-1.0, 0.0, 1.0] {
                out.push(Vec3::new(x, y, z));
            }
        }
    }
    out
}

/// Smallest cube half-width for which `cube_count` cubes on the centreline
/// cover every point of the torus surface.
pub fn torus_cover_half_width(prior: &TorusPrior) -> f64 {
    let (big, small) = (prior.major_radius, prior.minor_radius);
    let alpha = std::f64::consts::PI / prior.cube_count.max(1) as f64;
    // farthest surface point from its nearest station, in the Euclidean norm
    (2.0 * big * (big + small) * (1.0 - alpha.cos()) + small * small).sqrt()
}

/// Cubes of half-width `h` at `cube_count` uniform stations on the torus
/// centreline, starting on the positive x axis.
pub fn torus_domain(prior: &TorusPrior, cube_count: usize, h: f64, zeta: f64) -> Result<TranslationDomain<f64>> {
    let n = cube_count.max(1);
    let cubes = (0..n)
        .map(|k| {
            let u = std::f64::consts::TAU * k as f64 / n as f64;
            Cuboid::cube(
                Vec3::new(prior.major_radius * u.cos(), prior.major_radius * u.sin(), 0.0),
                h,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    TranslationDomain::new(cubes, zeta)
}

/// Rotation whose optical axis points from `centre` to the origin, rolled by
/// `roll` about that axis.
fn look_at_origin(centre: Vec3<f64>, roll: f64) -> Result<RotationMatrix<f64>> {
    let z = (-centre).normalize().ok_or(Error::ZeroVector)?;
    let helper = if z.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let x0 = helper.cross(z).normalize().ok_or(Error::ZeroVector)?;
    let y0 = z.cross(x0);
    let x = x0 * roll.cos() + y0 * roll.sin();
    let y = z.cross(x);
    Ok(RotationMatrix(Mat3::from_rows(x, y, z)))
}

fn sample_torus(rng: &mut ChaCha8Rng, t: &TorusPrior) -> Vec3<f64> {
    let (big, small) = (t.major_radius, t.minor_radius);
    // area element is proportional to big + small cos v
    let v = loop {
        let v: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        if rng.random_range(0.0..big + small) <= big + small * v.cos() {
            break v;
        }
    };
    let u: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let rho = big + small * v.cos();
    Vec3::new(rho * u.cos(), rho * u.sin(), small * v.sin())
}

fn sample_domain(rng: &mut ChaCha8Rng, d: &TranslationDomain<f64>) -> Vec3<f64> {
    let total: f64 = d.cuboids.iter().map(|c| c.volume()).sum();
    let mut pick = rng.random_range(0.0..1.0) * total;
    let mut chosen = d.cuboids[d.cuboids.len() - 1];
    for c in &d.cuboids {
        if pick < c.volume() {
            chosen = *c;
            break;
        }
        pick -= c.volume();
    }
    let mut coord = |c: f64, h: f64| if h > 0.0 { rng.random_range(c - h..=c + h) } else { c };
    Vec3::new(
        coord(chosen.center.x, chosen.half_widths.x),
        coord(chosen.center.y, chosen.half_widths.y),
        coord(chosen.center.z, chosen.half_widths.z),
    )
}

/// Builds one instance and its ground truth. Bearings are shuffled, so their
/// order carries no information.
pub fn generate(cfg: &SynthConfig) -> Result<(ProblemInstance<f64>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<Vec3<f64>> = match cfg.model {
        Model::Random => (0..cfg.n_points)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect(),
        Model::Lattice => cad_lattice(),
    };
    let m = points.len();

    let (centre, domain) = match &cfg.prior {
        Prior::Torus(t) => {
            let c = sample_torus(&mut rng, t);
            let h = t.cube_half_width.unwrap_or_else(|| torus_cover_half_width(t));
            (c, torus_domain(t, t.cube_count, h, cfg.zeta)?)
        }
        Prior::Domain(d) => (sample_domain(&mut rng, d), d.clone()),
    };
    let roll = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let rot = look_at_origin(centre, roll)?;
    let pose = Pose::new(rot.to_rotation_vec(), centre);

    let n_occluded = (cfg.omega_3d * m as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut point_occluded = vec![false; m];
    for &j in &order[..n_occluded.min(m)] {
        point_occluded[j] = true;
    }
    // points behind the camera cannot be seen either
    for (j, p) in points.iter().enumerate() {
        if pose.transform(*p).z <= 0.0 {
            point_occluded[j] = true;
        }
    }

    let noise = Normal::new(0.0, cfg.sigma_px).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let k = &cfg.intrinsics;
    let mut rows: Vec<(Bearing<f64>, Option<usize>)> = Vec::new();
    for (j, p) in points.iter().enumerate() {
        if point_occluded[j] {
            continue;
        }
        let (u, v) = k.project(pose.transform(*p));
        let (du, dv) = if cfg.sigma_px > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        rows.push((bearing_from_pixel(k, u + du, v + dv), Some(j)));
    }
    let n_in = rows.len();
    if n_in == 0 {
        return Err(Error::Infeasible("no visible inlier points".into()));
    }
    let n_clutter = (cfg.omega_2d * n_in as f64 / (1.0 - cfg.omega_2d)).round() as usize;
    let (w, h) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    for _ in 0..n_clutter {
        let (u, v) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        rows.push((bearing_from_pixel(k, u, v), None));
    }
    rows.shuffle(&mut rng);

    let bearings = rows.iter().map(|r| r.0).collect();
    let bearing_outlier = rows.iter().map(|r| r.1.is_none()).collect();
    let inlier_matching = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.1.map(|j| Correspondence {
                bearing_index: i,
                point_index: j,
            })
        })
        .collect();
    let inst = ProblemInstance::new(bearings, points, cfg.theta, domain)?;
    Ok((
        inst,
        GroundTruth {
            pose,
            inlier_matching,
            point_occluded,
            bearing_outlier,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseSuccess {
    pub rot_ok: bool,
    pub trans_ok: bool,
    /// The ground-truth centre is at the origin, so the translation test
    /// used an absolute 0.1 threshold.
    pub absolute_fallback: bool,
}

/// Rotation error under 0.1 rad and relative camera-centre error under 0.1.
pub fn pose_success(est: &Pose<f64>, gt: &Pose<f64>) -> PoseSuccess {
    let rot_err = est.r.to_matrix().angle_to(&gt.r.to_matrix());
    let gt_norm = gt.t.norm();
    let err = (est.t - gt.t).norm();
    let absolute_fallback = gt_norm == 0.0;
    let trans_err = if absolute_fallback { err } else { err / gt_norm };
    PoseSuccess {
        rot_ok: rot_err < 0.1,
        trans_ok: trans_err < 0.1,
        absolute_fallback,
    }
}

/// The solver found at least as many inliers as the ground-truth pose has.
pub fn inlier_success(nu_star: usize, inst: &ProblemInstance<f64>, gt: &GroundTruth) -> bool {
    nu_star >= objective(&gt.pose, inst)
}
