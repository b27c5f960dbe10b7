use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gopac::bounds::BoundMode;
use gopac::estimators::ransac_baseline;
use gopac::solver::gopac_solve;
use gopac::synth::{generate, SynthConfig};
use gopac::SolverConfigd;
use serde::{Deserialize, Serialize};

use crate::report::SuccessFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    NPoints,
    #[serde(rename = "omega_3d")]
    Omega3d,
    #[serde(rename = "omega_2d")]
    Omega2d,
    SigmaPx,
    ThetaDeg,
}

impl Param {
    fn name(self) -> &'static str {
        match self {
            Param::NPoints => "n_points",
            Param::Omega3d => "omega_3d",
            Param::Omega2d => "omega_2d",
            Param::SigmaPx => "sigma_px",
            Param::ThetaDeg => "theta_deg",
        }
    }

    fn apply(self, cfg: &mut SynthConfig, v: f64) -> Result<()> {
        match self {
            Param::NPoints => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    bail!("n_points values must be positive integers, got {v}");
                }
                cfg.n_points = v as usize;
            }
            Param::Omega3d => cfg.omega_3d = v,
            Param::Omega2d => cfg.omega_2d = v,
            Param::SigmaPx => cfg.sigma_px = v,
            Param::ThetaDeg => cfg.theta = v.to_radians(),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    #[default]
    Gopac,
    Ransac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub name: SolverName,
    pub bound: BoundMode,
    pub threads: usize,
    pub guess_verify: bool,
    pub time_budget: Option<f64>,
    pub ransac_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            name: SolverName::Gopac,
            bound: BoundMode::Gamma,
            threads: 1,
            guess_verify: false,
            time_budget: Some(60.0),
            ransac_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: Param,
    pub values: Vec<f64>,
    pub trials: usize,
    /// Trial `k` uses seed `base.seed + k`.
    #[serde(default)]
    pub base: SynthConfig,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub param: &'static str,
    pub value: f64,
    pub trials: usize,
    pub succ_inliers: f64,
    pub succ_pose: f64,
    pub median_runtime_s: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn trial(cfg: &SynthConfig, s: &SolverSettings) -> Result<(SuccessFlags, f64)> {
    let (inst, gt) = generate(cfg).context("instance generation failed")?;
    let start = Instant::now();
    let sol = match s.name {
        SolverName::Gopac => {
            let sc = SolverConfigd {
                bound_mode: s.bound,
                threads: s.threads,
                guess_verify: s.guess_verify,
                time_budget: s.time_budget,
                ..Default::default()
            };
            gopac_solve(&inst, &sc)?
        }
        SolverName::Ransac => ransac_baseline(&inst, s.ransac_iterations, cfg.seed)?,
    };
    let runtime = start.elapsed().as_secs_f64();
    Ok((SuccessFlags::evaluate(sol.nu_star, &sol.pose, &inst, &gt), runtime))
}

/// Runs the sweep, writing one CSV row per value as soon as it is complete.
pub fn run<W: Write>(sweep: &Sweep, out: W) -> Result<Vec<Row>> {
    if sweep.trials == 0 {
        bail!("trials must be positive");
    }
    let mut w = csv::Writer::from_writer(out);
    let mut rows = Vec::new();
    for &value in &sweep.values {
        let (mut inl, mut pose, mut times) = (0usize, 0usize, Vec::new());
        for k in 0..sweep.trials {
            let mut cfg = sweep.base.clone();
            sweep.param.apply(&mut cfg, value)?;
            cfg.seed = sweep.base.seed.wrapping_add(k as u64);
            let (flags, t) =
                trial(&cfg, &sweep.solver).with_context(|| format!("{} = {value}, trial {k}", sweep.param.name()))?;
            inl += flags.inliers as usize;
            pose += flags.pose as usize;
            times.push(t);
        }
        let n = sweep.trials as f64;
        let row = Row {
            param: sweep.param.name(),
            value,
            trials: sweep.trials,
            succ_inliers: inl as f64 / n,
            succ_pose: pose as f64 / n,
            median_runtime_s: median(times),
        };
        w.serialize(&row)?;
        w.flush()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(Vec::new()).is_nan());
    }

    #[test]
    fn sweep_parses_with_defaults() {
        let s: Sweep = serde_json::from_str(r#"{"param": "omega_2d", "values": [0, 0.5], "trials": 2}"#).unwrap();
        assert_eq!(s.param, Param::Omega2d);
        assert_eq!(s.solver, SolverSettings::default());
        assert!(serde_json::from_str::<Sweep>(r#"{"param": "bogus", "values": [], "trials": 1}"#).is_err());
    }

    #[test]
    fn fractional_point_counts_are_rejected() {
        let mut cfg = SynthConfig::default();
        assert!(Param::NPoints.apply(&mut cfg, 2.5).is_err());
        Param::NPoints.apply(&mut cfg, 12.0).unwrap();
        assert_eq!(cfg.n_points, 12);
    }
}
