use std::io::Write;

use gopac::estimators::Correspondence;
use gopac::solver::{SolveStats, TraceSample};
use gopac::synth::{inlier_success, pose_success, GroundTruth};
use gopac::{Posed, ProblemInstanced};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessFlags {
    pub inliers: bool,
    pub pose: bool,
}

impl SuccessFlags {
    pub fn evaluate(nu_star: usize, pose: &Posed, inst: &ProblemInstanced, gt: &GroundTruth) -> Self {
        let p = pose_success(pose, &gt.pose);
        Self {
            inliers: inlier_success(nu_star, inst, gt),
            pose: p.rot_ok && p.trans_ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub instance: String,
    pub solver: String,
    pub nu_star: usize,
    pub pose: Posed,
    pub optimal: bool,
    pub wall_time: f64,
    /// Present when a ground-truth file was supplied.
    pub success: Option<SuccessFlags>,
    /// Ground-truth pose and its inlier count, for recomputing `success`.
    pub reference: Option<Reference>,
    pub correspondences: Vec<Correspondence>,
    pub stats: Option<SolveStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub pose: Posed,
    pub nu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instance: String,
    pub nu: usize,
    pub pose: Posed,
    pub cells: u128,
    pub rot_step: f64,
    pub trans_step: f64,
    pub wall_time: f64,
}

pub const TRACE_HEADER: [&str; 5] = ["t_s", "lower", "upper", "volume_frac", "queue_size"];

pub fn write_trace<W: Write>(out: W, trace: &[TraceSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for s in trace {
        w.write_record([
            s.wall_time.to_string(),
            s.lower.to_string(),
            s.upper.to_string(),
            s.remaining_volume.to_string(),
            s.queue_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
fn read_trace(text: &str) -> csv::Result<Vec<TraceSample>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| rec[i].parse::<f64>().unwrap_or(f64::NAN);
            Ok(TraceSample {
                wall_time: num(0),
                lower: num(1) as usize,
                upper: num(2) as usize,
                remaining_volume: num(3),
                queue_size: num(4) as usize,
            })
        })
        .collect()
}
