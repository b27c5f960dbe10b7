//! JSON instance files.
//!
//! ```text
//! { "bearings": [[x, y, z], ...], "points": [[x, y, z], ...], "theta_deg": 1.0,
//!   "translation_domain": { "cuboids": [{ "center": [..], "half_widths": [..] }], "zeta": 0.001 } }
//! ```

use serde::{Deserialize, Serialize};

use crate::bounds::ProblemInstance;
use crate::domain::{Cuboid, TranslationDomain};
use crate::error::{Error, Result};
use crate::geometry::{Bearing, Vec3};

/// Bearings whose norm is further than this from one are reported.
pub const NORM_WARN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuboidFile {
    pub center: [f64; 3],
    pub half_widths: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub cuboids: Vec<CuboidFile>,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub bearings: Vec<[f64; 3]>,
    pub points: Vec<[f64; 3]>,
    pub theta_deg: f64,
    pub translation_domain: DomainFile,
}

fn format_error(field: impl Into<String>, message: impl ToString) -> Error {
    Error::Format {
        field: field.into(),
        message: message.to_string(),
    }
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<document>".to_string() } else { path };
            format_error(field, e.into_inner())
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files always serialise")
    }

    pub fn from_instance(inst: &ProblemInstance<f64>) -> Self {
        Self {
            bearings: inst.bearings.iter().map(|b| b.direction().to_array()).collect(),
            points: inst.points.iter().map(|p| p.to_array()).collect(),
            theta_deg: inst.theta.to_degrees(),
            translation_domain: DomainFile {
                cuboids: inst
                    .domain
                    .cuboids
                    .iter()
                    .map(|c| CuboidFile {
                        center: c.center.to_array(),
                        half_widths: c.half_widths.to_array(),
                    })
                    .collect(),
                zeta: inst.domain.zeta,
            },
        }
    }

    /// Builds the instance, normalising bearings. Bearings that were not
    /// unit length within [`NORM_WARN_TOLERANCE`] are returned by index and
    /// logged.
    pub fn to_instance(&self) -> Result<(ProblemInstance<f64>, Vec<usize>)> {
        let mut off_norm = Vec::new();
        let mut bearings = Vec::with_capacity(self.bearings.len());
        for (i, b) in self.bearings.iter().enumerate() {
            let v = Vec3::from_array(*b);
            let field = || format!("bearings[{i}]");
            if !v.is_finite() {
                return Err(format_error(field(), "not finite"));
            }
            let bearing = Bearing::new(v).map_err(|e| format_error(field(), e))?;
            if (v.norm() - 1.0).abs() > NORM_WARN_TOLERANCE {
                log::warn!("bearings[{i}] has norm {} and was normalised", v.norm());
                off_norm.push(i);
            }
            bearings.push(bearing);
        }
        let mut points = Vec::with_capacity(self.points.len());
        for (j, p) in self.points.iter().enumerate() {
            let v = Vec3::from_array(*p);
            if !v.is_finite() {
                return Err(format_error(format!("points[{j}]"), "not finite"));
            }
            points.push(v);
        }
        if !(self.theta_deg > 0.0 && self.theta_deg < 180.0) {
            return Err(format_error(
                "theta_deg",
                format!("must lie in (0, 180), got {}", self.theta_deg),
            ));
        }
        let dom = &self.translation_domain;
        if dom.cuboids.is_empty() {
            return Err(format_error(
                "translation_domain.cuboids",
                "at least one cuboid is required",
            ));
        }
        let cuboids = dom
            .cuboids
            .iter()
            .enumerate()
            .map(|(k, c)| {
                Cuboid::new(Vec3::from_array(c.center), Vec3::from_array(c.half_widths))
                    .map_err(|e| format_error(format!("translation_domain.cuboids[{k}]"), e))
            })
            .collect::<Result<Vec<_>>>()?;
        let domain =
            TranslationDomain::new(cuboids, dom.zeta).map_err(|e| format_error("translation_domain.zeta", e))?;
        let inst = ProblemInstance::new(bearings, points, self.theta_deg.to_radians(), domain)?;
        Ok((inst, off_norm))
    }
}

/// Parses an instance document; see [`InstanceFile::to_instance`].
pub fn parse_instance(text: &str) -> Result<(ProblemInstance<f64>, Vec<usize>)> {
    InstanceFile::from_json(text)?.to_instance()
}

pub fn instance_to_json(inst: &ProblemInstance<f64>) -> String {
    InstanceFile::from_instance(inst).to_json()
}
