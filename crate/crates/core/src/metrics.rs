//! Probe pose errors (position, tilt, spin) and grouped statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_onto_plane, safe_acos, RigidTransform};
use crate::guidance::ProbePose;
use crate::jsonio;

/// Projected image axes shorter than this leave spin undefined.
pub const SPIN_DEGENERATE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseError {
    pub e_pos_mm: f64,
    pub e_tilt_deg: f64,
    /// `None` when either image axis is (nearly) parallel to the thorax normal.
    pub e_spin_deg: Option<f64>,
}

impl PoseError {
    pub fn spin_undefined(&self) -> bool {
        self.e_spin_deg.is_none()
    }
}

/// Errors between two probe frames given as rigid transforms.
pub fn transform_error(a: &RigidTransform, b: &RigidTransform, thorax: &RigidTransform) -> PoseError {
    let (ra, rb) = (a.rotation_matrix(), b.rotation_matrix());
    let e_pos_mm = (a.translation() - b.translation()).norm() * 1000.0;
    let e_tilt_deg = safe_acos(ra.column(2).dot(&rb.column(2))).to_degrees();
    let n = thorax.rotation_matrix().column(2).into_owned();
    let xa = project_onto_plane(&ra.column(0).into_owned(), &n);
    let xb = project_onto_plane(&rb.column(0).into_owned(), &n);
    let (la, lb) = (xa.norm(), xb.norm());
    let e_spin_deg = if la < SPIN_DEGENERATE_EPS || lb < SPIN_DEGENERATE_EPS {
        None
    } else {
        Some(safe_acos(xa.dot(&xb) / (la * lb)).to_degrees())
    };
    PoseError {
        e_pos_mm,
        e_tilt_deg,
        e_spin_deg,
    }
}

pub fn pose_error(a: &ProbePose, b: &ProbePose, thorax: &RigidTransform) -> PoseError {
    transform_error(&a.pose, &b.pose, thorax)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    GuidedPred,
    PredGt,
    GuidedGt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSample {
    pub comparison: Comparison,
    pub posture: String,
    pub subject: String,
    pub view_id: String,
    pub error: PoseError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn stats(values: &[f64]) -> Result<Stats> {
    if values.is_empty() {
        return Err(Error::EmptyGroup("no samples".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Stats {
        count: values.len(),
        mean,
        std: var.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupStats {
    pub comparison: Comparison,
    /// `None` for aggregates over every posture.
    pub posture: Option<String>,
    pub subject: Option<String>,
    pub e_pos_mm: Stats,
    pub e_tilt_deg: Stats,
    /// Over samples with a defined spin; `None` when there are none.
    pub e_spin_deg: Option<Stats>,
    pub spin_undefined: usize,
}

fn group(comparison: Comparison, posture: Option<&str>, subject: Option<&str>, samples: &[&ErrorSample]) -> Result<GroupStats> {
    if samples.is_empty() {
        return Err(Error::EmptyGroup(format!("{comparison:?}/{posture:?}/{subject:?}")));
    }
    let pos: Vec<f64> = samples.iter().map(|s| s.error.e_pos_mm).collect();
    let tilt: Vec<f64> = samples.iter().map(|s| s.error.e_tilt_deg).collect();
    let spin: Vec<f64> = samples.iter().filter_map(|s| s.error.e_spin_deg).collect();
    Ok(GroupStats {
        comparison,
        posture: posture.map(String::from),
        subject: subject.map(String::from),
        e_pos_mm: stats(&pos)?,
        e_tilt_deg: stats(&tilt)?,
        e_spin_deg: if spin.is_empty() { None } else { Some(stats(&spin)?) },
        spin_undefined: samples.len() - spin.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReport {
    pub schema_version: u32,
    /// Per comparison: overall, then per posture, then per subject.
    pub groups: Vec<GroupStats>,
    pub samples: Vec<ErrorSample>,
}

impl ErrorReport {
    pub fn find(&self, comparison: Comparison, posture: Option<&str>, subject: Option<&str>) -> Option<&GroupStats> {
        self.groups
            .iter()
            .find(|g| g.comparison == comparison && g.posture.as_deref() == posture && g.subject.as_deref() == subject)
    }
}

/// Groups samples by comparison class, posture and subject.
pub fn summarize(samples: &[ErrorSample]) -> Result<ErrorReport> {
    if samples.is_empty() {
        return Err(Error::EmptyGroup("no samples".into()));
    }
    let mut by_cmp: BTreeMap<Comparison, Vec<&ErrorSample>> = BTreeMap::new();
    for s in samples {
        by_cmp.entry(s.comparison).or_default().push(s);
    }
    let mut groups = vec![];
    for (cmp, list) in &by_cmp {
        groups.push(group(*cmp, None, None, list)?);
        let mut postures: BTreeMap<&str, Vec<&ErrorSample>> = BTreeMap::new();
        let mut subjects: BTreeMap<&str, Vec<&ErrorSample>> = BTreeMap::new();
        for s in list {
            postures.entry(&s.posture).or_default().push(s);
            subjects.entry(&s.subject).or_default().push(s);
        }
        for (p, l) in &postures {
            groups.push(group(*cmp, Some(p), None, l)?);
        }
        for (sub, l) in &subjects {
            groups.push(group(*cmp, None, Some(sub), l)?);
        }
    }
    Ok(ErrorReport {
        schema_version: jsonio::SCHEMA_VERSION,
        groups,
        samples: samples.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{unit_quaternion_about, Vec3};

    #[test]
    fn two_point_stats() {
        let s = stats(&[10.0, 20.0]).unwrap();
        assert_eq!((s.mean, s.std), (15.0, 5.0));
        let s = stats(&[7.5]).unwrap();
        assert_eq!((s.mean, s.std), (7.5, 0.0));
        assert!(matches!(stats(&[]), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn three_four_five() {
        let a = RigidTransform::identity();
        let b = RigidTransform::from_translation(Vec3::new(0.003, 0.004, 0.0));
        let e = transform_error(&a, &b, &RigidTransform::identity());
        assert_eq!(e.e_pos_mm, 5.0);
        assert_eq!(e.e_tilt_deg, 0.0);
        assert_eq!(e.e_spin_deg, Some(0.0));
    }

    #[test]
    fn degenerate_spin_is_flagged() {
        // Image axis along the thorax normal.
        let a = RigidTransform::new(unit_quaternion_about(&Vec3::y(), -std::f64::consts::FRAC_PI_2), Vec3::zeros());
        let e = transform_error(&a, &RigidTransform::identity(), &RigidTransform::identity());
        assert!(e.spin_undefined());
        assert!(e.e_tilt_deg.is_finite());
    }

    #[test]
    fn summarize_groups() {
        let mk = |cmp, posture: &str, pos| ErrorSample {
            comparison: cmp,
            posture: posture.into(),
            subject: "s0".into(),
            view_id: "v".into(),
            error: PoseError {
                e_pos_mm: pos,
                e_tilt_deg: 1.0,
                e_spin_deg: None,
            },
        };
        let samples = vec![
            mk(Comparison::PredGt, "supine", 10.0),
            mk(Comparison::PredGt, "supine", 20.0),
            mk(Comparison::PredGt, "left_lateral_decubitus", 30.0),
        ];
        let r = summarize(&samples).unwrap();
        let g = r.find(Comparison::PredGt, Some("supine"), None).unwrap();
        assert_eq!((g.e_pos_mm.mean, g.e_pos_mm.std), (15.0, 5.0));
        assert_eq!(r.find(Comparison::PredGt, None, None).unwrap().e_pos_mm.count, 3);
        assert_eq!(g.spin_undefined, 2);
        assert!(g.e_spin_deg.is_none());
        assert!(summarize(&[]).is_err());
    }
}
