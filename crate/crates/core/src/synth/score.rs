//! Scoring pipeline artifacts against synthetic truth.

use serde::{Deserialize, Serialize};

use crate::body::BodyModel;
use crate::error::{Error, Result};
use crate::fitting::{masked_vertex_rms, Observation};
use crate::guidance::GuidanceFile;
use crate::jsonio;
use crate::metrics::{pose_error, PoseError};
use crate::pipeline::FitOutput;
use crate::synth::GroundTruth;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewScore {
    pub view_id: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<PoseError>,
    /// Angle between the produced and true probe rotations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_error_rad: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scorecard {
    pub schema_version: u32,
    pub session_id: String,
    /// Consensus surface against the true surface, masked vertices.
    pub consensus_masked_rms_m: f64,
    pub inlier_precision: f64,
    pub inlier_recall: f64,
    /// Share of true outliers left out of the inlier set; `None` without outliers.
    pub outlier_exclusion_recall: Option<f64>,
    pub views: Vec<ViewScore>,
}

impl Scorecard {
    pub fn position_errors_mm(&self) -> Vec<f64> {
        self.views.iter().filter_map(|v| v.error.map(|e| e.e_pos_mm)).collect()
    }

    pub fn max_position_error_mm(&self) -> f64 {
        self.position_errors_mm().into_iter().fold(0.0, f64::max)
    }

    pub fn max_rotation_error_rad(&self) -> f64 {
        self.views.iter().filter_map(|v| v.rotation_error_rad).fold(0.0, f64::max)
    }

    pub fn outliers_excluded(&self) -> bool {
        self.outlier_exclusion_recall.map_or(true, |r| r == 1.0)
    }
}

pub fn score_run(surface: &BodyModel, fit: &FitOutput, guidance: &GuidanceFile, gt: &GroundTruth, frames: usize) -> Result<Scorecard> {
    if fit.session_id != gt.session_id {
        return Err(Error::IdMismatch(format!("fit `{}` vs truth `{}`", fit.session_id, gt.session_id)));
    }
    let fused = surface.pose(&fit.consensus.params)?;
    let truth = Observation::from_body(&surface.pose(&gt.surface_params)?);
    let consensus_masked_rms_m = masked_vertex_rms(surface, &fused.vertices, &truth, surface.torso_mask())?;

    let inliers = &fit.consensus.inlier_frames;
    let clean: Vec<usize> = (0..frames).filter(|i| !gt.outlier_frames.contains(i)).collect();
    let true_pos = inliers.iter().filter(|i| clean.contains(i)).count() as f64;
    let inlier_precision = if inliers.is_empty() { 0.0 } else { true_pos / inliers.len() as f64 };
    let inlier_recall = if clean.is_empty() { 1.0 } else { true_pos / clean.len() as f64 };
    let outlier_exclusion_recall = if gt.outlier_frames.is_empty() {
        None
    } else {
        let excluded = gt.outlier_frames.iter().filter(|i| !inliers.contains(i)).count();
        Some(excluded as f64 / gt.outlier_frames.len() as f64)
    };

    let produced = guidance.probes();
    let views = gt
        .guidance
        .iter()
        .map(|truth| match produced.iter().find(|p| p.view_id == truth.view_id) {
            Some(p) => ViewScore {
                view_id: truth.view_id.clone(),
                status: "ok".into(),
                error: Some(pose_error(p, truth, &gt.thorax_frame)),
                rotation_error_rad: Some(p.pose.rotation_angle_to(&truth.pose)),
            },
            None => ViewScore {
                view_id: truth.view_id.clone(),
                status: guidance
                    .views
                    .iter()
                    .find(|v| v.view_id == truth.view_id)
                    .map_or("missing".into(), |v| v.status.clone()),
                error: None,
                rotation_error_rad: None,
            },
        })
        .collect();

    Ok(Scorecard {
        schema_version: jsonio::SCHEMA_VERSION,
        session_id: gt.session_id.clone(),
        consensus_masked_rms_m,
        inlier_precision,
        inlier_recall,
        outlier_exclusion_recall,
        views,
    })
}
