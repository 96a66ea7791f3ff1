//! End-to-end stages: consensus on the surface flavor, conversion to the
//! skeleton flavor, guidance on the converted body, evaluation.

use serde::{Deserialize, Serialize};

use crate::body::{project_pose, BodyModel, Flavor, FrameTag, PoseParams, PosedBody};
use crate::consensus::{consensus_from_frames, ConsensusResult, RansacConfig};
use crate::error::{Error, Result};
use crate::fitting::{fit_model, FitConfig, FitResult, Observation};
use crate::guidance::{generate_all, GuidanceFile, RuleSet, ViewOutcome};
use crate::jsonio;
use crate::metrics::{pose_error, summarize, Comparison, ErrorReport, ErrorSample};
use crate::session::CaptureSession;

fn expect_flavor(model: &BodyModel, flavor: Flavor) -> Result<()> {
    if model.flavor() != flavor {
        return Err(Error::Schema(format!(
            "expected a {flavor:?} model, got {:?} ({})",
            model.flavor(),
            model.version()
        )));
    }
    Ok(())
}

/// Fits `target` to the torso of `source` posed at `params`, starting from
/// the per-joint projection of the pose.
pub fn convert_model(source: &BodyModel, params: &PoseParams, target: &BodyModel, config: &FitConfig) -> Result<FitResult> {
    let mut body = source.pose(params)?;
    body.frame = FrameTag::World;
    let init = PoseParams {
        beta: params.beta.clone(),
        theta: project_pose(source, &params.theta, target),
        translation: params.translation,
    };
    fit_model(target, &Observation::from_body(&body), target.torso_mask(), &init, config)
}

/// Result of the `fit` stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOutput {
    pub schema_version: u32,
    pub session_id: String,
    pub surface_model_version: String,
    pub skeleton_model_version: String,
    pub consensus: ConsensusResult,
    /// Skeleton-flavor parameters guidance is generated from.
    pub skeleton: FitResult,
}

impl FitOutput {
    pub fn parse(text: &str) -> Result<Self> {
        jsonio::parse_versioned(text)
    }
}

pub fn run_fit(
    surface: &BodyModel,
    skeleton: &BodyModel,
    session: &CaptureSession,
    fit: &FitConfig,
    ransac: &RansacConfig,
) -> Result<FitOutput> {
    expect_flavor(surface, Flavor::Surface)?;
    expect_flavor(skeleton, Flavor::Skeleton)?;
    session.validate()?;
    let consensus = consensus_from_frames(surface, &session.frames, ransac, fit)?;
    let converted = convert_model(surface, &consensus.params, skeleton, fit)?;
    Ok(FitOutput {
        schema_version: jsonio::SCHEMA_VERSION,
        session_id: session.session_id.clone(),
        surface_model_version: surface.version().into(),
        skeleton_model_version: skeleton.version().into(),
        consensus,
        skeleton: converted,
    })
}

/// Poses `skeleton` at world parameters and generates every view.
pub fn run_guidance(skeleton: &BodyModel, params: &PoseParams, rules: &RuleSet) -> Result<(PosedBody, Vec<ViewOutcome>)> {
    expect_flavor(skeleton, Flavor::Skeleton)?;
    let mut body = skeleton.pose(params)?;
    body.frame = FrameTag::World;
    let outcomes = generate_all(&body, skeleton, rules);
    Ok((body, outcomes))
}

/// Compares produced guidance with the session's recorded poses, using the
/// guidance body's thorax frame for every spin projection.
pub fn evaluate(session: &CaptureSession, guidance: &GuidanceFile) -> Result<ErrorReport> {
    if session.recorded_poses.is_empty() {
        return Err(Error::MissingData("session has no recorded poses".into()));
    }
    let preds = guidance.probes();
    let thorax = &guidance.thorax_frame;
    let mut samples = vec![];
    for rec in &session.recorded_poses {
        let mk = |comparison, error| ErrorSample {
            comparison,
            posture: session.posture_label.label().into(),
            subject: session.subject_id.clone(),
            view_id: rec.view_id.clone(),
            error,
        };
        samples.push(mk(Comparison::GuidedGt, pose_error(&rec.guided, &rec.ground_truth, thorax)));
        if let Some(pred) = preds.iter().find(|p| p.view_id == rec.view_id) {
            samples.push(mk(Comparison::GuidedPred, pose_error(&rec.guided, pred, thorax)));
            samples.push(mk(Comparison::PredGt, pose_error(pred, &rec.ground_truth, thorax)));
        }
    }
    summarize(&samples)
}
