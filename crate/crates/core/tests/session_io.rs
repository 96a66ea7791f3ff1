mod common;

use std::path::PathBuf;

use common::{models, pipeline, synth, synth_config};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thoraguide::body::{load_model, model_to_string, parse_model, PoseParams};
use thoraguide::consensus::CaptureFrame;
use thoraguide::geometry::{RigidTransform, Vec3};
use thoraguide::guidance::{GuidanceFile, RuleSet};
use thoraguide::jsonio;
use thoraguide::pipeline::{evaluate, FitOutput};
use thoraguide::session::{load_config, load_session, CaptureSession, Posture, RunConfig};
use thoraguide::synth::{score_run, GroundTruth, Scorecard, SynthConfig};
use thoraguide::Error;

fn assets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(value: &T) {
    let text = jsonio::to_string(value).unwrap();
    let back: T = jsonio::parse_versioned(&text).unwrap();
    assert_eq!(&back, value);
    assert_eq!(jsonio::to_string(&back).unwrap(), text);
}

#[test]
fn bundled_session_loads_with_eight_frames() {
    let s = load_session(assets().join("example_session.json")).unwrap();
    assert_eq!(s.num_frames(), 8);
    assert_eq!(s.recorded_poses.len(), 2);
    let c = load_config(assets().join("run_config.json")).unwrap();
    assert_eq!(c.ransac().seed, 42);
}

#[test]
fn bundled_models_match_the_procedural_desk_models() {
    let m = models();
    let surface = load_model(assets().join("desk_surface.pbm.json")).unwrap();
    let skeleton = load_model(assets().join("desk_skeleton.pbm.json")).unwrap();
    assert_eq!(surface.parts(), m.surface.parts());
    assert_eq!(skeleton.parts(), m.skeleton.parts());
    let text = model_to_string(&surface).unwrap();
    assert_eq!(model_to_string(&parse_model(&text).unwrap()).unwrap(), text);
    assert_eq!(RuleSet::load(assets().join("default_rules.json")).unwrap(), m.rules);
}

#[test]
fn every_artifact_round_trips_field_exact() {
    let (session, gt) = synth(&synth_config(21, 0.004, 1));
    let (fit, guidance) = pipeline(&session);
    let report = evaluate(&session, &guidance).unwrap();
    let card = score_run(&models().surface, &fit, &guidance, &gt, 8).unwrap();
    round_trip::<CaptureSession>(&session);
    round_trip::<GroundTruth>(&gt);
    round_trip::<FitOutput>(&fit);
    round_trip::<GuidanceFile>(&guidance);
    round_trip(&report);
    round_trip::<Scorecard>(&card);
    round_trip::<SynthConfig>(&synth_config(3, 0.002, 2));
    round_trip::<RuleSet>(&models().rules);
    round_trip::<RunConfig>(&load_config(assets().join("run_config.json")).unwrap());
}

#[test]
fn errors_carry_field_context() {
    let text = std::fs::read_to_string(assets().join("example_session.json")).unwrap();
    let bad = text.replacen("\"camera_pose\"", "\"camera_pos\"", 1);
    match CaptureSession::parse(&bad).unwrap_err() {
        Error::Parse { field, line, .. } => {
            assert!(field.starts_with("frames[0]"), "{field}");
            assert!(line > 1);
        }
        e => panic!("{e}"),
    }
    let bad = text.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1);
    assert!(matches!(CaptureSession::parse(&bad), Err(Error::SchemaVersion { .. })));
    let bad = text.replacen("\"units\": \"m\"", "\"units\": \"mm\"", 1);
    assert!(matches!(CaptureSession::parse(&bad), Err(Error::Units(_))));
}

#[test]
fn mixed_dimension_frames_are_rejected() {
    let mut s = load_session(assets().join("example_session.json")).unwrap();
    s.frames[3].body_estimate.theta.truncate(46);
    assert!(matches!(CaptureSession::parse(&s.to_json().unwrap()), Err(Error::Schema(_))));
}

#[test]
fn evaluation_needs_recorded_poses() {
    let (mut session, _) = synth(&synth_config(22, 0.0, 0));
    let (_, guidance) = pipeline(&session);
    session.recorded_poses.clear();
    assert!(matches!(evaluate(&session, &guidance), Err(Error::MissingData(_))));
}

fn arb_f64() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3f64..1e3, -1e-6f64..1e-6, Just(0.0), Just(-0.0), Just(1.0 / 3.0)]
}

fn arb_frame() -> impl Strategy<Value = CaptureFrame> {
    (
        prop::array::uniform4(-1.0f64..1.0),
        prop::array::uniform3(arb_f64()),
        prop::collection::vec(arb_f64(), 10),
        prop::collection::vec(arb_f64(), 66),
        prop::array::uniform3(arb_f64()),
    )
        .prop_filter("non-zero quaternion", |(q, ..)| q.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|(q, t, beta, theta, tr)| {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            CaptureFrame {
                camera_pose: RigidTransform::from_wxyz(q.map(|x| x / n), t).unwrap(),
                body_estimate: PoseParams {
                    beta,
                    theta,
                    translation: Vec3::from(tr),
                },
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sessions_round_trip(frames in prop::collection::vec(arb_frame(), 1..4), lld in any::<bool>(), id in "[a-z0-9-]{1,12}") {
        let s = CaptureSession {
            schema_version: 1,
            session_id: id,
            subject_id: "p".into(),
            model_ref: "desk_surface.pbm.json".into(),
            units: "m".into(),
            posture_label: if lld { Posture::LeftLateralDecubitus } else { Posture::Supine },
            frames,
            recorded_poses: vec![],
        };
        let text = s.to_json().unwrap();
        prop_assert_eq!(CaptureSession::parse(&text).unwrap(), s);
    }
}
