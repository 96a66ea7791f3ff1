//! Synthetic oracle: the procedural desk body, session generation with
//! known truth, and scoring.

pub mod desk;
mod generate;
mod score;

pub use generate::{
    corrupt_params, generate_session, jitter_params, look_at, posture_rotation, sample_truth, session_id, GroundTruth,
    SynthConfig, PELVIS_WORLD,
};
pub use score::{score_run, Scorecard, ViewScore};
