//! Capture sessions and run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::{CaptureFrame, RansacConfig};
use crate::error::{Error, Result};
use crate::fitting::FitConfig;
use crate::guidance::ProbePose;
use crate::jsonio;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    #[default]
    Supine,
    LeftLateralDecubitus,
}

impl Posture {
    pub fn label(self) -> &'static str {
        match self {
            Posture::Supine => "supine",
            Posture::LeftLateralDecubitus => "left_lateral_decubitus",
        }
    }
}

/// Operator-placed and reference probe poses for one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedPose {
    pub view_id: String,
    pub guided: ProbePose,
    pub ground_truth: ProbePose,
}

pub const UNITS_METERS: &str = "m";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSession {
    pub schema_version: u32,
    pub session_id: String,
    #[serde(default)]
    pub subject_id: String,
    /// Surface-flavor model the estimates refer to, relative to the session file.
    pub model_ref: String,
    pub units: String,
    pub posture_label: Posture,
    pub frames: Vec<CaptureFrame>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recorded_poses: Vec<RecordedPose>,
}

impl CaptureSession {
    pub fn validate(&self) -> Result<()> {
        if self.units != UNITS_METERS && self.units != "meters" {
            return Err(Error::Units(self.units.clone()));
        }
        let Some(first) = self.frames.first() else {
            return Err(Error::Schema("session has no frames".into()));
        };
        let (nb, np) = (first.body_estimate.beta.len(), first.body_estimate.theta.len());
        for (i, f) in self.frames.iter().enumerate() {
            let e = &f.body_estimate;
            if e.beta.len() != nb || e.theta.len() != np {
                return Err(Error::Schema(format!("frame {i} estimate dimensions differ from frame 0")));
            }
            if !e.is_finite() {
                return Err(Error::Schema(format!("frame {i} estimate has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: CaptureSession = jsonio::parse_versioned(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        jsonio::to_string(self)
    }
}

pub fn load_session(path: impl AsRef<Path>) -> Result<CaptureSession> {
    CaptureSession::parse(&jsonio::read_text(path.as_ref())?)
}

pub fn save_session(session: &CaptureSession, path: impl AsRef<Path>) -> Result<()> {
    jsonio::write(path.as_ref(), session)
}

/// Extra files a run writes beside its main output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Posed consensus mesh from `fit`.
    pub mesh_obj: Option<String>,
    /// Mesh with probe glyphs from `guide`.
    pub scene_obj: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub ransac: RansacConfig,
    /// Rule file, relative to the config file.
    pub rules: String,
    /// Skeleton-flavor model guidance is generated on, relative to the config file.
    pub target_model: String,
    #[serde(default)]
    pub outputs: OutputPaths,
    /// Overrides `ransac.seed` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        jsonio::parse_versioned(text)
    }

    pub fn ransac(&self) -> RansacConfig {
        RansacConfig {
            seed: self.seed.unwrap_or(self.ransac.seed),
            ..self.ransac.clone()
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    RunConfig::parse(&jsonio::read_text(path.as_ref())?)
}

/// Resolves `reference` against the directory holding `file`.
pub fn resolve(file: &Path, reference: &str) -> PathBuf {
    let r = Path::new(reference);
    if r.is_absolute() {
        return r.to_path_buf();
    }
    match file.parent() {
        Some(dir) => dir.join(r),
        None => r.to_path_buf(),
    }
}
