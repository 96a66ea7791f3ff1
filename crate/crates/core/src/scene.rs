//! Wavefront OBJ export of a posed mesh, with probe frames drawn as line
//! glyphs, plus a JSON sidecar listing the frames.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::{BodyModel, PosedBody};
use crate::error::Result;
use crate::geometry::RigidTransform;
use crate::guidance::ProbePose;
use crate::jsonio;

/// Axis glyph length in meters.
pub const GLYPH_LENGTH_M: f64 = 0.05;

pub fn mesh_obj(body: &PosedBody, model: &BodyModel) -> String {
    scene_obj(body, model, &[])
}

/// OBJ text: the mesh as `body`, then one object per probe with three line
/// segments for its x, y and z axes.
pub fn scene_obj(body: &PosedBody, model: &BodyModel, probes: &[ProbePose]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} {} vertices {} faces", model.version(), body.vertices.len(), model.num_faces());
    out.push_str("o body\n");
    for v in &body.vertices {
        let _ = writeln!(out, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z);
    }
    for f in model.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    let mut next = body.vertices.len() + 1;
    for p in probes {
        let _ = writeln!(out, "o probe_{}", p.view_id);
        let r = p.pose.rotation_matrix();
        let o = p.pose.translation();
        let _ = writeln!(out, "v {:.9} {:.9} {:.9}", o.x, o.y, o.z);
        for c in 0..3 {
            let e = o + r.column(c) * GLYPH_LENGTH_M;
            let _ = writeln!(out, "v {:.9} {:.9} {:.9}", e.x, e.y, e.z);
        }
        for c in 1..=3 {
            let _ = writeln!(out, "l {} {}", next, next + c);
        }
        next += 4;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFrames {
    pub schema_version: u32,
    pub mesh: String,
    pub thorax_frame: RigidTransform,
    pub probes: Vec<ProbePose>,
}

/// Writes `path` (OBJ) and `<path>.frames.json`.
pub fn write_scene(path: &Path, body: &PosedBody, model: &BodyModel, probes: &[ProbePose]) -> Result<()> {
    jsonio::write_bytes(path, scene_obj(body, model, probes).as_bytes())?;
    let frames = SceneFrames {
        schema_version: jsonio::SCHEMA_VERSION,
        mesh: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        thorax_frame: body.thorax_frame.clone(),
        probes: probes.to_vec(),
    };
    jsonio::write(&sidecar_path(path), &frames)
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".frames.json");
    s.into()
}
