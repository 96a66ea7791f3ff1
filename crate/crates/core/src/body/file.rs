//! `.pbm.json` model files: a JSON header with large tensors stored as
//! base64 little-endian `f32` (or `u32` for faces).

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::model::{BodyModel, Flavor, JointDof, Landmark, ModelParts, TorsoMask};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::jsonio;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DType {
    F32,
    U32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    dtype: DType,
    shape: Vec<usize>,
    data: String,
}

impl Tensor {
    fn f32(shape: Vec<usize>, values: &[f64]) -> Self {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Self {
            dtype: DType::F32,
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    fn u32(shape: Vec<usize>, values: &[usize]) -> Self {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&(*v as u32).to_le_bytes());
        }
        Self {
            dtype: DType::U32,
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    fn decode(&self, name: &str, dtype: DType, shape: &[usize]) -> Result<Vec<u8>> {
        if self.dtype != dtype {
            return Err(Error::Schema(format!("`{name}` must have dtype {dtype:?}")));
        }
        if self.shape != shape {
            return Err(Error::Schema(format!("`{name}` has shape {:?}, expected {shape:?}", self.shape)));
        }
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Schema(format!("`{name}` base64: {e}")))?;
        let n: usize = shape.iter().product();
        if bytes.len() != n * 4 {
            return Err(Error::Schema(format!("`{name}` holds {} bytes, expected {}", bytes.len(), n * 4)));
        }
        Ok(bytes)
    }

    fn to_f64(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let bytes = self.decode(name, DType::F32, shape)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    fn to_usize(&self, name: &str, shape: &[usize]) -> Result<Vec<usize>> {
        let bytes = self.decode(name, DType::U32, shape)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DofRepr {
    dof: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    axes: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    version: String,
    flavor: Flavor,
    num_vertices: usize,
    num_faces: usize,
    num_joints: usize,
    num_betas: usize,
    template: Tensor,
    faces: Tensor,
    shape_dirs: Tensor,
    joint_regressor: Tensor,
    skin_weights: Tensor,
    parents: Vec<i64>,
    joint_names: Vec<String>,
    pose_dof: Vec<DofRepr>,
    landmarks: BTreeMap<String, Landmark>,
    torso_mask: TorsoMask,
}

fn to_parts(file: ModelFile) -> Result<ModelParts> {
    let (nv, nf, nj, nb) = (file.num_vertices, file.num_faces, file.num_joints, file.num_betas);
    let template = file.template.to_f64("template", &[nv, 3])?;
    let faces = file.faces.to_usize("faces", &[nf, 3])?;
    let pose_dof = file
        .pose_dof
        .iter()
        .enumerate()
        .map(|(j, d)| match (d.dof, d.axes.len()) {
            (3, 0) => Ok(JointDof::Free),
            (n @ (1 | 2), m) if n == m => Ok(JointDof::Axes(d.axes.iter().map(|a| Vec3::from(*a)).collect())),
            _ => Err(Error::Schema(format!("pose_dof[{j}]: dof {} with {} axes", d.dof, d.axes.len()))),
        })
        .collect::<Result<Vec<_>>>()?;
    if file.parents.len() != nj {
        return Err(Error::Schema(format!("{} parents for {nj} joints", file.parents.len())));
    }
    Ok(ModelParts {
        version: file.version,
        flavor: file.flavor,
        template: template.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
        faces: faces.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        shape_dirs: file.shape_dirs.to_f64("shape_dirs", &[nv, 3, nb])?,
        num_betas: nb,
        joint_regressor: file.joint_regressor.to_f64("joint_regressor", &[nj, nv])?,
        skin_weights: file.skin_weights.to_f64("skin_weights", &[nv, nj])?,
        parents: file.parents,
        joint_names: file.joint_names,
        pose_dof,
        landmarks: file.landmarks,
        torso_mask: file.torso_mask,
    })
}

fn from_parts(p: &ModelParts) -> ModelFile {
    let nv = p.template.len();
    let nj = p.parents.len();
    let template: Vec<f64> = p.template.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    let faces: Vec<usize> = p.faces.iter().flatten().copied().collect();
    ModelFile {
        schema_version: jsonio::SCHEMA_VERSION,
        version: p.version.clone(),
        flavor: p.flavor,
        num_vertices: nv,
        num_faces: p.faces.len(),
        num_joints: nj,
        num_betas: p.num_betas,
        template: Tensor::f32(vec![nv, 3], &template),
        faces: Tensor::u32(vec![p.faces.len(), 3], &faces),
        shape_dirs: Tensor::f32(vec![nv, 3, p.num_betas], &p.shape_dirs),
        joint_regressor: Tensor::f32(vec![nj, nv], &p.joint_regressor),
        skin_weights: Tensor::f32(vec![nv, nj], &p.skin_weights),
        parents: p.parents.clone(),
        joint_names: p.joint_names.clone(),
        pose_dof: p
            .pose_dof
            .iter()
            .map(|d| match d {
                JointDof::Free => DofRepr { dof: 3, axes: vec![] },
                JointDof::Axes(a) => DofRepr {
                    dof: a.len(),
                    axes: a.iter().map(|v| [v.x, v.y, v.z]).collect(),
                },
            })
            .collect(),
        landmarks: p.landmarks.clone(),
        torso_mask: p.torso_mask.clone(),
    }
}

/// Parses model text and validates every invariant.
pub fn parse_model(text: &str) -> Result<BodyModel> {
    let file: ModelFile = jsonio::parse_versioned(text)?;
    BodyModel::from_parts(to_parts(file)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BodyModel> {
    parse_model(&jsonio::read_text(path.as_ref())?)
}

/// Serializes the model. Tensors are written as `f32`; models built from
/// `f32`-exact values round-trip unchanged.
pub fn model_to_string(model: &BodyModel) -> Result<String> {
    let file = from_parts(model.parts());
    serde_json::to_string(&file).map_err(|e| Error::Schema(e.to_string()))
}

pub fn save_model(model: &BodyModel, path: impl AsRef<Path>) -> Result<()> {
    jsonio::write_bytes(path.as_ref(), model_to_string(model)?.as_bytes())
}
