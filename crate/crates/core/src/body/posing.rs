use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{BodyModel, JointDof, Landmark, STERNUM_MID};
use crate::error::{Error, Result};
use crate::geometry::{exp_so3, left_jacobian_so3, log_so3, rotation_about, vec3_serde, Mat3, RigidTransform, Vec3};

/// Shape, pose and global translation of one body instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseParams {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(with = "vec3_serde")]
    pub translation: Vec3,
}

impl PoseParams {
    pub fn zeros(model: &BodyModel) -> Self {
        Self {
            beta: vec![0.0; model.num_betas()],
            theta: vec![0.0; model.pose_dim()],
            translation: Vec3::zeros(),
        }
    }

    pub fn check(&self, model: &BodyModel) -> Result<()> {
        if self.beta.len() != model.num_betas() {
            return Err(Error::DimensionMismatch {
                what: "beta",
                expected: model.num_betas(),
                got: self.beta.len(),
            });
        }
        if self.theta.len() != model.pose_dim() {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: model.pose_dim(),
                got: self.theta.len(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().chain(&self.theta).all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }
}

/// Which frame a set of coordinates is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTag {
    #[default]
    Body,
    Camera,
    World,
}

/// Evaluated surface, joints, landmarks and thorax frame.
#[derive(Clone, Debug)]
pub struct PosedBody {
    pub vertices: Vec<Vec3>,
    pub joints: Vec<Vec3>,
    pub landmark_points: BTreeMap<String, Vec3>,
    pub thorax_frame: RigidTransform,
    pub frame: FrameTag,
}

impl PosedBody {
    /// Applies `t` to every coordinate and composes it onto the thorax frame.
    pub fn transformed(&self, t: &RigidTransform, frame: FrameTag) -> PosedBody {
        PosedBody {
            vertices: t.transform_points(&self.vertices),
            joints: t.transform_points(&self.joints),
            landmark_points: self.landmark_points.iter().map(|(k, p)| (k.clone(), t.apply(p))).collect(),
            thorax_frame: t.compose(&self.thorax_frame),
            frame,
        }
    }

    pub fn landmark(&self, name: &str) -> Result<Vec3> {
        self.landmark_points
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownLandmark(name.to_string()))
    }
}

/// Per-joint transforms of one evaluation, shared by posing and the fitter.
#[derive(Clone, Debug)]
pub(crate) struct Kinematics {
    pub world_rot: Vec<Mat3>,
    /// Posed joint positions, translation included.
    pub world_pos: Vec<Vec3>,
    /// `world_pos - world_rot · rest_joint`, the skinning offset.
    pub offsets: Vec<Vec3>,
}

pub(crate) fn shaped_vertex(model: &BodyModel, beta: &[f64], v: usize) -> Vec3 {
    let t = model.template()[v];
    let mut out = t;
    for c in 0..3 {
        let row = model.shape_dirs_row(v, c);
        out[c] += row.iter().zip(beta).map(|(s, b)| s * b).sum::<f64>();
    }
    out
}

pub(crate) fn rest_joints(model: &BodyModel, beta: &[f64]) -> Vec<Vec3> {
    model
        .regressor()
        .iter()
        .map(|row| row.iter().fold(Vec3::zeros(), |acc, &(v, w)| acc + shaped_vertex(model, beta, v) * w))
        .collect()
}

/// Joint rotation relative to its parent.
pub(crate) fn local_rotation(dof: &JointDof, values: &[f64]) -> Mat3 {
    match dof {
        JointDof::Free => exp_so3(&Vec3::new(values[0], values[1], values[2])),
        JointDof::Axes(axes) => axes
            .iter()
            .zip(values)
            .fold(Mat3::identity(), |acc, (a, phi)| acc * rotation_about(a, *phi)),
    }
}

/// Angular-velocity columns (parent frame) of the joint's pose values.
pub(crate) fn local_rate_columns(dof: &JointDof, values: &[f64]) -> Vec<Vec3> {
    match dof {
        JointDof::Free => {
            let jl = left_jacobian_so3(&Vec3::new(values[0], values[1], values[2]));
            (0..3).map(|i| jl.column(i).into_owned()).collect()
        }
        JointDof::Axes(axes) => {
            let mut acc = Mat3::identity();
            axes.iter()
                .zip(values)
                .map(|(a, phi)| {
                    let w = acc * a;
                    acc *= rotation_about(a, *phi);
                    w
                })
                .collect()
        }
    }
}

impl Kinematics {
    pub fn new(model: &BodyModel, params: &PoseParams) -> Self {
        let rest = rest_joints(model, &params.beta);
        let nj = model.num_joints();
        let mut world_rot: Vec<Mat3> = Vec::with_capacity(nj);
        // Joint displacement from its rest position, excluding translation;
        // tracked separately so the rest pose reproduces the template exactly.
        let mut disp: Vec<Vec3> = Vec::with_capacity(nj);
        for j in 0..nj {
            let off = model.pose_offset(j);
            let dof = model.pose_dof(j);
            let r = local_rotation(dof, &params.theta[off..off + dof.dof()]);
            match model.parent(j) {
                None => {
                    world_rot.push(r);
                    disp.push(Vec3::zeros());
                }
                Some(p) => {
                    let bone = rest[j] - rest[p];
                    world_rot.push(world_rot[p] * r);
                    disp.push(disp[p] + (world_rot[p] * bone - bone));
                }
            }
        }
        let t = params.translation;
        let world_pos = (0..nj).map(|j| rest[j] + disp[j] + t).collect();
        let offsets = (0..nj)
            .map(|j| disp[j] - (world_rot[j] * rest[j] - rest[j]) + t)
            .collect();
        Self {
            world_rot,
            world_pos,
            offsets,
        }
    }

    #[inline]
    pub fn skin_point(&self, model: &BodyModel, v: usize, shaped: &Vec3) -> Vec3 {
        // Displacement form keeps identity transforms bit-exact.
        shaped
            + model.skin()[v]
                .iter()
                .fold(Vec3::zeros(), |acc, &(j, w)| acc + (self.world_rot[j] * shaped - shaped + self.offsets[j]) * w)
    }

    pub fn posed_vertex(&self, model: &BodyModel, beta: &[f64], v: usize) -> Vec3 {
        self.skin_point(model, v, &shaped_vertex(model, beta, v))
    }
}

fn landmark_on(vertices: &[Vec3], faces: &[[usize; 3]], lm: &Landmark) -> Vec3 {
    let f = faces[lm.face];
    vertices[f[0]] * lm.bary[0] + vertices[f[1]] * lm.bary[1] + vertices[f[2]] * lm.bary[2]
}

/// Thorax frame: +Y along pelvis→neck, +Z anterior (from the shoulder line),
/// origin at the mid-sternum landmark.
pub(crate) fn thorax_frame(model: &BodyModel, joints: &[Vec3], origin: Vec3) -> RigidTransform {
    let tj = model.thorax_joints();
    let y = (joints[tj.neck] - joints[tj.pelvis]).normalize();
    let line = joints[tj.left_shoulder] - joints[tj.right_shoulder];
    let anterior = line.cross(&y);
    let mut z = anterior - y * anterior.dot(&y);
    if z.norm() < 1e-12 {
        z = y.cross(&Vec3::x());
        if z.norm() < 1e-12 {
            z = y.cross(&Vec3::y());
        }
    }
    let z = z.normalize();
    let x = y.cross(&z);
    RigidTransform::from_matrix(&Mat3::from_columns(&[x, y, z]), origin)
}

impl BodyModel {
    /// Evaluates the body: blendshapes, regressed joints, forward kinematics,
    /// linear blend skinning, then global translation.
    pub fn pose(&self, params: &PoseParams) -> Result<PosedBody> {
        params.check(self)?;
        let kin = Kinematics::new(self, params);
        let vertices: Vec<Vec3> = (0..self.num_vertices())
            .map(|v| kin.posed_vertex(self, &params.beta, v))
            .collect();
        let landmark_points: BTreeMap<String, Vec3> = self
            .landmarks()
            .iter()
            .map(|(k, lm)| (k.clone(), landmark_on(&vertices, self.faces(), lm)))
            .collect();
        let origin = landmark_points[STERNUM_MID];
        let thorax_frame = thorax_frame(self, &kin.world_pos, origin);
        Ok(PosedBody {
            vertices,
            joints: kin.world_pos,
            landmark_points,
            thorax_frame,
            frame: FrameTag::Body,
        })
    }

    /// Parameters whose posed body equals `t` applied to the body of `params`.
    pub fn transform_params(&self, params: &PoseParams, t: &RigidTransform) -> Result<PoseParams> {
        params.check(self)?;
        if *self.pose_dof(0) != JointDof::Free {
            return Err(Error::Invariant {
                check: "pose_dof",
                detail: "root joint must rotate freely".into(),
            });
        }
        let j0 = rest_joints(self, &params.beta)[0];
        let r0 = exp_so3(&Vec3::new(params.theta[0], params.theta[1], params.theta[2]));
        let rt = t.rotation_matrix();
        let root = log_so3(&(rt * r0));
        let mut theta = params.theta.clone();
        theta[..3].copy_from_slice(root.as_slice());
        Ok(PoseParams {
            beta: params.beta.clone(),
            theta,
            translation: rt * (j0 + params.translation) + t.translation() - j0,
        })
    }
}

pub fn pose_body(model: &BodyModel, beta: &[f64], theta: &[f64], translation: Vec3) -> Result<PosedBody> {
    model.pose(&PoseParams {
        beta: beta.to_vec(),
        theta: theta.to_vec(),
        translation,
    })
}

pub fn landmark_point(body: &PosedBody, name: &str) -> Result<Vec3> {
    body.landmark(name)
}

/// Unit normal of a triangle from its CCW winding.
pub fn triangle_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Vec3> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > 1e-15 && len.is_finite() {
        Some(n / len)
    } else {
        None
    }
}

/// Outward unit normal of `face` on the posed surface.
pub fn surface_normal_at(body: &PosedBody, model: &BodyModel, face: usize) -> Result<Vec3> {
    let f = model.faces().get(face).ok_or(Error::DimensionMismatch {
        what: "face index",
        expected: model.num_faces(),
        got: face,
    })?;
    triangle_normal(&body.vertices[f[0]], &body.vertices[f[1]], &body.vertices[f[2]])
        .ok_or(Error::DegenerateTriangle(face))
}
