use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const NUM_BETAS: usize = 10;
pub const SURFACE_POSE_DIM: usize = 66;
pub const SKELETON_POSE_DIM: usize = 46;

/// Joints the thorax frame is derived from.
pub const PELVIS: &str = "pelvis";
pub const NECK: &str = "neck";
pub const LEFT_SHOULDER: &str = "left_shoulder";
pub const RIGHT_SHOULDER: &str = "right_shoulder";
pub const STERNUM_MID: &str = "sternum_mid";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Every joint rotates freely (axis-angle, 3 values per joint).
    Surface,
    /// Anatomically reduced joints with 1-3 values each.
    Skeleton,
}

impl Flavor {
    pub fn pose_dim(self) -> usize {
        match self {
            Flavor::Surface => SURFACE_POSE_DIM,
            Flavor::Skeleton => SKELETON_POSE_DIM,
        }
    }
}

/// Rotational freedom of one joint.
#[derive(Clone, Debug, PartialEq)]
pub enum JointDof {
    /// Axis-angle vector in the parent frame.
    Free,
    /// Sequential rotations about fixed parent-frame axes:
    /// `R = Rot(a0, φ0) · Rot(a1, φ1)`.
    Axes(Vec<Vec3>),
}

impl JointDof {
    pub fn dof(&self) -> usize {
        match self {
            JointDof::Free => 3,
            JointDof::Axes(a) => a.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub face: usize,
    pub bary: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorsoMask {
    pub vertices: Vec<usize>,
    pub joints: Vec<usize>,
}

/// Raw model tensors, exactly as stored in a model file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParts {
    pub version: String,
    pub flavor: Flavor,
    pub template: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// `V × 3 × B`, row-major.
    pub shape_dirs: Vec<f64>,
    pub num_betas: usize,
    /// `J × V`, row-major.
    pub joint_regressor: Vec<f64>,
    /// `V × J`, row-major.
    pub skin_weights: Vec<f64>,
    pub parents: Vec<i64>,
    pub joint_names: Vec<String>,
    pub pose_dof: Vec<JointDof>,
    pub landmarks: BTreeMap<String, Landmark>,
    pub torso_mask: TorsoMask,
}

/// Joints and landmarks the thorax construction refers to.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ThoraxJoints {
    pub pelvis: usize,
    pub neck: usize,
    pub left_shoulder: usize,
    pub right_shoulder: usize,
}

/// A validated parametric body model.
#[derive(Clone, Debug)]
pub struct BodyModel {
    parts: ModelParts,
    parents: Vec<Option<usize>>,
    regressor: Vec<Vec<(usize, f64)>>,
    skin: Vec<Vec<(usize, f64)>>,
    pose_offsets: Vec<usize>,
    mask_vertex_flags: Vec<bool>,
    torso_faces: Vec<usize>,
    thorax: ThoraxJoints,
}

fn invariant(check: &'static str, detail: impl Into<String>) -> Error {
    Error::Invariant {
        check,
        detail: detail.into(),
    }
}

fn sparse_rows(dense: &[f64], rows: usize, cols: usize, check: &'static str) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &dense[r * cols..(r + 1) * cols];
        if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invariant(check, format!("row {r} has negative or non-finite weights")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(invariant(check, format!("row {r} sums to {sum}, expected 1")));
        }
        // Renormalized so weights sum to 1 up to rounding.
        out.push(
            row.iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(c, w)| (c, w / sum))
                .collect(),
        );
    }
    Ok(out)
}

/// Signed volume enclosed by a triangle mesh; positive for outward CCW winding.
pub fn signed_volume(vertices: &[Vec3], faces: &[[usize; 3]]) -> f64 {
    faces
        .iter()
        .map(|f| vertices[f[0]].dot(&vertices[f[1]].cross(&vertices[f[2]])))
        .sum::<f64>()
        / 6.0
}

impl BodyModel {
    /// Validates every model invariant, naming the first failed check.
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let nv = parts.template.len();
        let nf = parts.faces.len();
        let nj = parts.parents.len();
        let nb = parts.num_betas;
        if nv == 0 || nf == 0 || nj == 0 {
            return Err(invariant("non_empty", "model has no vertices, faces or joints"));
        }
        if parts.template.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(invariant("finite_template", "template has non-finite coordinates"));
        }
        if parts.shape_dirs.len() != nv * 3 * nb {
            return Err(invariant("shape_dirs_shape", format!("expected {} values", nv * 3 * nb)));
        }
        if parts.shape_dirs.iter().any(|v| !v.is_finite()) {
            return Err(invariant("finite_shape_dirs", "shape_dirs has non-finite values"));
        }
        if let Some((i, _)) = parts.faces.iter().enumerate().find(|(_, f)| f.iter().any(|&v| v >= nv)) {
            return Err(invariant("faces_in_range", format!("face {i} references a missing vertex")));
        }
        if parts.joint_regressor.len() != nj * nv {
            return Err(invariant("joint_regressor_shape", format!("expected {nj}×{nv}")));
        }
        if parts.skin_weights.len() != nv * nj {
            return Err(invariant("skin_weights_shape", format!("expected {nv}×{nj}")));
        }
        let regressor = sparse_rows(&parts.joint_regressor, nj, nv, "joint_regressor_rows")?;
        let skin = sparse_rows(&parts.skin_weights, nv, nj, "skin_weights_rows")?;

        let mut parents = Vec::with_capacity(nj);
        for (j, &p) in parts.parents.iter().enumerate() {
            if j == 0 {
                if p != -1 {
                    return Err(invariant("kinematic_parents", "joint 0 must be the root (-1)"));
                }
                parents.push(None);
            } else if p < 0 || p as usize >= j {
                return Err(invariant("kinematic_parents", format!("joint {j} has parent {p}; parents must precede children")));
            } else {
                parents.push(Some(p as usize));
            }
        }

        if parts.pose_dof.len() != nj {
            return Err(invariant("pose_dof", format!("{} descriptors for {nj} joints", parts.pose_dof.len())));
        }
        let mut pose_offsets = Vec::with_capacity(nj);
        let mut total = 0;
        for (j, d) in parts.pose_dof.iter().enumerate() {
            if let JointDof::Axes(axes) = d {
                if axes.is_empty() || axes.len() > 2 {
                    return Err(invariant("pose_dof", format!("joint {j} lists {} axes", axes.len())));
                }
                if axes.iter().any(|a| (a.norm() - 1.0).abs() > 1e-6) {
                    return Err(invariant("pose_dof", format!("joint {j} has a non-unit axis")));
                }
                if axes.len() == 2 && axes[0].dot(&axes[1]).abs() > 1e-6 {
                    return Err(invariant("pose_dof", format!("joint {j} axes are not orthogonal")));
                }
            }
            pose_offsets.push(total);
            total += d.dof();
        }
        if total != parts.flavor.pose_dim() {
            return Err(invariant(
                "pose_dim",
                format!("{:?} flavor needs {} pose values, descriptors give {total}", parts.flavor, parts.flavor.pose_dim()),
            ));
        }
        if parts.flavor == Flavor::Surface && parts.pose_dof.iter().any(|d| *d != JointDof::Free) {
            return Err(invariant("pose_dof", "surface flavor joints must all be free"));
        }

        for (name, lm) in &parts.landmarks {
            if lm.face >= nf {
                return Err(invariant("landmarks", format!("`{name}` face {} out of range", lm.face)));
            }
            let s: f64 = lm.bary.iter().sum();
            if lm.bary.iter().any(|b| *b < 0.0 || !b.is_finite()) || (s - 1.0).abs() > 1e-9 {
                return Err(invariant("landmarks", format!("`{name}` barycentric coordinates invalid")));
            }
        }

        let mask = &parts.torso_mask;
        if mask.vertices.is_empty() || mask.vertices.len() >= nv {
            return Err(invariant("torso_mask", "masked vertices must be a nonempty proper subset"));
        }
        if mask.vertices.iter().any(|&v| v >= nv) || mask.joints.iter().any(|&j| j >= nj) {
            return Err(invariant("torso_mask", "mask index out of range"));
        }
        let mut mask_vertex_flags = vec![false; nv];
        for &v in &mask.vertices {
            mask_vertex_flags[v] = true;
        }
        for (name, lm) in parts.landmarks.iter().filter(|(n, _)| n.starts_with("sternum")) {
            if parts.faces[lm.face].iter().any(|&v| !mask_vertex_flags[v]) {
                return Err(invariant("torso_mask", format!("`{name}` lies outside the torso mask")));
            }
        }
        let torso_faces = parts
            .faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.iter().all(|&v| mask_vertex_flags[v]))
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        if torso_faces.is_empty() {
            return Err(invariant("torso_mask", "mask contains no complete face"));
        }

        if parts.joint_names.len() != nj {
            return Err(invariant("joint_names", format!("{} names for {nj} joints", parts.joint_names.len())));
        }
        let find = |n: &str| {
            parts
                .joint_names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| invariant("joint_names", format!("missing joint `{n}`")))
        };
        let thorax = ThoraxJoints {
            pelvis: find(PELVIS)?,
            neck: find(NECK)?,
            left_shoulder: find(LEFT_SHOULDER)?,
            right_shoulder: find(RIGHT_SHOULDER)?,
        };
        if !parts.landmarks.contains_key(STERNUM_MID) {
            return Err(invariant("landmarks", format!("missing `{STERNUM_MID}`")));
        }

        let vol = signed_volume(&parts.template, &parts.faces);
        if !(vol > 0.0) {
            return Err(invariant("orientation", format!("signed volume {vol} is not positive")));
        }

        Ok(Self {
            parts,
            parents,
            regressor,
            skin,
            pose_offsets,
            mask_vertex_flags,
            torso_faces,
            thorax,
        })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn flavor(&self) -> Flavor {
        self.parts.flavor
    }

    pub fn version(&self) -> &str {
        &self.parts.version
    }

    pub fn num_vertices(&self) -> usize {
        self.parts.template.len()
    }

    pub fn num_faces(&self) -> usize {
        self.parts.faces.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_betas(&self) -> usize {
        self.parts.num_betas
    }

    pub fn pose_dim(&self) -> usize {
        self.parts.flavor.pose_dim()
    }

    pub fn template(&self) -> &[Vec3] {
        &self.parts.template
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn joint_names(&self) -> &[String] {
        &self.parts.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.parts.joint_names.iter().position(|n| n == name)
    }

    pub fn pose_dof(&self, joint: usize) -> &JointDof {
        &self.parts.pose_dof[joint]
    }

    /// First pose-vector index of `joint`.
    pub fn pose_offset(&self, joint: usize) -> usize {
        self.pose_offsets[joint]
    }

    pub fn landmarks(&self) -> &BTreeMap<String, Landmark> {
        &self.parts.landmarks
    }

    pub fn torso_mask(&self) -> &TorsoMask {
        &self.parts.torso_mask
    }

    pub fn is_masked_vertex(&self, v: usize) -> bool {
        self.mask_vertex_flags[v]
    }

    /// Faces whose three vertices are all in the torso mask.
    pub fn torso_faces(&self) -> &[usize] {
        &self.torso_faces
    }

    pub(crate) fn regressor(&self) -> &[Vec<(usize, f64)>] {
        &self.regressor
    }

    pub(crate) fn skin(&self) -> &[Vec<(usize, f64)>] {
        &self.skin
    }

    pub(crate) fn thorax_joints(&self) -> ThoraxJoints {
        self.thorax
    }

    /// Shape displacement of vertex `v`, coordinate `c`, basis `b`.
    #[inline]
    pub fn shape_dir(&self, v: usize, c: usize, b: usize) -> f64 {
        self.parts.shape_dirs[(v * 3 + c) * self.parts.num_betas + b]
    }

    #[inline]
    pub(crate) fn shape_dirs_row(&self, v: usize, c: usize) -> &[f64] {
        let nb = self.parts.num_betas;
        let start = (v * 3 + c) * nb;
        &self.parts.shape_dirs[start..start + nb]
    }

    /// True when joint `a` is `b` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            if c < a {
                return false;
            }
            cur = self.parents[c];
        }
        false
    }
}
