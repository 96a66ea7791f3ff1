//! Probe poses from landmarks: offset in the thorax frame, project onto the
//! torso surface, step inward, orient against the longitudinal axis.

pub mod raycast;
mod rules;

pub use rules::{default_rules, ProjectionMode, RuleSet, ScanPlaneRule};

use serde::{Deserialize, Serialize};

use crate::body::{triangle_normal, BodyModel, PosedBody, PELVIS};
use crate::error::{Error, Result};
use crate::geometry::{rotation_about, vec3_serde, Mat3, RigidTransform, Vec3};
use crate::jsonio;
use raycast::{nearest_triangle, triangles, Hit, MeshBvh, Triangle};

/// Radial components shorter than this have no usable direction.
pub const DEGENERATE_EPS: f64 = 1e-9;
/// Back-facing hits skipped before a cast is declared a miss.
const MAX_PASSES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbePose {
    pub view_id: String,
    pub pose: RigidTransform,
    #[serde(rename = "contact_point_m", with = "vec3_serde")]
    pub contact_point: Vec3,
    pub surface_face: usize,
    /// Projection direction at the contact.
    #[serde(with = "vec3_serde")]
    pub outward_dir: Vec3,
}

impl ProbePose {
    /// Insonation axis, `R·ẑ`.
    pub fn axis(&self) -> Vec3 {
        self.pose.rotation_matrix().column(2).into_owned()
    }

    /// Image-plane direction, `R·x̂`.
    pub fn image_x(&self) -> Vec3 {
        self.pose.rotation_matrix().column(0).into_owned()
    }

    pub fn position(&self) -> Vec3 {
        self.pose.translation()
    }

    pub fn transformed(&self, t: &RigidTransform) -> ProbePose {
        ProbePose {
            view_id: self.view_id.clone(),
            pose: t.compose(&self.pose),
            contact_point: t.apply(&self.contact_point),
            surface_face: self.surface_face,
            outward_dir: t.apply_vector(&self.outward_dir),
        }
    }
}

/// Torso triangles of one posed body with a BVH over them.
pub struct TorsoSurface {
    bvh: MeshBvh,
    /// Unit normal per face index, `None` outside the torso or degenerate.
    normals: Vec<Option<Vec3>>,
    center: Vec3,
    radius: f64,
}

impl TorsoSurface {
    pub fn new(body: &PosedBody, model: &BodyModel) -> Self {
        let tris = triangles(&body.vertices, model.faces(), Some(model.torso_faces()));
        let (center, radius) = bounding_sphere(&tris);
        let mut normals = vec![None; model.num_faces()];
        for t in &tris {
            normals[t.face] = triangle_normal(&t.v[0], &t.v[1], &t.v[2]);
        }
        Self {
            bvh: MeshBvh::build(tris),
            normals,
            center,
            radius,
        }
    }

    pub fn triangles(&self) -> &[Triangle] {
        self.bvh.triangles()
    }

    /// First front-facing hit along `dir` from `origin`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let mut o = *origin;
        let mut travelled = 0.0;
        for _ in 0..MAX_PASSES {
            let hit = self.bvh.intersect(&o, dir)?;
            match self.normals[hit.face] {
                Some(n) if n.dot(dir) < 0.0 => {
                    return Some(Hit {
                        distance: travelled + hit.distance,
                        ..hit
                    })
                }
                _ => {
                    travelled += hit.distance;
                    o = hit.point;
                }
            }
        }
        None
    }

    /// Hit farthest along `dir` from `p` on the line through `p`.
    pub fn outermost_along(&self, p: &Vec3, dir: &Vec3) -> Option<Hit> {
        let lever = (p - self.center).norm() + self.radius + 1.0;
        self.cast(&(p + dir * lever), &-dir)
    }
}

fn bounding_sphere(tris: &[Triangle]) -> (Vec3, f64) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for t in tris {
        for v in &t.v {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
    }
    ((lo + hi) / 2.0, (hi - lo).norm() / 2.0)
}

/// Projection direction for `rule` at the offset landmark `p`.
fn projection_direction(body: &PosedBody, model: &BodyModel, surface: &TorsoSurface, rule: &ScanPlaneRule, p: &Vec3) -> Result<Vec3> {
    match rule.projection_mode {
        ProjectionMode::RadialFromAxis => {
            let pelvis = model
                .joint_index(PELVIS)
                .ok_or_else(|| Error::MissingData("model has no pelvis joint".into()))?;
            let axis = body.thorax_frame.rotation_matrix().column(1).into_owned();
            let d = p - body.joints[pelvis];
            let radial = d - axis * d.dot(&axis);
            let len = radial.norm();
            if !(len >= DEGENERATE_EPS) {
                return Err(Error::DegenerateDirection("landmark lies on the thorax axis"));
            }
            Ok(radial / len)
        }
        ProjectionMode::NearestSurfaceNormal => {
            let (face, _, _) = nearest_triangle(surface.triangles(), p).ok_or(Error::ProjectionMiss)?;
            let f = model.faces()[face];
            triangle_normal(&body.vertices[f[0]], &body.vertices[f[1]], &body.vertices[f[2]])
                .ok_or(Error::DegenerateTriangle(face))
        }
    }
}

/// Probe orientation for inward axis `-n`, longitudinal axis `y`, spin and
/// tilt of `rule`.
fn probe_rotation(thorax: &Mat3, n: &Vec3, rule: &ScanPlaneRule) -> Result<Mat3> {
    let z = -n;
    let y_th = thorax.column(1).into_owned();
    let x0 = y_th - z * y_th.dot(&z);
    let len = x0.norm();
    if !(len >= DEGENERATE_EPS) {
        return Err(Error::DegenerateDirection("probe axis parallel to the thorax axis"));
    }
    let x = rotation_about(&z, rule.spin_deg.to_radians()) * (x0 / len);
    let y = z.cross(&x);
    let probe = Mat3::from_columns(&[x, y, z]);
    let x_th = thorax.column(0).into_owned();
    let tilt = rotation_about(&y_th, rule.tilt_deg[1].to_radians()) * rotation_about(&x_th, rule.tilt_deg[0].to_radians());
    Ok(tilt * probe)
}

/// Guidance for one view against a prepared torso surface.
pub fn generate_on(body: &PosedBody, model: &BodyModel, surface: &TorsoSurface, rule: &ScanPlaneRule) -> Result<ProbePose> {
    rule.validate_for(model)?;
    let thorax = body.thorax_frame.rotation_matrix();
    let offset = Vec3::from(rule.pre_offset_mm) / 1000.0;
    let p = body.landmark(&rule.landmark)? + thorax * offset;
    let n = projection_direction(body, model, surface, rule, &p)?;
    let hit = surface.outermost_along(&p, &n).ok_or(Error::ProjectionMiss)?;
    let position = hit.point - n * (rule.inward_offset_mm / 1000.0);
    let rotation = probe_rotation(&thorax, &n, rule)?;
    Ok(ProbePose {
        view_id: rule.view_id.clone(),
        pose: RigidTransform::from_matrix(&rotation, position),
        contact_point: hit.point,
        surface_face: hit.face,
        outward_dir: n,
    })
}

pub fn generate_guidance(body: &PosedBody, model: &BodyModel, rule: &ScanPlaneRule) -> Result<ProbePose> {
    generate_on(body, model, &TorsoSurface::new(body, model), rule)
}

/// Outcome of one view in a batch.
#[derive(Debug)]
pub struct ViewOutcome {
    pub view_id: String,
    pub result: Result<ProbePose>,
}

/// One outcome per rule, in rule order. A failing view does not stop the rest.
pub fn generate_all(body: &PosedBody, model: &BodyModel, rules: &RuleSet) -> Vec<ViewOutcome> {
    if rules.rules.is_empty() {
        return vec![];
    }
    let surface = TorsoSurface::new(body, model);
    rules
        .rules
        .iter()
        .map(|r| ViewOutcome {
            view_id: r.view_id.clone(),
            result: generate_on(body, model, &surface, r),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceRecord {
    pub view_id: String,
    /// `ok`, or the error kind for a failed view.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<RigidTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_point_m: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_face: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outward_dir: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl GuidanceRecord {
    pub fn from_outcome(o: &ViewOutcome) -> Self {
        match &o.result {
            Ok(p) => Self {
                view_id: o.view_id.clone(),
                status: "ok".into(),
                pose: Some(p.pose.clone()),
                contact_point_m: Some(p.contact_point.into()),
                surface_face: Some(p.surface_face),
                outward_dir: Some(p.outward_dir.into()),
                message: None,
            },
            Err(e) => Self {
                view_id: o.view_id.clone(),
                status: e.kind().into(),
                pose: None,
                contact_point_m: None,
                surface_face: None,
                outward_dir: None,
                message: Some(e.to_string()),
            },
        }
    }

    pub fn probe(&self) -> Option<ProbePose> {
        Some(ProbePose {
            view_id: self.view_id.clone(),
            pose: self.pose.clone()?,
            contact_point: Vec3::from(self.contact_point_m?),
            surface_face: self.surface_face?,
            outward_dir: Vec3::from(self.outward_dir?),
        })
    }
}

/// Contents of a guidance output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceFile {
    pub schema_version: u32,
    pub model_version: String,
    /// Thorax frame of the body the guidance was generated on.
    pub thorax_frame: RigidTransform,
    pub views: Vec<GuidanceRecord>,
}

impl GuidanceFile {
    pub fn new(model: &BodyModel, body: &PosedBody, outcomes: &[ViewOutcome]) -> Self {
        Self {
            schema_version: jsonio::SCHEMA_VERSION,
            model_version: model.version().into(),
            thorax_frame: body.thorax_frame.clone(),
            views: outcomes.iter().map(GuidanceRecord::from_outcome).collect(),
        }
    }

    pub fn probes(&self) -> Vec<ProbePose> {
        self.views.iter().filter_map(GuidanceRecord::probe).collect()
    }
}
