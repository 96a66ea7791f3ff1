//! Procedural desk body: a superellipsoid torso, a head, and capsule limbs
//! skinned to a 22-joint tree. Both flavors share every tensor except the
//! pose descriptors, so a surface body whose joint rotations respect the
//! skeleton's reduced axes is reproduced exactly by the skeleton flavor.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::body::{signed_volume, BodyModel, Flavor, JointDof, Landmark, ModelParts, TorsoMask};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::guidance::raycast::{intersect_brute_force, triangles};

pub const DESK_VERSION: &str = "desk-1";

pub const JOINT_NAMES: [&str; 22] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
];

pub const PARENTS: [i64; 22] = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19];

const TORSO_JOINTS: [usize; 11] = [0, 1, 2, 3, 6, 9, 12, 13, 14, 16, 17];

const TORSO_RINGS: usize = 40;
const TORSO_SEGS: usize = 48;
const HEAD_RINGS: usize = 30;
const HEAD_SEGS: usize = 33;
const LIMB_RINGS: usize = 34;
const LIMB_SEGS: usize = 30;

const TORSO_BOTTOM: f64 = -0.14;
const TORSO_TOP: f64 = 0.56;
const ARM_DROP: f64 = 40.0 * PI / 180.0;

/// `(name, azimuth from anterior toward the left side in degrees, height)`.
const LANDMARKS: [(&str, f64, f64); 10] = [
    ("sternum_upper", 0.0, 0.46),
    ("sternum_mid", 0.0, 0.37),
    ("sternum_lower", 0.0, 0.27),
    ("rib_l_2_mcl", 35.0, 0.43),
    ("rib_r_2_mcl", -35.0, 0.43),
    ("rib_l_4_ps", 15.0, 0.35),
    ("rib_r_4_ps", -15.0, 0.35),
    ("rib_l_5_aal", 70.0, 0.29),
    ("rib_l_8_pal", 105.0, 0.19),
    ("rib_r_8_pal", -105.0, 0.19),
];

fn sgnpow(x: f64, p: f64) -> f64 {
    x.signum() * x.abs().powf(p)
}

fn gauss(x: f64, mu: f64, s: f64) -> f64 {
    (-((x - mu) / s).powi(2)).exp()
}

fn ramp(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Closed revolved surface: rings of a superellipse cross-section plus a
/// pole at each end.
struct Component {
    first: usize,
    rings: usize,
    segs: usize,
    /// Axial coordinate per vertex.
    axial: Vec<f64>,
}

struct Ring {
    center: Vec3,
    ru: f64,
    rv: f64,
    axial: f64,
}

struct Builder {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl Builder {
    /// `u` maps to azimuth 0, `v` to azimuth +90°. Winding is fixed
    /// afterwards so the enclosed volume is positive.
    fn revolve(
        &mut self,
        rings: &[Ring],
        segs: usize,
        frame: (Vec3, Vec3),
        exponent: f64,
        poles: ((Vec3, f64), (Vec3, f64)),
    ) -> Component {
        let (u, v) = frame;
        let first = self.vertices.len();
        let mut axial = Vec::new();
        let fstart = self.faces.len();
        self.vertices.push(poles.0 .0);
        axial.push(poles.0 .1);
        for ring in rings {
            for k in 0..segs {
                // Mirror-exact about the `u` axis.
                let kk = if 2 * k > segs { segs - k } else { k };
                let w = 2.0 * PI * kk as f64 / segs as f64;
                let s = if 2 * k > segs { -1.0 } else { 1.0 };
                let cu = sgnpow(w.cos(), 2.0 / exponent);
                let cv = s * sgnpow(w.sin(), 2.0 / exponent);
                self.vertices.push(ring.center + u * (ring.ru * cu) + v * (ring.rv * cv));
                axial.push(ring.axial);
            }
        }
        self.vertices.push(poles.1 .0);
        axial.push(poles.1 .1);
        let pole0 = first;
        let pole1 = self.vertices.len() - 1;
        let idx = |r: usize, k: usize| first + 1 + r * segs + (k % segs);
        for k in 0..segs {
            self.faces.push([pole0, idx(0, k + 1), idx(0, k)]);
        }
        for r in 0..rings.len() - 1 {
            for k in 0..segs {
                let (a, b, c, d) = (idx(r, k), idx(r, k + 1), idx(r + 1, k + 1), idx(r + 1, k));
                self.faces.push([a, b, c]);
                self.faces.push([a, c, d]);
            }
        }
        let last = rings.len() - 1;
        for k in 0..segs {
            self.faces.push([pole1, idx(last, k), idx(last, k + 1)]);
        }
        if signed_volume(&self.vertices, &self.faces[fstart..]) < 0.0 {
            for f in &mut self.faces[fstart..] {
                f.swap(1, 2);
            }
        }
        Component {
            first,
            rings: rings.len(),
            segs,
            axial,
        }
    }
}

impl Component {
    fn len(&self) -> usize {
        self.rings * self.segs + 2
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.len()
    }

    fn ring_vertices(&self, r: usize) -> std::ops::Range<usize> {
        let s = self.first + 1 + r * self.segs;
        s..s + self.segs
    }

    fn nearest_ring(&self, axial: f64) -> usize {
        (0..self.rings)
            .min_by(|&a, &b| {
                let da = (self.axial[1 + a * self.segs] - axial).abs();
                let db = (self.axial[1 + b * self.segs] - axial).abs();
                da.total_cmp(&db)
            })
            .unwrap()
    }
}

/// Half-width (x) and half-depth (z) of the torso at height `y`.
fn torso_profile(y: f64) -> (f64, f64) {
    let a = 0.155 - 0.02 * gauss(y, 0.14, 0.08) + 0.012 * gauss(y, 0.38, 0.1);
    let b = 0.10 + 0.012 * gauss(y, 0.36, 0.1) + 0.01 * gauss(y, 0.05, 0.08);
    (a, b)
}

struct Limb {
    base: Vec3,
    dir: Vec3,
    /// `(axial position, radius)` knots, linearly interpolated.
    radii: Vec<(f64, f64)>,
    start: f64,
    end: f64,
}

impl Limb {
    fn radius(&self, s: f64) -> f64 {
        let k = &self.radii;
        if s <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            if s <= w[1].0 {
                let t = (s - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        k[k.len() - 1].1
    }

    fn rings(&self, n: usize) -> Vec<Ring> {
        let body_start = self.radii[0].0;
        let body_end = self.radii[self.radii.len() - 1].0;
        (0..n)
            .map(|i| {
                let s = self.start + (self.end - self.start) * (i + 1) as f64 / (n + 1) as f64;
                let r = self.radius(s);
                let over = if s < body_start {
                    (body_start - s) / (body_start - self.start)
                } else if s > body_end {
                    (s - body_end) / (self.end - body_end)
                } else {
                    0.0
                };
                let r = r * (1.0 - over * over).max(0.0).sqrt();
                Ring {
                    center: self.base + self.dir * s,
                    ru: r,
                    rv: r,
                    axial: s,
                }
            })
            .collect()
    }

    fn frame(&self) -> (Vec3, Vec3) {
        let u = Vec3::z();
        (u, self.dir.cross(&u).normalize())
    }

    fn poles(&self) -> ((Vec3, f64), (Vec3, f64)) {
        (
            (self.base + self.dir * self.start, self.start),
            (self.base + self.dir * self.end, self.end),
        )
    }
}

/// Skinning chain along an axial coordinate: `(joint, position, half-width)`.
/// The first entry owns everything before the second's blend zone.
fn chain_weights(chain: &[(usize, f64, f64)], s: f64) -> Vec<(usize, f64)> {
    let mut ramps: Vec<f64> = vec![1.0];
    for &(_, pos, h) in &chain[1..] {
        ramps.push(ramp((s - pos + h) / (2.0 * h)));
    }
    ramps.push(0.0);
    chain
        .iter()
        .enumerate()
        .map(|(i, &(j, _, _))| (j, ramps[i] - ramps[i + 1]))
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

/// Builds the desk model tensors for `flavor`, already `f32`-exact.
pub fn desk_parts(flavor: Flavor) -> ModelParts {
    let mut b = Builder {
        vertices: Vec::new(),
        faces: Vec::new(),
    };

    let h = (TORSO_TOP - TORSO_BOTTOM) / 2.0;
    let yc = (TORSO_TOP + TORSO_BOTTOM) / 2.0;
    let torso_rings: Vec<Ring> = (0..TORSO_RINGS)
        .map(|i| {
            let y = TORSO_BOTTOM + (TORSO_TOP - TORSO_BOTTOM) * (i + 1) as f64 / (TORSO_RINGS + 1) as f64;
            let yn = ((y - yc) / h).abs();
            let c = (1.0 - yn.powi(6)).max(0.0).powf(1.0 / 6.0);
            let (a, d) = torso_profile(y);
            Ring {
                center: Vec3::new(0.0, y, 0.0),
                ru: d * c,
                rv: a * c,
                axial: y,
            }
        })
        .collect();
    let torso = b.revolve(
        &torso_rings,
        TORSO_SEGS,
        (Vec3::z(), Vec3::x()),
        2.6,
        ((Vec3::new(0.0, TORSO_BOTTOM, 0.0), TORSO_BOTTOM), (Vec3::new(0.0, TORSO_TOP, 0.0), TORSO_TOP)),
    );

    let head_center = Vec3::new(0.0, 0.70, 0.01);
    let (head_r, head_h) = (0.095, 0.115);
    let head_rings: Vec<Ring> = (0..HEAD_RINGS)
        .map(|i| {
            let eta = -PI / 2.0 + PI * (i + 1) as f64 / (HEAD_RINGS + 1) as f64;
            let y = head_center.y + head_h * eta.sin();
            Ring {
                center: Vec3::new(head_center.x, y, head_center.z),
                ru: head_r * eta.cos(),
                rv: head_r * eta.cos(),
                axial: y,
            }
        })
        .collect();
    let head = b.revolve(
        &head_rings,
        HEAD_SEGS,
        (Vec3::z(), Vec3::x()),
        2.0,
        (
            (head_center - Vec3::y() * head_h, head_center.y - head_h),
            (head_center + Vec3::y() * head_h, head_center.y + head_h),
        ),
    );

    let arm = |side: f64| Limb {
        base: Vec3::new(side * 0.185, 0.455, 0.0),
        dir: Vec3::new(side * ARM_DROP.sin(), -ARM_DROP.cos(), 0.0),
        radii: vec![(0.0, 0.048), (0.28, 0.04), (0.53, 0.03), (0.62, 0.026)],
        start: -0.045,
        end: 0.65,
    };
    let leg = |side: f64| Limb {
        base: Vec3::new(side * 0.09, -0.06, 0.0),
        dir: -Vec3::y(),
        radii: vec![(0.0, 0.075), (0.42, 0.05), (0.84, 0.038), (0.93, 0.03)],
        start: -0.07,
        end: 0.96,
    };
    let limbs = [arm(1.0), arm(-1.0), leg(1.0), leg(-1.0)];
    let limb_comps: Vec<Component> = limbs
        .iter()
        .map(|l| b.revolve(&l.rings(LIMB_RINGS), LIMB_SEGS, l.frame(), 2.0, l.poles()))
        .collect();

    let nv = b.vertices.len();
    let nj = JOINT_NAMES.len();

    // Joint regressor: uniform weights over rings, so each joint sits on
    // its ring's axis.
    let mut reg = vec![0.0; nj * nv];
    let set_ring = |reg: &mut Vec<f64>, j: usize, comp: &Component, axial: f64, share: f64| {
        let ring = comp.ring_vertices(comp.nearest_ring(axial));
        let n = ring.len() as f64;
        for v in ring {
            reg[j * nv + v] += share / n;
        }
    };
    let (la, ra, ll, rl) = (&limb_comps[0], &limb_comps[1], &limb_comps[2], &limb_comps[3]);
    set_ring(&mut reg, 0, &torso, 0.0, 1.0);
    set_ring(&mut reg, 3, &torso, 0.10, 1.0);
    set_ring(&mut reg, 6, &torso, 0.22, 1.0);
    set_ring(&mut reg, 9, &torso, 0.34, 1.0);
    set_ring(&mut reg, 12, &torso, 0.53, 1.0);
    set_ring(&mut reg, 15, &head, 0.62, 1.0);
    for (collar, shoulder, elbow, wrist, comp) in [(13, 16, 18, 20, la), (14, 17, 19, 21, ra)] {
        set_ring(&mut reg, collar, &torso, 0.45, 0.5);
        set_ring(&mut reg, collar, comp, 0.0, 0.5);
        set_ring(&mut reg, shoulder, comp, 0.0, 1.0);
        set_ring(&mut reg, elbow, comp, 0.28, 1.0);
        set_ring(&mut reg, wrist, comp, 0.53, 1.0);
    }
    for (hip, knee, ankle, foot, comp) in [(1, 4, 7, 10, ll), (2, 5, 8, 11, rl)] {
        set_ring(&mut reg, hip, comp, 0.0, 1.0);
        set_ring(&mut reg, knee, comp, 0.42, 1.0);
        set_ring(&mut reg, ankle, comp, 0.84, 1.0);
        set_ring(&mut reg, foot, comp, 0.93, 1.0);
    }

    // Re-centre so the regressed pelvis is the origin.
    let pelvis: Vec3 = (0..nv).fold(Vec3::zeros(), |acc, v| acc + b.vertices[v] * reg[v]);
    for p in &mut b.vertices {
        *p -= pelvis;
    }
    let template: Vec<Vec3> = b.vertices.iter().map(|p| p.map(quantize)).collect();

    // Skinning weights.
    let mut skin = vec![0.0; nv * nj];
    let torso_chain = [(0, 0.0, 0.0), (3, 0.10, 0.05), (6, 0.22, 0.05), (9, 0.34, 0.05), (12, 0.53, 0.03)];
    for v in torso.range() {
        let p = template[v];
        let y = torso.axial[v - torso.first] - pelvis.y;
        let collar_w = 0.45 * ramp((y - 0.36) / 0.12) * ramp((p.x.abs() - 0.06) / 0.08);
        let collar = if p.x >= 0.0 { 13 } else { 14 };
        for (j, w) in chain_weights(&torso_chain, y) {
            skin[v * nj + j] += w * (1.0 - collar_w);
        }
        if collar_w > 0.0 {
            skin[v * nj + collar] += collar_w;
        }
    }
    let head_chain = [(12, 0.0, 0.0), (15, 0.62, 0.02)];
    for v in head.range() {
        for (j, w) in chain_weights(&head_chain, head.axial[v - head.first]) {
            skin[v * nj + j] += w;
        }
    }
    let chains: [Vec<(usize, f64, f64)>; 4] = [
        vec![(13, 0.0, 0.0), (16, 0.0, 0.03), (18, 0.28, 0.04), (20, 0.53, 0.03)],
        vec![(14, 0.0, 0.0), (17, 0.0, 0.03), (19, 0.28, 0.04), (21, 0.53, 0.03)],
        vec![(0, 0.0, 0.0), (1, 0.0, 0.04), (4, 0.42, 0.05), (7, 0.84, 0.03), (10, 0.93, 0.02)],
        vec![(0, 0.0, 0.0), (2, 0.0, 0.04), (5, 0.42, 0.05), (8, 0.84, 0.03), (11, 0.93, 0.02)],
    ];
    for (comp, chain) in limb_comps.iter().zip(&chains) {
        for v in comp.range() {
            for (j, w) in chain_weights(chain, comp.axial[v - comp.first]) {
                skin[v * nj + j] += w;
            }
        }
    }

    // Shape blendshapes, `V × 3 × B`.
    const NB: usize = 10;
    let mut dirs = vec![0.0; nv * 3 * NB];
    let mut put = |v: usize, b: usize, d: Vec3| {
        for c in 0..3 {
            dirs[(v * 3 + c) * NB + b] += d[c];
        }
    };
    let shoulder_y = 0.455 - pelvis.y;
    for v in 0..nv {
        let p = template[v];
        put(v, 0, p * 0.04);
    }
    for v in torso.range() {
        let p = template[v];
        let (_, depth) = torso_profile(p.y + pelvis.y);
        let front = (p.z / depth).max(0.0);
        put(v, 1, Vec3::new(0.12 * p.x, 0.0, 0.0));
        put(v, 2, Vec3::new(0.0, 0.0, 0.12 * p.z));
        put(v, 3, Vec3::new(0.0, 0.0, 0.025 * front * gauss(p.y, 0.12, 0.1)));
        put(v, 4, Vec3::new(0.0, 0.0, 0.02 * front * gauss(p.y, 0.38, 0.08)));
        put(v, 5, Vec3::new(0.02 * p.x.signum() * ramp((p.y - 0.30) / 0.12) * (p.x.abs() / 0.16), 0.0, 0.0));
        put(v, 9, Vec3::new(0.0, 0.06 * p.y.max(0.0) / 0.56, 0.0));
    }
    for v in head.range() {
        let p = template[v];
        put(v, 8, (p - (head_center - pelvis)) * 0.1);
        put(v, 9, Vec3::new(0.0, 0.06, 0.0));
    }
    for (i, (comp, limb)) in limb_comps.iter().zip(&limbs).enumerate() {
        let is_arm = i < 2;
        let base_x = limb.base.x - pelvis.x;
        for v in comp.range() {
            let s = comp.axial[v - comp.first];
            if is_arm {
                put(v, 1, Vec3::new(0.12 * base_x, 0.0, 0.0));
                put(v, 5, Vec3::new(0.02 * base_x.signum(), 0.0, 0.0));
                put(v, 7, limb.dir * (0.04 * s.max(0.0) / 0.62));
                put(v, 9, Vec3::new(0.0, 0.06 * shoulder_y / 0.56, 0.0));
            } else {
                put(v, 1, Vec3::new(0.06 * base_x, 0.0, 0.0));
                put(v, 6, limb.dir * (0.05 * s.max(0.0) / 0.93));
            }
        }
    }

    // Landmarks: rays from the torso axis outward at the listed azimuths.
    let torso_face_ids: Vec<usize> = (0..b.faces.len())
        .filter(|&f| b.faces[f].iter().all(|v| torso.range().contains(v)))
        .collect();
    let tris = triangles(&template, &b.faces, Some(&torso_face_ids));
    let mut landmarks = BTreeMap::new();
    for (name, az, y) in LANDMARKS {
        let a = az * PI / 180.0;
        let origin = Vec3::new(0.0, y - pelvis.y, 0.0);
        let dir = Vec3::new(a.sin(), 0.0, a.cos());
        let hit = intersect_brute_force(&tris, &origin, &dir).expect("landmark ray hits the torso");
        let mut bary = hit.bary;
        let s: f64 = bary.iter().sum();
        for x in &mut bary {
            *x /= s;
        }
        landmarks.insert(name.to_string(), Landmark { face: hit.face, bary });
    }

    let pose_dof = match flavor {
        Flavor::Surface => vec![JointDof::Free; nj],
        Flavor::Skeleton => skeleton_dof(),
    };

    ModelParts {
        version: DESK_VERSION.to_string(),
        flavor,
        template,
        faces: b.faces,
        shape_dirs: dirs.into_iter().map(quantize).collect(),
        num_betas: NB,
        joint_regressor: reg.into_iter().map(quantize).collect(),
        skin_weights: skin.into_iter().map(quantize).collect(),
        parents: PARENTS.to_vec(),
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        pose_dof,
        landmarks,
        torso_mask: TorsoMask {
            vertices: torso.range().collect(),
            joints: TORSO_JOINTS.to_vec(),
        },
    }
}

/// 46 values: 3 for the root, hips, spine and shoulders; 2 for the neck,
/// head, collars, ankles and wrists; 1 for knees, elbows and feet.
pub fn skeleton_dof() -> Vec<JointDof> {
    let x = Vec3::x();
    let y = Vec3::y();
    let z = Vec3::z();
    let (s, c) = ARM_DROP.sin_cos();
    // Flexion axes perpendicular to each arm in the frontal plane.
    let left_flex = Vec3::new(c, s, 0.0);
    let right_flex = Vec3::new(c, -s, 0.0);
    let one = |a: Vec3| JointDof::Axes(vec![a]);
    let two = |a: Vec3, b: Vec3| JointDof::Axes(vec![a, b]);
    vec![
        JointDof::Free,        // pelvis
        JointDof::Free,        // left_hip
        JointDof::Free,        // right_hip
        JointDof::Free,        // spine1
        one(x),                // left_knee
        one(x),                // right_knee
        JointDof::Free,        // spine2
        two(x, z),             // left_ankle
        two(x, z),             // right_ankle
        JointDof::Free,        // spine3
        one(x),                // left_foot
        one(x),                // right_foot
        two(x, z),             // neck
        two(y, z),             // left_collar
        two(y, z),             // right_collar
        two(x, z),             // head
        JointDof::Free,        // left_shoulder
        JointDof::Free,        // right_shoulder
        one(left_flex),        // left_elbow
        one(right_flex),       // right_elbow
        two(left_flex, z),     // left_wrist
        two(right_flex, z),    // right_wrist
    ]
}

pub fn desk_model(flavor: Flavor) -> Result<BodyModel> {
    BodyModel::from_parts(desk_parts(flavor))
}
