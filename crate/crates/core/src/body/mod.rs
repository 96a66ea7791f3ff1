//! Parametric body model: template, shape blendshapes, joint regressor and
//! linear blend skinning over a kinematic tree, in a free-rotation surface
//! flavor and a reduced-axis skeleton flavor.

mod file;
mod model;
mod posing;

pub use file::{load_model, model_to_string, parse_model, save_model};
pub use model::{
    signed_volume, BodyModel, Flavor, JointDof, Landmark, ModelParts, TorsoMask, LEFT_SHOULDER, NECK, NUM_BETAS,
    PELVIS, RIGHT_SHOULDER, SKELETON_POSE_DIM, STERNUM_MID, SURFACE_POSE_DIM,
};
pub use posing::{landmark_point, pose_body, surface_normal_at, triangle_normal, FrameTag, PoseParams, PosedBody};

pub(crate) use posing::{local_rate_columns, local_rotation, rest_joints, shaped_vertex, Kinematics};

use crate::geometry::{log_so3, twist_angle, Vec3};

/// Re-expresses surface-flavor pose values in `target`'s joint descriptors.
/// Exact when every joint rotation is reachable by the target's axes;
/// otherwise a swing-twist projection used to seed conversion fits.
pub fn project_pose(source: &BodyModel, theta: &[f64], target: &BodyModel) -> Vec<f64> {
    let mut out = vec![0.0; target.pose_dim()];
    for j in 0..source.num_joints().min(target.num_joints()) {
        let so = source.pose_offset(j);
        let sd = source.pose_dof(j);
        let r = local_rotation(sd, &theta[so..so + sd.dof()]);
        let to = target.pose_offset(j);
        match target.pose_dof(j) {
            JointDof::Free => out[to..to + 3].copy_from_slice(log_so3(&r).as_slice()),
            JointDof::Axes(axes) if axes.len() == 1 => out[to] = twist_angle(&r, &axes[0]),
            JointDof::Axes(axes) => {
                let (a0, a1) = (axes[0], axes[1]);
                let moved = r * a1;
                let phi0 = moved.dot(&a0.cross(&a1)).atan2(moved.dot(&a1));
                let rest = crate::geometry::rotation_about(&a0, -phi0) * r;
                out[to] = phi0;
                out[to + 1] = twist_angle(&rest, &a1);
            }
        }
    }
    out
}

/// Centroid of the posed masked vertices.
pub fn masked_centroid(model: &BodyModel, vertices: &[Vec3]) -> Vec3 {
    let m = &model.torso_mask().vertices;
    m.iter().fold(Vec3::zeros(), |a, &v| a + vertices[v]) / m.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{unit_quaternion_about, RigidTransform};
    use crate::synth::desk::{desk_model, desk_parts};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn skeleton() -> &'static BodyModel {
        static M: OnceLock<BodyModel> = OnceLock::new();
        M.get_or_init(|| desk_model(Flavor::Skeleton).unwrap())
    }

    fn surface() -> &'static BodyModel {
        static M: OnceLock<BodyModel> = OnceLock::new();
        M.get_or_init(|| desk_model(Flavor::Surface).unwrap())
    }

    fn random_params(model: &BodyModel, rng: &mut ChaCha8Rng) -> PoseParams {
        PoseParams {
            beta: (0..model.num_betas()).map(|_| rng.random_range(-1.5..1.5)).collect(),
            theta: (0..model.pose_dim()).map(|_| rng.random_range(-0.4..0.4)).collect(),
            translation: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn desk_dimensions() {
        let m = skeleton();
        assert_eq!(m.num_vertices(), 7002);
        assert_eq!(m.num_betas(), 10);
        assert_eq!(m.pose_dim(), 46);
        assert_eq!(surface().pose_dim(), 66);
        assert_eq!(m.num_joints(), 22);
    }

    #[test]
    fn rest_pose_is_template() {
        let m = skeleton();
        let body = m.pose(&PoseParams::zeros(m)).unwrap();
        for (a, b) in body.vertices.iter().zip(m.template()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn translation_shifts_every_vertex() {
        let m = skeleton();
        let mut p = PoseParams::zeros(m);
        p.translation = Vec3::new(0.1, 0.0, 0.0);
        let body = m.pose(&p).unwrap();
        for (a, b) in body.vertices.iter().zip(m.template()) {
            assert_relative_eq!(*a, b + Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn unit_beta_adds_first_blendshape() {
        let m = skeleton();
        let mut p = PoseParams::zeros(m);
        p.beta[0] = 1.0;
        let body = m.pose(&p).unwrap();
        for (v, a) in body.vertices.iter().enumerate() {
            let oracle = m.template()[v] + Vec3::new(m.shape_dir(v, 0, 0), m.shape_dir(v, 1, 0), m.shape_dir(v, 2, 0));
            assert_relative_eq!(*a, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = skeleton();
        assert!(matches!(
            pose_body(m, &[0.0; 3], &[0.0; 46], Vec3::zeros()),
            Err(crate::Error::DimensionMismatch { what: "beta", .. })
        ));
        assert!(pose_body(m, &[0.0; 10], &[0.0; 66], Vec3::zeros()).is_err());
    }

    #[test]
    fn landmarks_barycentric_on_rest_template() {
        let m = skeleton();
        let body = m.pose(&PoseParams::zeros(m)).unwrap();
        let lm = m.landmarks()["sternum_upper"];
        let f = m.faces()[lm.face];
        let t = m.template();
        let oracle = t[f[0]] * lm.bary[0] + t[f[1]] * lm.bary[1] + t[f[2]] * lm.bary[2];
        assert_relative_eq!(landmark_point(&body, "sternum_upper").unwrap(), oracle, epsilon = 1e-15);
        assert!(matches!(landmark_point(&body, "xyz"), Err(crate::Error::UnknownLandmark(_))));
    }

    #[test]
    fn landmarks_translate_with_body() {
        let m = skeleton();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = random_params(m, &mut rng);
        let a = m.pose(&p).unwrap();
        let shift = Vec3::new(0.3, -0.2, 0.5);
        p.translation += shift;
        let b = m.pose(&p).unwrap();
        for (name, pa) in &a.landmark_points {
            assert_relative_eq!(b.landmark_points[name], pa + shift, epsilon = 1e-12);
        }
    }

    #[test]
    fn landmarks_lie_on_posed_triangles() {
        let m = skeleton();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let body = m.pose(&random_params(m, &mut rng)).unwrap();
            for (name, lm) in m.landmarks() {
                let f = m.faces()[lm.face];
                let n = surface_normal_at(&body, m, lm.face).unwrap();
                let d = (body.landmark_points[name] - body.vertices[f[0]]).dot(&n);
                assert!(d.abs() < 1e-12, "{name}: {d}");
            }
        }
    }

    #[test]
    fn triangle_normal_orientation() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_eq!(triangle_normal(&a, &b, &c).unwrap(), Vec3::z());
        assert_eq!(triangle_normal(&a, &c, &b).unwrap(), -Vec3::z());
        assert!(triangle_normal(&a, &b, &(b * 2.0)).is_none());
    }

    #[test]
    fn posed_normals_are_orthogonal_to_edges() {
        let m = skeleton();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let body = m.pose(&random_params(m, &mut rng)).unwrap();
        for _ in 0..200 {
            let fi = rng.random_range(0..m.num_faces());
            let f = m.faces()[fi];
            let n = surface_normal_at(&body, m, fi).unwrap();
            let v = &body.vertices;
            assert!(n.dot(&(v[f[1]] - v[f[0]])).abs() < 1e-9);
            assert!(n.dot(&(v[f[2]] - v[f[0]])).abs() < 1e-9);
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_face_reported() {
        let m = skeleton();
        let mut body = m.pose(&PoseParams::zeros(m)).unwrap();
        let f = m.faces()[0];
        body.vertices[f[1]] = body.vertices[f[0]];
        assert!(matches!(surface_normal_at(&body, m, 0), Err(crate::Error::DegenerateTriangle(0))));
    }

    #[test]
    fn rigid_equivariance_of_posing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [skeleton(), surface()] {
            for _ in 0..5 {
                let p = random_params(m, &mut rng);
                let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let t = RigidTransform::new(
                    unit_quaternion_about(&axis, rng.random_range(0.0..3.0)),
                    Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                );
                let moved = m.pose(&p).unwrap().transformed(&t, FrameTag::World);
                let direct = m.pose(&m.transform_params(&p, &t).unwrap()).unwrap();
                for (a, b) in moved.vertices.iter().zip(&direct.vertices) {
                    assert!((a - b).norm() < 1e-9);
                }
                for (a, b) in moved.joints.iter().zip(&direct.joints) {
                    assert!((a - b).norm() < 1e-9);
                }
                assert!(moved.thorax_frame.rotation_angle_to(&direct.thorax_frame) < 1e-9);
            }
        }
    }

    #[test]
    fn joints_linear_in_shape() {
        let m = skeleton();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let zero = rest_joints(m, &[0.0; 10]);
        let b1: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b2: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sum: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a + 0.5 * b).collect();
        let (j1, j2, js) = (rest_joints(m, &b1), rest_joints(m, &b2), rest_joints(m, &sum));
        for k in 0..m.num_joints() {
            let lin = (j1[k] - zero[k]) + (j2[k] - zero[k]) * 0.5;
            assert!(((js[k] - zero[k]) - lin).norm() < 1e-9);
        }
    }

    #[test]
    fn torso_mask_consistency() {
        let m = skeleton();
        let mask = &m.torso_mask().vertices;
        assert!(!mask.is_empty() && mask.len() < m.num_vertices());
        for (name, lm) in m.landmarks().iter().filter(|(n, _)| n.starts_with("sternum")) {
            assert!(m.faces()[lm.face].iter().all(|&v| m.is_masked_vertex(v)), "{name}");
        }
    }

    #[test]
    fn thorax_frame_orthonormal_and_canonical_at_rest() {
        let m = skeleton();
        let body = m.pose(&PoseParams::zeros(m)).unwrap();
        let r = body.thorax_frame.rotation_matrix();
        assert!((r.transpose() * r - crate::geometry::Mat3::identity()).norm() < 1e-9);
        assert!(r.column(2).dot(&Vec3::z()) > 0.999);
        assert!(r.column(1).dot(&Vec3::y()) > 0.999);
    }

    #[test]
    fn pose_projection_is_exact_for_reachable_rotations() {
        let (sk, sf) = (skeleton(), surface());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let theta: Vec<f64> = (0..46).map(|_| rng.random_range(-0.5..0.5)).collect();
        let surf_theta = project_pose(sk, &theta, sf);
        let back = project_pose(sf, &surf_theta, sk);
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        let beta = vec![0.3; 10];
        let a = pose_body(sk, &beta, &theta, Vec3::zeros()).unwrap();
        let b = pose_body(sf, &beta, &surf_theta, Vec3::zeros()).unwrap();
        for (x, y) in a.vertices.iter().zip(&b.vertices) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn loader_validates() {
        let m = skeleton();
        let text = model_to_string(m).unwrap();
        let back = parse_model(&text).unwrap();
        assert_eq!(back.template(), m.template());
        assert_eq!(back.pose_dim(), 46);

        let mut parts = desk_parts(Flavor::Skeleton);
        let nv = parts.template.len();
        for w in &mut parts.joint_regressor[..nv] {
            *w *= 0.5;
        }
        match BodyModel::from_parts(parts) {
            Err(crate::Error::Invariant { check, .. }) => assert_eq!(check, "joint_regressor_rows"),
            other => panic!("expected invariant error, got {other:?}"),
        }

        assert!(matches!(parse_model(&text[..text.len() / 2]), Err(crate::Error::Parse { .. })));

        let mut parts = desk_parts(Flavor::Skeleton);
        for f in &mut parts.faces {
            f.swap(1, 2);
        }
        assert!(matches!(
            BodyModel::from_parts(parts),
            Err(crate::Error::Invariant { check: "orientation", .. })
        ));
    }
}
