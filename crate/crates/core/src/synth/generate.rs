//! Synthetic sessions with known truth: a sampled body, cameras around it,
//! parameter-space jitter calibrated to a vertex RMS, and gross outliers.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::body::{project_pose, BodyModel, Flavor, FrameTag, Kinematics, PoseParams, PELVIS, STERNUM_MID};
use crate::consensus::CaptureFrame;
use crate::error::{Error, Result};
use crate::geometry::{exp_so3, log_so3, rotation_about, Mat3, RigidTransform, Vec3};
use crate::guidance::{generate_all, ProbePose, RuleSet};
use crate::jsonio;
use crate::session::{CaptureSession, Posture, RecordedPose, UNITS_METERS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub frames: usize,
    pub vertex_noise_sigma_m: f64,
    pub outlier_count: usize,
    pub outlier_translation_m: f64,
    pub outlier_rotation_deg: f64,
    /// Shape coefficients are drawn uniformly from `±beta_range`.
    pub beta_range: f64,
    /// Non-root skeleton pose values (and root jitter) from `±theta_range_rad`.
    pub theta_range_rad: f64,
    pub posture: Posture,
    /// Per-axis std of the operator's placement error on recorded poses.
    pub operator_position_sigma_mm: f64,
    pub operator_rotation_sigma_deg: f64,
    pub recorded_views: Vec<String>,
    /// Written verbatim into the session's `model_ref`.
    pub model_ref: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            schema_version: jsonio::SCHEMA_VERSION,
            seed: 42,
            frames: 8,
            vertex_noise_sigma_m: 0.002,
            outlier_count: 0,
            outlier_translation_m: 0.3,
            outlier_rotation_deg: 30.0,
            beta_range: 1.0,
            theta_range_rad: 0.15,
            posture: Posture::Supine,
            operator_position_sigma_mm: 10.0,
            operator_rotation_sigma_deg: 5.0,
            recorded_views: vec!["suprasternal_lax".into(), "subcostal_4ch".into()],
            model_ref: "desk_surface.pbm.json".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleConfig(m));
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if self.outlier_count >= self.frames {
            return bad(format!("outlier_count {} must be < frames {}", self.outlier_count, self.frames));
        }
        let nonneg = [
            self.vertex_noise_sigma_m,
            self.outlier_translation_m,
            self.outlier_rotation_deg,
            self.beta_range,
            self.theta_range_rad,
            self.operator_position_sigma_mm,
            self.operator_rotation_sigma_deg,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("ranges and sigmas must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: SynthConfig = jsonio::parse_versioned(text)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub session_id: String,
    /// World-frame truth in the skeleton flavor.
    pub skeleton_params: PoseParams,
    /// The same body in the surface flavor.
    pub surface_params: PoseParams,
    pub outlier_frames: Vec<usize>,
    pub thorax_frame: RigidTransform,
    /// Guidance generated on the true body, one entry per successful view.
    pub guidance: Vec<ProbePose>,
}

impl GroundTruth {
    pub fn parse(text: &str) -> Result<Self> {
        jsonio::parse_versioned(text)
    }
}

/// Independent random streams so that changing one aspect (for example the
/// outlier count) leaves every other draw unchanged.
#[derive(Clone, Copy)]
enum Stream {
    Body = 1,
    Camera = 2,
    Noise = 3,
    Outlier = 4,
    Operator = 5,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// World rotation of the body frame for each posture. World +Y is up.
pub fn posture_rotation(posture: Posture) -> Mat3 {
    let rx = rotation_about(&Vec3::x(), -std::f64::consts::FRAC_PI_2);
    match posture {
        Posture::Supine => rx,
        Posture::LeftLateralDecubitus => rx * rotation_about(&Vec3::y(), std::f64::consts::FRAC_PI_2),
    }
}

/// Nominal world position of the pelvis joint on the table.
pub const PELVIS_WORLD: [f64; 3] = [0.0, 0.9, 0.0];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(normal(rng), normal(rng), normal(rng))
}

fn uniform(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    if r > 0.0 {
        rng.random_range(-r..=r)
    } else {
        0.0
    }
}

/// Samples the true skeleton-flavor world parameters.
pub fn sample_truth(skeleton: &BodyModel, config: &SynthConfig) -> Result<PoseParams> {
    let mut r = rng(config.seed, Stream::Body);
    let beta: Vec<f64> = (0..skeleton.num_betas()).map(|_| uniform(&mut r, config.beta_range)).collect();
    let mut theta: Vec<f64> = (0..skeleton.pose_dim()).map(|_| uniform(&mut r, config.theta_range_rad)).collect();
    let jitter = Vec3::new(theta[0], theta[1], theta[2]);
    let root = posture_rotation(config.posture) * exp_so3(&jitter);
    theta[..3].copy_from_slice(log_so3(&root).as_slice());
    let offset = Vec3::new(uniform(&mut r, 0.05), uniform(&mut r, 0.05), uniform(&mut r, 0.05));
    let j0 = crate::body::rest_joints(skeleton, &beta)[0];
    Ok(PoseParams {
        beta,
        theta,
        translation: Vec3::from(PELVIS_WORLD) + offset - j0,
    })
}

/// OpenCV-style look-at: +Z toward `target`, +Y roughly opposite `up`.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> RigidTransform {
    let z = (target - eye).normalize();
    let mut x = (-up).cross(&z);
    if x.norm() < 1e-9 {
        x = z.cross(&Vec3::x());
        if x.norm() < 1e-9 {
            x = z.cross(&Vec3::y());
        }
    }
    let x = x.normalize();
    let y = z.cross(&x);
    RigidTransform::from_matrix(&Mat3::from_columns(&[x, y, z]), eye)
}

/// Cameras on a spherical cap of half-angle 60° around the anterior
/// direction, looking at the mid-sternum.
fn sample_cameras(config: &SynthConfig, anterior: Vec3, superior: Vec3, target: Vec3) -> Vec<RigidTransform> {
    let mut r = rng(config.seed, Stream::Camera);
    let a = anterior.normalize();
    let u = (superior - a * superior.dot(&a)).normalize();
    let v = a.cross(&u);
    let cos_max = 60f64.to_radians().cos();
    (0..config.frames)
        .map(|_| {
            let c: f64 = r.random_range(cos_max..1.0);
            let phi: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - c * c).sqrt();
            let dir = a * c + (u * phi.cos() + v * phi.sin()) * s;
            let dist = r.random_range(1.0..1.6);
            let aim = target + normal3(&mut r) * 0.02;
            look_at(target + dir * dist, aim, superior)
        })
        .collect()
}

fn masked_points(model: &BodyModel, p: &PoseParams) -> Vec<Vec3> {
    let kin = Kinematics::new(model, p);
    model
        .torso_mask()
        .vertices
        .iter()
        .map(|&v| kin.posed_vertex(model, &p.beta, v))
        .collect()
}

fn rms(a: &[Vec3], b: &[Vec3]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / a.len() as f64).sqrt()
}

/// Relative step sizes of the noise direction per parameter group.
const NOISE_SCALE_BETA: f64 = 0.5;
const NOISE_SCALE_THETA: f64 = 0.05;
const NOISE_SCALE_TRANSLATION: f64 = 0.01;

/// Perturbs `p` along a random parameter direction scaled by bisection so the
/// masked vertex RMS against the unperturbed body equals `sigma`.
pub fn jitter_params(model: &BodyModel, p: &PoseParams, sigma: f64, rng: &mut ChaCha8Rng) -> PoseParams {
    let dir_beta: Vec<f64> = p.beta.iter().map(|_| NOISE_SCALE_BETA * normal(rng)).collect();
    let dir_theta: Vec<f64> = p.theta.iter().map(|_| NOISE_SCALE_THETA * normal(rng)).collect();
    let dir_t = normal3(rng) * NOISE_SCALE_TRANSLATION;
    if sigma == 0.0 {
        return p.clone();
    }
    let at = |s: f64| PoseParams {
        beta: p.beta.iter().zip(&dir_beta).map(|(a, d)| a + s * d).collect(),
        theta: p.theta.iter().zip(&dir_theta).map(|(a, d)| a + s * d).collect(),
        translation: p.translation + dir_t * s,
    };
    let clean = masked_points(model, p);
    let err = |s: f64| rms(&masked_points(model, &at(s)), &clean);
    let mut hi = 1.0;
    while err(hi) < sigma && hi < 1e6 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if err(mid) < sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Gross error: rotation about the pelvis joint then a translation, both
/// with random directions.
pub fn corrupt_params(model: &BodyModel, p: &PoseParams, translation_m: f64, rotation_deg: f64, rng: &mut ChaCha8Rng) -> Result<PoseParams> {
    let axis = normal3(rng).normalize();
    let shift = normal3(rng).normalize() * translation_m;
    let pelvis = model
        .joint_index(PELVIS)
        .ok_or_else(|| Error::MissingData("model has no pelvis joint".into()))?;
    let kin = Kinematics::new(model, p);
    let pivot = kin.world_pos[pelvis];
    let rot = rotation_about(&axis, rotation_deg.to_radians());
    let t = RigidTransform::from_matrix(&rot, pivot - rot * pivot + shift);
    model.transform_params(p, &t)
}

fn operator_pose(p: &ProbePose, config: &SynthConfig, rng: &mut ChaCha8Rng) -> ProbePose {
    let dp = normal3(rng) * (config.operator_position_sigma_mm / 1000.0);
    let dr = exp_so3(&(normal3(rng) * config.operator_rotation_sigma_deg.to_radians()));
    let r = dr * p.pose.rotation_matrix();
    ProbePose {
        pose: RigidTransform::from_matrix(&r, p.pose.translation() + dp),
        ..p.clone()
    }
}

pub fn session_id(config: &SynthConfig) -> String {
    format!("synth-{}-{}", config.posture.label(), config.seed)
}

/// Builds a session and its truth. `surface` and `skeleton` must share
/// template, shape space, regressor and skinning.
pub fn generate_session(
    config: &SynthConfig,
    surface: &BodyModel,
    skeleton: &BodyModel,
    rules: &RuleSet,
) -> Result<(CaptureSession, GroundTruth)> {
    config.validate()?;
    if surface.flavor() != Flavor::Surface || skeleton.flavor() != Flavor::Skeleton {
        return Err(Error::InfeasibleConfig("need a surface and a skeleton model".into()));
    }
    let truth = sample_truth(skeleton, config)?;
    let surface_truth = PoseParams {
        beta: truth.beta.clone(),
        theta: project_pose(skeleton, &truth.theta, surface),
        translation: truth.translation,
    };
    let mut body = skeleton.pose(&truth)?;
    body.frame = FrameTag::World;
    let rot = body.thorax_frame.rotation_matrix();
    let anterior = rot.column(2).into_owned();
    let superior = rot.column(1).into_owned();
    let cameras = sample_cameras(config, anterior, superior, body.landmark(STERNUM_MID)?);

    let mut noise_rng = rng(config.seed, Stream::Noise);
    let mut outlier_rng = rng(config.seed, Stream::Outlier);
    let mut outliers = sample(&mut outlier_rng, config.frames, config.outlier_count).into_vec();
    outliers.sort_unstable();

    let mut frames = Vec::with_capacity(config.frames);
    for (i, cam) in cameras.iter().enumerate() {
        let in_camera = surface.transform_params(&surface_truth, &cam.inverse())?;
        let mut est = jitter_params(surface, &in_camera, config.vertex_noise_sigma_m, &mut noise_rng);
        if outliers.contains(&i) {
            est = corrupt_params(surface, &est, config.outlier_translation_m, config.outlier_rotation_deg, &mut outlier_rng)?;
        }
        frames.push(CaptureFrame {
            camera_pose: cam.clone(),
            body_estimate: est,
        });
    }

    let guidance: Vec<ProbePose> = generate_all(&body, skeleton, rules)
        .into_iter()
        .filter_map(|o| o.result.ok())
        .collect();
    let mut op_rng = rng(config.seed, Stream::Operator);
    let recorded_poses = config
        .recorded_views
        .iter()
        .filter_map(|v| guidance.iter().find(|g| &g.view_id == v))
        .map(|g| RecordedPose {
            view_id: g.view_id.clone(),
            guided: operator_pose(g, config, &mut op_rng),
            ground_truth: g.clone(),
        })
        .collect();

    let id = session_id(config);
    let session = CaptureSession {
        schema_version: jsonio::SCHEMA_VERSION,
        session_id: id.clone(),
        subject_id: format!("desk-{}", config.seed),
        model_ref: config.model_ref.clone(),
        units: UNITS_METERS.into(),
        posture_label: config.posture,
        frames,
        recorded_poses,
    };
    let gt = GroundTruth {
        schema_version: jsonio::SCHEMA_VERSION,
        session_id: id,
        skeleton_params: truth,
        surface_params: surface_truth,
        outlier_frames: outliers,
        thorax_frame: body.thorax_frame.clone(),
        guidance,
    };
    Ok((session, gt))
}
