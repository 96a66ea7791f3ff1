#![allow(dead_code)]

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thoraguide::body::{BodyModel, Flavor, PoseParams};
use thoraguide::geometry::{exp_so3, RigidTransform, Vec3};
use thoraguide::guidance::{default_rules, GuidanceFile, RuleSet};
use thoraguide::pipeline::{run_fit, run_guidance, FitOutput};
use thoraguide::session::CaptureSession;
use thoraguide::synth::desk::desk_model;
use thoraguide::synth::{generate_session, GroundTruth, SynthConfig};

pub struct Models {
    pub surface: BodyModel,
    pub skeleton: BodyModel,
    pub rules: RuleSet,
}

pub fn models() -> &'static Models {
    static M: OnceLock<Models> = OnceLock::new();
    M.get_or_init(|| Models {
        surface: desk_model(Flavor::Surface).unwrap(),
        skeleton: desk_model(Flavor::Skeleton).unwrap(),
        rules: default_rules(),
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_transform(rng: &mut ChaCha8Rng, max_translation: f64) -> RigidTransform {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let r = exp_so3(&(axis.normalize() * angle));
    let t = Vec3::new(
        rng.random_range(-max_translation..max_translation),
        rng.random_range(-max_translation..max_translation),
        rng.random_range(-max_translation..max_translation),
    );
    RigidTransform::from_matrix(&r, t)
}

/// Shape from `±beta`, every pose value from `±theta`, small translation.
pub fn random_params(model: &BodyModel, rng: &mut ChaCha8Rng, beta: f64, theta: f64) -> PoseParams {
    let mut p = PoseParams::zeros(model);
    for b in &mut p.beta {
        *b = rng.random_range(-beta..=beta);
    }
    for t in &mut p.theta {
        *t = rng.random_range(-theta..=theta);
    }
    p.translation = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    p
}

pub fn synth_config(seed: u64, sigma_m: f64, outliers: usize) -> SynthConfig {
    SynthConfig {
        seed,
        vertex_noise_sigma_m: sigma_m,
        outlier_count: outliers,
        ..SynthConfig::default()
    }
}

pub fn synth(config: &SynthConfig) -> (CaptureSession, GroundTruth) {
    let m = models();
    generate_session(config, &m.surface, &m.skeleton, &m.rules).unwrap()
}

pub fn pipeline(session: &CaptureSession) -> (FitOutput, GuidanceFile) {
    let m = models();
    let fit = run_fit(&m.surface, &m.skeleton, session, &Default::default(), &Default::default()).unwrap();
    let (body, outcomes) = run_guidance(&m.skeleton, &fit.skeleton.params(), &m.rules).unwrap();
    let guidance = GuidanceFile::new(&m.skeleton, &body, &outcomes);
    (fit, guidance)
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
