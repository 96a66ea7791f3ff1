//! Multi-frame fusion: per-frame estimates are mapped to the world frame and
//! a RANSAC search over frame subsets picks the parameter set with the widest
//! support.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{BodyModel, FrameTag, JointDof, PoseParams};
use crate::error::{Error, Result};
use crate::fitting::{fit_batch, masked_vertex_rms, FitConfig, Observation};
use crate::geometry::{exp_so3, log_so3, RigidTransform, Vec3};

/// One capture: the camera pose in the world and the body estimate in that
/// camera's frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureFrame {
    pub camera_pose: RigidTransform,
    pub body_estimate: PoseParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub sample_size: usize,
    pub inlier_threshold_m: f64,
    pub max_hypotheses: usize,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            sample_size: 3,
            inlier_threshold_m: 0.02,
            max_hypotheses: 60,
            min_inliers: 3,
            seed: 42,
        }
    }
}

/// A fitted frame subset and its support.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub frames: Vec<usize>,
    pub params: PoseParams,
    pub residuals: Vec<f64>,
    pub inliers: Vec<usize>,
    pub total_inlier_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusResult {
    pub params: PoseParams,
    pub inlier_frames: Vec<usize>,
    pub per_frame_residual_m: Vec<f64>,
    pub hypotheses_evaluated: usize,
    pub winning_subset: Vec<usize>,
    /// Masked RMS of the final refit over its inliers.
    pub final_rms_m: f64,
    pub converged: bool,
}

/// Poses every estimate and maps it into the world by its camera pose.
pub fn aggregate_to_world(model: &BodyModel, frames: &[CaptureFrame]) -> Result<Vec<Observation>> {
    if frames.is_empty() {
        return Err(Error::EmptyGroup("frames".into()));
    }
    frames
        .iter()
        .map(|f| {
            let body = model.pose(&f.body_estimate)?;
            Ok(Observation::from_body(&body).transformed(&f.camera_pose, FrameTag::World))
        })
        .collect()
}

/// World-frame parameters of each estimate (root pre-composed by the camera).
pub fn world_params(model: &BodyModel, frames: &[CaptureFrame]) -> Result<Vec<PoseParams>> {
    frames
        .iter()
        .map(|f| model.transform_params(&f.body_estimate, &f.camera_pose))
        .collect()
}

/// Element-wise mean, with the root rotation averaged as a sign-aligned
/// quaternion so distant axis-angle branches do not cancel.
pub fn average_params(model: &BodyModel, params: &[&PoseParams]) -> Result<PoseParams> {
    let first = *params.first().ok_or_else(|| Error::EmptyGroup("parameter sets".into()))?;
    first.check(model)?;
    let k = params.len() as f64;
    let mut out = PoseParams {
        beta: vec![0.0; first.beta.len()],
        theta: vec![0.0; first.theta.len()],
        translation: Vec3::zeros(),
    };
    for p in params {
        p.check(model)?;
        for (a, b) in out.beta.iter_mut().zip(&p.beta) {
            *a += b / k;
        }
        for (a, b) in out.theta.iter_mut().zip(&p.theta) {
            *a += b / k;
        }
        out.translation += p.translation / k;
    }
    if *model.pose_dof(0) == JointDof::Free {
        let quat = |p: &PoseParams| {
            let r = exp_so3(&Vec3::new(p.theta[0], p.theta[1], p.theta[2]));
            UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r))
        };
        let q0 = quat(first);
        let mut acc = Quaternion::new(0.0, 0.0, 0.0, 0.0);
        for p in params {
            let q = quat(p);
            let q = if q.coords.dot(&q0.coords) < 0.0 { -q.into_inner() } else { q.into_inner() };
            acc += q;
        }
        if acc.norm() > 1e-12 {
            let r = UnitQuaternion::from_quaternion(acc).to_rotation_matrix().into_inner();
            out.theta[..3].copy_from_slice(log_so3(&r).as_slice());
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![];
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Frame subsets to evaluate: every subset when few enough, else a seeded
/// sample of distinct subsets.
pub fn hypothesis_subsets(k: usize, config: &RansacConfig) -> Vec<Vec<usize>> {
    let m = config.sample_size;
    if binomial(k, m) <= config.max_hypotheses {
        return combinations(k, m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = vec![];
    let mut attempts = 0;
    while out.len() < config.max_hypotheses && attempts < 100 * config.max_hypotheses {
        attempts += 1;
        let mut s = sample(&mut rng, k, m).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Fits the frames in `subset` jointly and scores every frame against the fit.
pub fn evaluate_hypothesis(
    model: &BodyModel,
    obs: &[Observation],
    seeds: &[PoseParams],
    subset: &[usize],
    ransac: &RansacConfig,
    fit: &FitConfig,
) -> Result<Hypothesis> {
    let members: Vec<Observation> = subset.iter().map(|&i| obs[i].clone()).collect();
    let init = average_params(model, &subset.iter().map(|&i| &seeds[i]).collect::<Vec<_>>())?;
    let result = fit_batch(model, &members, model.torso_mask(), &init, fit)?;
    let params = result.params();
    let residuals = frame_residuals(model, &params, obs)?;
    let inliers: Vec<usize> = (0..obs.len()).filter(|&i| residuals[i] < ransac.inlier_threshold_m).collect();
    let total_inlier_residual = inliers.iter().map(|&i| residuals[i]).sum();
    Ok(Hypothesis {
        frames: subset.to_vec(),
        params,
        residuals,
        inliers,
        total_inlier_residual,
    })
}

/// Masked vertex RMS of every observation against the body of `params`.
pub fn frame_residuals(model: &BodyModel, params: &PoseParams, obs: &[Observation]) -> Result<Vec<f64>> {
    let body = model.pose(params)?;
    obs.iter()
        .map(|o| masked_vertex_rms(model, &body.vertices, o, model.torso_mask()))
        .collect()
}

/// True when `a` has better support than `b`.
fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    if a.inliers.len() != b.inliers.len() {
        return a.inliers.len() > b.inliers.len();
    }
    if a.total_inlier_residual != b.total_inlier_residual {
        return a.total_inlier_residual < b.total_inlier_residual;
    }
    a.frames < b.frames
}

/// RANSAC over frame subsets. `seeds` are per-frame world parameters used
/// to initialize each hypothesis fit.
pub fn ransac_consensus(
    model: &BodyModel,
    obs: &[Observation],
    seeds: &[PoseParams],
    ransac: &RansacConfig,
    fit: &FitConfig,
) -> Result<ConsensusResult> {
    let (result, _) = ransac_consensus_detailed(model, obs, seeds, ransac, fit)?;
    Ok(result)
}

/// As [`ransac_consensus`], also returning every evaluated hypothesis.
pub fn ransac_consensus_detailed(
    model: &BodyModel,
    obs: &[Observation],
    seeds: &[PoseParams],
    ransac: &RansacConfig,
    fit: &FitConfig,
) -> Result<(ConsensusResult, Vec<Hypothesis>)> {
    let k = obs.len();
    if seeds.len() != k {
        return Err(Error::DimensionMismatch {
            what: "hypothesis seeds",
            expected: k,
            got: seeds.len(),
        });
    }
    if ransac.sample_size == 0 || k < ransac.sample_size {
        return Err(Error::InfeasibleConfig(format!(
            "sample size {} with {k} frames",
            ransac.sample_size
        )));
    }
    let subsets = hypothesis_subsets(k, ransac);
    let hypotheses: Vec<Hypothesis> = subsets
        .par_iter()
        .map(|s| evaluate_hypothesis(model, obs, seeds, s, ransac, fit))
        .collect::<Result<_>>()?;

    let winner = hypotheses
        .iter()
        .reduce(|best, h| if better(h, best) { h } else { best })
        .expect("at least one subset");
    let min = ransac.min_inliers.max(1);
    if winner.inliers.len() < min {
        return Err(Error::NoSupport {
            min_inliers: min,
            best: winner.inliers.len(),
        });
    }

    let members: Vec<Observation> = winner.inliers.iter().map(|&i| obs[i].clone()).collect();
    let refit = fit_batch(model, &members, model.torso_mask(), &winner.params, fit)?;
    let params = refit.params();
    let residuals = frame_residuals(model, &params, obs)?;
    let inlier_frames: Vec<usize> = winner
        .inliers
        .iter()
        .copied()
        .filter(|&i| residuals[i] < ransac.inlier_threshold_m)
        .collect();
    if inlier_frames.is_empty() {
        return Err(Error::NoSupport {
            min_inliers: min,
            best: 0,
        });
    }
    let result = ConsensusResult {
        params,
        inlier_frames,
        per_frame_residual_m: residuals,
        hypotheses_evaluated: hypotheses.len(),
        winning_subset: winner.frames.clone(),
        final_rms_m: refit.final_rms_m,
        converged: refit.converged,
    };
    Ok((result, hypotheses))
}

/// Aggregates frames to the world and runs the consensus search.
pub fn consensus_from_frames(
    model: &BodyModel,
    frames: &[CaptureFrame],
    ransac: &RansacConfig,
    fit: &FitConfig,
) -> Result<ConsensusResult> {
    let obs = aggregate_to_world(model, frames)?;
    let seeds = world_params(model, frames)?;
    ransac_consensus(model, &obs, &seeds, ransac, fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate_lexicographically() {
        let c = combinations(5, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![0, 1, 2]);
        assert_eq!(c[9], vec![2, 3, 4]);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(combinations(8, 3).len(), binomial(8, 3));
        assert_eq!(binomial(8, 3), 56);
    }

    #[test]
    fn sampling_mode_is_seeded_and_distinct() {
        let cfg = RansacConfig {
            max_hypotheses: 20,
            ..Default::default()
        };
        let a = hypothesis_subsets(12, &cfg);
        let b = hypothesis_subsets(12, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        let set: std::collections::BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 20);
        assert_eq!(hypothesis_subsets(8, &RansacConfig::default()).len(), 56);
    }
}
