//! Torso-masked Levenberg–Marquardt fitting of body parameters to observed
//! vertices and joints.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::body::{local_rate_columns, shaped_vertex, BodyModel, FrameTag, JointDof, Kinematics, PoseParams, PosedBody, TorsoMask};
use crate::error::{Error, Result};
use crate::geometry::{vec3_serde, RigidTransform, Vec3};

/// Target coordinates for a fit. Either part may be absent.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub vertices: Option<Vec<Vec3>>,
    pub joints: Option<Vec<Vec3>>,
    pub frame: FrameTag,
}

impl Observation {
    pub fn from_body(body: &PosedBody) -> Self {
        Self {
            vertices: Some(body.vertices.clone()),
            joints: Some(body.joints.clone()),
            frame: body.frame,
        }
    }

    pub fn check(&self, model: &BodyModel) -> Result<()> {
        if self.vertices.is_none() && self.joints.is_none() {
            return Err(Error::MissingData("observation has neither vertices nor joints".into()));
        }
        if let Some(v) = &self.vertices {
            if v.len() != model.num_vertices() {
                return Err(Error::DimensionMismatch {
                    what: "observed vertices",
                    expected: model.num_vertices(),
                    got: v.len(),
                });
            }
        }
        if let Some(j) = &self.joints {
            if j.len() != model.num_joints() {
                return Err(Error::DimensionMismatch {
                    what: "observed joints",
                    expected: model.num_joints(),
                    got: j.len(),
                });
            }
        }
        Ok(())
    }

    pub fn transformed(&self, t: &RigidTransform, frame: FrameTag) -> Self {
        Self {
            vertices: self.vertices.as_ref().map(|v| t.transform_points(v)),
            joints: self.joints.as_ref().map(|j| t.transform_points(j)),
            frame,
        }
    }

    /// Point-wise mean of observations that carry the same parts.
    pub fn mean(obs: &[Observation]) -> Result<Observation> {
        let first = obs.first().ok_or_else(|| Error::EmptyGroup("observations".into()))?;
        let avg = |get: fn(&Observation) -> Option<&Vec<Vec3>>| -> Result<Option<Vec<Vec3>>> {
            let Some(base) = get(first) else {
                if obs.iter().any(|o| get(o).is_some()) {
                    return Err(Error::Schema("observations carry different parts".into()));
                }
                return Ok(None);
            };
            let mut acc = vec![Vec3::zeros(); base.len()];
            for o in obs {
                let pts = get(o).ok_or_else(|| Error::Schema("observations carry different parts".into()))?;
                if pts.len() != acc.len() {
                    return Err(Error::DimensionMismatch {
                        what: "observation points",
                        expected: acc.len(),
                        got: pts.len(),
                    });
                }
                for (a, p) in acc.iter_mut().zip(pts) {
                    *a += p;
                }
            }
            let k = obs.len() as f64;
            Ok(Some(acc.into_iter().map(|a| a / k).collect()))
        };
        Ok(Observation {
            vertices: avg(|o| o.vertices.as_ref())?,
            joints: avg(|o| o.joints.as_ref())?,
            frame: first.frame,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    /// Forward differences with step [`FD_STEP`].
    ForwardDifference,
}

pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub joint_weight: f64,
    /// Iterations spent on translation and root rotation before the full solve.
    pub stage1_iters: usize,
    pub jacobian: JacobianMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-8,
            grad_tol: 1e-10,
            joint_weight: 1.0,
            stage1_iters: 30,
            jacobian: JacobianMode::Analytic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(with = "vec3_serde")]
    pub translation: Vec3,
    pub final_rms_m: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn params(&self) -> PoseParams {
        PoseParams {
            beta: self.beta.clone(),
            theta: self.theta.clone(),
            translation: self.translation,
        }
    }
}

/// Loss after the initial evaluation and after every accepted step.
#[derive(Clone, Debug, Default)]
pub struct FitTrace {
    pub accepted_losses: Vec<f64>,
    pub rejected_steps: usize,
}

/// Residual layout and scaling for one observation under one mask.
pub(crate) struct Problem<'a> {
    model: &'a BodyModel,
    verts: Vec<(usize, Vec3)>,
    joints: Vec<(usize, Vec3)>,
    sv: f64,
    sj: f64,
    /// `anc[a][b]`: joint `a` is `b` or an ancestor of it.
    anc: Vec<Vec<bool>>,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a BodyModel, obs: &Observation, mask: &TorsoMask, joint_weight: f64) -> Result<Self> {
        obs.check(model)?;
        if let Some(&v) = mask.vertices.iter().find(|&&v| v >= model.num_vertices()) {
            return Err(Error::DimensionMismatch {
                what: "mask vertex index",
                expected: model.num_vertices(),
                got: v,
            });
        }
        if let Some(&j) = mask.joints.iter().find(|&&j| j >= model.num_joints()) {
            return Err(Error::DimensionMismatch {
                what: "mask joint index",
                expected: model.num_joints(),
                got: j,
            });
        }
        let verts: Vec<(usize, Vec3)> = match &obs.vertices {
            Some(o) => mask.vertices.iter().map(|&v| (v, o[v])).collect(),
            None => vec![],
        };
        let joints: Vec<(usize, Vec3)> = match &obs.joints {
            Some(o) if joint_weight > 0.0 => mask.joints.iter().map(|&j| (j, o[j])).collect(),
            _ => vec![],
        };
        let n = verts.len() as f64 + joint_weight * joints.len() as f64;
        if !(n > 0.0) {
            return Err(Error::EmptyMask);
        }
        let nj = model.num_joints();
        let anc = (0..nj)
            .map(|a| (0..nj).map(|b| model.is_ancestor_or_self(a, b)).collect())
            .collect();
        Ok(Self {
            model,
            verts,
            joints,
            sv: (1.0 / n).sqrt(),
            sj: (joint_weight / n).sqrt(),
            anc,
        })
    }

    fn len(&self) -> usize {
        3 * (self.verts.len() + self.joints.len())
    }

    pub fn residuals(&self, p: &PoseParams) -> DVector<f64> {
        let kin = Kinematics::new(self.model, p);
        self.residuals_with(&kin, p)
    }

    fn residuals_with(&self, kin: &Kinematics, p: &PoseParams) -> DVector<f64> {
        let mut r = DVector::zeros(self.len());
        for (i, &(v, target)) in self.verts.iter().enumerate() {
            let d = (kin.posed_vertex(self.model, &p.beta, v) - target) * self.sv;
            r.fixed_rows_mut::<3>(3 * i).copy_from(&d);
        }
        let off = 3 * self.verts.len();
        for (i, &(j, target)) in self.joints.iter().enumerate() {
            let d = (kin.world_pos[j] - target) * self.sj;
            r.fixed_rows_mut::<3>(off + 3 * i).copy_from(&d);
        }
        r
    }

    pub fn loss(&self, p: &PoseParams) -> f64 {
        self.residuals(p).norm_squared()
    }

    /// Same weighting, evaluated on explicit point sets instead of a posed body.
    fn loss_of_points(&self, vertices: Option<&[Vec3]>, joints: Option<&[Vec3]>) -> f64 {
        let mut s = 0.0;
        if let Some(pts) = vertices {
            s += self.verts.iter().map(|&(v, t)| (pts[v] - t).norm_squared()).sum::<f64>() * self.sv * self.sv;
        }
        if let Some(pts) = joints {
            s += self.joints.iter().map(|&(j, t)| (pts[j] - t).norm_squared()).sum::<f64>() * self.sj * self.sj;
        }
        s
    }

    pub fn jacobian(&self, p: &PoseParams, active: &[usize], mode: JacobianMode) -> (DVector<f64>, DMatrix<f64>) {
        match mode {
            JacobianMode::Analytic => self.jacobian_analytic(p, active),
            JacobianMode::ForwardDifference => self.jacobian_fd(p, active),
        }
    }

    fn jacobian_fd(&self, p: &PoseParams, active: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let r0 = self.residuals(p);
        let mut jac = DMatrix::zeros(r0.len(), active.len());
        for (c, &k) in active.iter().enumerate() {
            let mut q = p.clone();
            *param_mut(&mut q, k) += FD_STEP;
            let r1 = self.residuals(&q);
            jac.set_column(c, &((r1 - &r0) / FD_STEP));
        }
        (r0, jac)
    }

    fn jacobian_analytic(&self, p: &PoseParams, active: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let model = self.model;
        let nb = model.num_betas();
        let pd = model.pose_dim();
        let nj = model.num_joints();
        let kin = Kinematics::new(model, p);
        let r = self.residuals_with(&kin, p);
        let mut jac = DMatrix::zeros(r.len(), active.len());

        // World angular velocity of each active pose value, with its joint.
        let mut rot_cols: Vec<(usize, usize, Vec3)> = vec![];
        let mut beta_cols: Vec<(usize, usize)> = vec![];
        let mut trans_cols: Vec<(usize, usize)> = vec![];
        for (c, &k) in active.iter().enumerate() {
            if k < nb {
                beta_cols.push((c, k));
            } else if k < nb + pd {
                let (j, i) = joint_of(model, k - nb);
                let off = model.pose_offset(j);
                let dof = model.pose_dof(j);
                let local = local_rate_columns(dof, &p.theta[off..off + dof.dof()])[i];
                let w = match model.parent(j) {
                    Some(pj) => kin.world_rot[pj] * local,
                    None => local,
                };
                rot_cols.push((c, j, w));
            } else {
                trans_cols.push((c, k - nb - pd));
            }
        }

        // Shape derivatives of rest and posed joints.
        let mut d_rest = vec![vec![Vec3::zeros(); nj]; beta_cols.len()];
        let mut d_pos = vec![vec![Vec3::zeros(); nj]; beta_cols.len()];
        for (bi, &(_, b)) in beta_cols.iter().enumerate() {
            for (j, row) in model.regressor().iter().enumerate() {
                d_rest[bi][j] = row.iter().fold(Vec3::zeros(), |acc, &(v, w)| acc + shape_dir3(model, v, b) * w);
            }
            for j in 0..nj {
                d_pos[bi][j] = match model.parent(j) {
                    None => d_rest[bi][j],
                    Some(pj) => d_pos[bi][pj] + kin.world_rot[pj] * (d_rest[bi][j] - d_rest[bi][pj]),
                };
            }
        }

        let mut ys: Vec<(usize, f64, Vec3)> = Vec::with_capacity(8);
        for (i, &(v, _)) in self.verts.iter().enumerate() {
            let row = 3 * i;
            let shaped = shaped_vertex(model, &p.beta, v);
            ys.clear();
            ys.extend(
                model.skin()[v]
                    .iter()
                    .map(|&(k, w)| (k, w, kin.world_rot[k] * shaped + kin.offsets[k])),
            );
            for &(c, j, w) in &rot_cols {
                let (mut s, mut ws) = (Vec3::zeros(), 0.0);
                for &(k, wk, y) in &ys {
                    if self.anc[j][k] {
                        s += y * wk;
                        ws += wk;
                    }
                }
                if ws > 0.0 {
                    let d = w.cross(&(s - kin.world_pos[j] * ws)) * self.sv;
                    jac.fixed_view_mut::<3, 1>(row, c).copy_from(&d);
                }
            }
            for (bi, &(c, b)) in beta_cols.iter().enumerate() {
                let sd = shape_dir3(model, v, b);
                let d = model.skin()[v].iter().fold(Vec3::zeros(), |acc, &(k, wk)| {
                    acc + (kin.world_rot[k] * (sd - d_rest[bi][k]) + d_pos[bi][k]) * wk
                }) * self.sv;
                jac.fixed_view_mut::<3, 1>(row, c).copy_from(&d);
            }
            let wsum: f64 = model.skin()[v].iter().map(|&(_, w)| w).sum();
            for &(c, axis) in &trans_cols {
                jac[(row + axis, c)] = wsum * self.sv;
            }
        }

        let off = 3 * self.verts.len();
        for (i, &(k, _)) in self.joints.iter().enumerate() {
            let row = off + 3 * i;
            for &(c, j, w) in &rot_cols {
                if j != k && self.anc[j][k] {
                    let d = w.cross(&(kin.world_pos[k] - kin.world_pos[j])) * self.sj;
                    jac.fixed_view_mut::<3, 1>(row, c).copy_from(&d);
                }
            }
            for (bi, &(c, _)) in beta_cols.iter().enumerate() {
                jac.fixed_view_mut::<3, 1>(row, c).copy_from(&(d_pos[bi][k] * self.sj));
            }
            for &(c, axis) in &trans_cols {
                jac[(row + axis, c)] = self.sj;
            }
        }
        (r, jac)
    }

    /// Parameter indices (in `[β, θ, t]` order) that can move a residual.
    pub fn active_params(&self) -> Vec<usize> {
        let model = self.model;
        let nb = model.num_betas();
        let nj = model.num_joints();
        let mut joint_active = vec![false; nj];
        for &(v, _) in &self.verts {
            for &(k, _) in &model.skin()[v] {
                for (j, a) in joint_active.iter_mut().enumerate() {
                    *a |= self.anc[j][k];
                }
            }
        }
        for &(k, _) in &self.joints {
            for (j, a) in joint_active.iter_mut().enumerate() {
                *a |= j != k && self.anc[j][k];
            }
        }
        let mut out: Vec<usize> = (0..nb).collect();
        for j in (0..nj).filter(|&j| joint_active[j]) {
            let off = model.pose_offset(j);
            out.extend((off..off + model.pose_dof(j).dof()).map(|i| nb + i));
        }
        let t0 = nb + model.pose_dim();
        out.extend(t0..t0 + 3);
        out
    }
}

fn shape_dir3(model: &BodyModel, v: usize, b: usize) -> Vec3 {
    Vec3::new(model.shape_dir(v, 0, b), model.shape_dir(v, 1, b), model.shape_dir(v, 2, b))
}

/// Joint and within-joint index of a pose value.
fn joint_of(model: &BodyModel, pose_index: usize) -> (usize, usize) {
    for j in (0..model.num_joints()).rev() {
        let off = model.pose_offset(j);
        if pose_index >= off {
            return (j, pose_index - off);
        }
    }
    unreachable!("pose index {pose_index} outside the pose vector")
}

fn param_mut(p: &mut PoseParams, k: usize) -> &mut f64 {
    let nb = p.beta.len();
    let pd = p.theta.len();
    if k < nb {
        &mut p.beta[k]
    } else if k < nb + pd {
        &mut p.theta[k - nb]
    } else {
        &mut p.translation[k - nb - pd]
    }
}

/// Weighted mean squared distance over masked vertices and joints.
pub fn masked_loss(model: &BodyModel, params: &PoseParams, obs: &Observation, mask: &TorsoMask, joint_weight: f64) -> Result<f64> {
    params.check(model)?;
    Ok(Problem::new(model, obs, mask, joint_weight)?.loss(params))
}

/// RMS distance over masked vertices only; the per-frame residual of the
/// consensus stage.
pub fn masked_vertex_rms(model: &BodyModel, vertices: &[Vec3], obs: &Observation, mask: &TorsoMask) -> Result<f64> {
    let target = obs
        .vertices
        .as_ref()
        .ok_or_else(|| Error::MissingData("observation has no vertices".into()))?;
    if mask.vertices.is_empty() {
        return Err(Error::EmptyMask);
    }
    if vertices.len() != model.num_vertices() || target.len() != model.num_vertices() {
        return Err(Error::DimensionMismatch {
            what: "vertices",
            expected: model.num_vertices(),
            got: vertices.len().min(target.len()),
        });
    }
    let s: f64 = mask.vertices.iter().map(|&v| (vertices[v] - target[v]).norm_squared()).sum();
    Ok((s / mask.vertices.len() as f64).sqrt())
}

/// Residuals and Jacobian over `active` parameters, for inspection and checks.
pub fn residual_jacobian(
    model: &BodyModel,
    params: &PoseParams,
    obs: &Observation,
    mask: &TorsoMask,
    joint_weight: f64,
    mode: JacobianMode,
) -> Result<(Vec<usize>, DVector<f64>, DMatrix<f64>)> {
    params.check(model)?;
    let problem = Problem::new(model, obs, mask, joint_weight)?;
    let active = problem.active_params();
    let (r, j) = problem.jacobian(params, &active, mode);
    Ok((active, r, j))
}

pub fn fit_model(model: &BodyModel, obs: &Observation, mask: &TorsoMask, init: &PoseParams, config: &FitConfig) -> Result<FitResult> {
    fit_model_traced(model, obs, mask, init, config).map(|(r, _)| r)
}

pub fn fit_model_traced(
    model: &BodyModel,
    obs: &Observation,
    mask: &TorsoMask,
    init: &PoseParams,
    config: &FitConfig,
) -> Result<(FitResult, FitTrace)> {
    init.check(model)?;
    let problem = Problem::new(model, obs, mask, config.joint_weight)?;
    let mut trace = FitTrace::default();
    let (params, loss, iterations, converged) = solve(&problem, init, config, &mut trace)?;
    Ok((
        FitResult {
            beta: params.beta,
            theta: params.theta,
            translation: params.translation,
            final_rms_m: loss.sqrt(),
            iterations,
            converged,
        },
        trace,
    ))
}

/// Fits one parameter set to several observations at once, minimizing the
/// mean of their masked losses. The mean loss differs from the loss against
/// the averaged observation by a constant, so the solve runs on the average.
pub fn fit_batch(model: &BodyModel, obs: &[Observation], mask: &TorsoMask, init: &PoseParams, config: &FitConfig) -> Result<FitResult> {
    init.check(model)?;
    for o in obs {
        o.check(model)?;
    }
    let mean = Observation::mean(obs)?;
    let problem = Problem::new(model, &mean, mask, config.joint_weight)?;
    let spread = obs
        .iter()
        .map(|o| problem.loss_of_points(o.vertices.as_deref(), o.joints.as_deref()))
        .sum::<f64>()
        / obs.len() as f64;
    let mut trace = FitTrace::default();
    let (params, loss, iterations, converged) = solve(&problem, init, config, &mut trace)?;
    Ok(FitResult {
        beta: params.beta,
        theta: params.theta,
        translation: params.translation,
        final_rms_m: (loss + spread).sqrt(),
        iterations,
        converged,
    })
}

/// Mean masked loss of `params` over several observations.
pub fn batch_masked_loss(model: &BodyModel, params: &PoseParams, obs: &[Observation], mask: &TorsoMask, joint_weight: f64) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyGroup("observations".into()));
    }
    let mut s = 0.0;
    for o in obs {
        s += masked_loss(model, params, o, mask, joint_weight)?;
    }
    Ok(s / obs.len() as f64)
}

fn solve(
    problem: &Problem,
    init: &PoseParams,
    config: &FitConfig,
    trace: &mut FitTrace,
) -> Result<(PoseParams, f64, usize, bool)> {
    let model = problem.model;
    let nb = model.num_betas();
    let t0 = nb + model.pose_dim();
    let active = problem.active_params();
    let mut params = init.clone();
    let mut used = 0;

    let stage1_budget = config.stage1_iters.min(config.max_iters);
    if stage1_budget > 0 {
        let mut coarse: Vec<usize> = vec![];
        if *model.pose_dof(0) == JointDof::Free {
            let off = model.pose_offset(0);
            coarse.extend((off..off + 3).map(|i| nb + i));
        }
        coarse.extend(t0..t0 + 3);
        let (p, _, n, _) = levenberg_marquardt(problem, params, &coarse, stage1_budget, config, trace)?;
        params = p;
        used += n;
    }
    let (p, loss, n, converged) = levenberg_marquardt(problem, params, &active, config.max_iters - used, config, trace)?;
    Ok((p, loss, used + n, converged))
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;
const DAMPING_FLOOR: f64 = 1e-12;

fn levenberg_marquardt(
    problem: &Problem,
    mut params: PoseParams,
    active: &[usize],
    budget: usize,
    config: &FitConfig,
    trace: &mut FitTrace,
) -> Result<(PoseParams, f64, usize, bool)> {
    let (mut r, mut jac) = problem.jacobian(&params, active, config.jacobian);
    let mut loss = r.norm_squared();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    trace.accepted_losses.push(loss);
    let mut lambda = LAMBDA_INIT;
    let mut iters = 0;
    loop {
        let g = jac.tr_mul(&r);
        if 2.0 * g.norm() < config.grad_tol {
            return Ok((params, loss, iters, true));
        }
        if iters >= budget {
            return Ok((params, loss, iters, false));
        }
        iters += 1;

        let jtj = jac.tr_mul(&jac);
        let diag_max = jtj.diagonal().max().max(0.0);
        let mut a = jtj.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * jtj[(i, i)].max(DAMPING_FLOOR * diag_max).max(f64::MIN_POSITIVE);
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                trace.rejected_steps += 1;
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    return Ok((params, loss, iters, true));
                }
                continue;
            }
        };
        let mut trial = params.clone();
        for (c, &k) in active.iter().enumerate() {
            *param_mut(&mut trial, k) += step[c];
        }
        let trial_loss = problem.loss(&trial);
        if trial_loss.is_finite() && trial_loss < loss {
            let rel = (loss - trial_loss) / loss;
            params = trial;
            loss = trial_loss;
            trace.accepted_losses.push(loss);
            lambda = (lambda / 10.0).max(1e-12);
            if rel < config.rel_tol {
                return Ok((params, loss, iters, true));
            }
            (r, jac) = problem.jacobian(&params, active, config.jacobian);
        } else {
            trace.rejected_steps += 1;
            lambda *= 10.0;
            // No representable step lowers the loss: a stationary point.
            if lambda > LAMBDA_MAX {
                return Ok((params, loss, iters, true));
            }
        }
    }
}
