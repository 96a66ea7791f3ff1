mod common;

use common::{models, random_params, random_transform, rng};
use proptest::prelude::*;
use thoraguide::body::FrameTag;
use thoraguide::fitting::{
    batch_masked_loss, fit_batch, fit_model, fit_model_traced, masked_loss, residual_jacobian, FitConfig, JacobianMode, Observation,
};
use thoraguide::Error;

fn noisy_observation(seed: u64, sigma: f64) -> (thoraguide::body::PoseParams, Observation) {
    use rand_distr::{Distribution, Normal};
    let m = &models().surface;
    let mut r = rng(seed);
    let truth = random_params(m, &mut r, 1.0, 0.2);
    let mut obs = Observation::from_body(&m.pose(&truth).unwrap());
    let n = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    if sigma > 0.0 {
        for v in obs.vertices.as_mut().unwrap() {
            for c in 0..3 {
                v[c] += n.sample(&mut r);
            }
        }
    }
    (truth, obs)
}

#[test]
fn jacobian_check_on_both_flavors() {
    for (k, model) in [&models().surface, &models().skeleton].into_iter().enumerate() {
        for seed in 0..3 {
            let mut r = rng(100 * k as u64 + seed);
            let truth = random_params(model, &mut r, 1.0, 0.3);
            let obs = Observation::from_body(&model.pose(&random_params(model, &mut r, 1.0, 0.3)).unwrap());
            let (_, _, ja) = residual_jacobian(model, &truth, &obs, model.torso_mask(), 1.0, JacobianMode::Analytic).unwrap();
            let (_, _, jf) = residual_jacobian(model, &truth, &obs, model.torso_mask(), 1.0, JacobianMode::ForwardDifference).unwrap();
            for c in 0..ja.ncols() {
                let (a, f) = (ja.column(c), jf.column(c));
                let rel = (a - f).norm() / a.norm().max(f.norm()).max(1e-12);
                assert!(rel < 1e-4, "flavor {k} seed {seed} column {c}: {rel:e}");
            }
        }
    }
}

#[test]
fn forward_difference_mode_reaches_the_same_fit() {
    let m = &models().surface;
    let (truth, obs) = noisy_observation(7, 0.002);
    let init = thoraguide::body::PoseParams::zeros(m);
    let mut init = init;
    init.translation = truth.translation;
    let a = fit_model(m, &obs, m.torso_mask(), &init, &FitConfig::default()).unwrap();
    let f = fit_model(
        m,
        &obs,
        m.torso_mask(),
        &init,
        &FitConfig {
            jacobian: JacobianMode::ForwardDifference,
            ..FitConfig::default()
        },
    )
    .unwrap();
    assert!((a.final_rms_m - f.final_rms_m).abs() < 1e-8, "{} vs {}", a.final_rms_m, f.final_rms_m);
}

#[test]
fn accepted_steps_never_increase_loss() {
    let mut total = 0;
    let mut seed = 0;
    let config = FitConfig {
        max_iters: 60,
        ..FitConfig::default()
    };
    while total < 1000 {
        let m = if seed % 2 == 0 { &models().surface } else { &models().skeleton };
        let mut r = rng(5000 + seed);
        let obs = Observation::from_body(&m.pose(&random_params(m, &mut r, 1.5, 0.4)).unwrap());
        let init = random_params(m, &mut r, 1.5, 0.4);
        let (res, trace) = fit_model_traced(m, &obs, m.torso_mask(), &init, &config).unwrap();
        for w in trace.accepted_losses.windows(2) {
            assert!(w[1] <= w[0], "seed {seed}: {} -> {}", w[0], w[1]);
        }
        // One initial entry per stage, then one per accepted step.
        let steps = trace.accepted_losses.len() + trace.rejected_steps;
        assert!(steps - 2 <= res.iterations && res.iterations <= steps - 1);
        total += res.iterations;
        seed += 1;
    }
}

#[test]
fn weighting_joints_changes_loss_linearly() {
    let m = &models().surface;
    let (truth, obs) = noisy_observation(3, 0.0);
    let mut off = truth.clone();
    off.translation.x += 0.01;
    let l0 = masked_loss(m, &off, &obs, m.torso_mask(), 0.0).unwrap();
    let l1 = masked_loss(m, &off, &obs, m.torso_mask(), 1.0).unwrap();
    let l5 = masked_loss(m, &off, &obs, m.torso_mask(), 5.0).unwrap();
    // A pure translation moves every vertex and joint by the same amount.
    for l in [l0, l1, l5] {
        assert!((l - 1e-4).abs() < 1e-15, "{l}");
    }
}

#[test]
fn batch_fit_is_order_independent() {
    let m = &models().surface;
    let obs: Vec<Observation> = (0..4).map(|s| noisy_observation(40, 0.003 * (s + 1) as f64).1).collect();
    let (truth, _) = noisy_observation(40, 0.0);
    let mut init = thoraguide::body::PoseParams::zeros(m);
    init.translation = truth.translation;
    let a = fit_batch(m, &obs, m.torso_mask(), &init, &FitConfig::default()).unwrap();
    let mut rev = obs.clone();
    rev.reverse();
    let b = fit_batch(m, &rev, m.torso_mask(), &init, &FitConfig::default()).unwrap();
    assert!((a.final_rms_m - b.final_rms_m).abs() < 1e-12);
    let direct = batch_masked_loss(m, &a.params(), &obs, m.torso_mask(), 1.0).unwrap().sqrt();
    assert!((direct - a.final_rms_m).abs() < 1e-12);
}

#[test]
fn mismatched_observation_rejected() {
    let m = &models().surface;
    let mut obs = Observation::from_body(&m.pose(&thoraguide::body::PoseParams::zeros(m)).unwrap());
    obs.vertices.as_mut().unwrap().pop();
    let err = fit_model(m, &obs, m.torso_mask(), &thoraguide::body::PoseParams::zeros(m), &FitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
}

#[test]
fn config_rejects_unknown_fields() {
    let text = r#"{"max_iters": 5, "bogus": 1}"#;
    assert!(thoraguide::jsonio::parse::<FitConfig>(text).is_err());
    let c: FitConfig = thoraguide::jsonio::parse(r#"{"max_iters": 5}"#).unwrap();
    assert_eq!(c.max_iters, 5);
    assert_eq!(c.stage1_iters, FitConfig::default().stage1_iters);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn frame_invariance(seed in 0u64..1_000_000) {
        let m = &models().surface;
        let (truth, obs) = noisy_observation(seed, 0.002);
        let mut r = rng(seed ^ 0xabc);
        let t = random_transform(&mut r, 2.0);
        let mut init = random_params(m, &mut r, 0.5, 0.1);
        init.translation = truth.translation;
        let base = fit_model(m, &obs, m.torso_mask(), &init, &FitConfig::default()).unwrap();
        let moved_obs = obs.transformed(&t, FrameTag::World);
        let moved_init = m.transform_params(&init, &t).unwrap();
        let moved = fit_model(m, &moved_obs, m.torso_mask(), &moved_init, &FitConfig::default()).unwrap();
        prop_assert!((base.final_rms_m - moved.final_rms_m).abs() < 1e-9,
            "{} vs {}", base.final_rms_m, moved.final_rms_m);
    }

    #[test]
    fn unmasked_vertices_do_not_matter(seed in 0u64..1_000_000, shift in -1.0f64..1.0) {
        let m = &models().skeleton;
        let mut r = rng(seed);
        let p = random_params(m, &mut r, 1.0, 0.2);
        let obs = Observation::from_body(&m.pose(&random_params(m, &mut r, 1.0, 0.2)).unwrap());
        let mut moved = obs.clone();
        for (v, x) in moved.vertices.as_mut().unwrap().iter_mut().enumerate() {
            if !m.is_masked_vertex(v) {
                x.y += shift;
            }
        }
        let a = masked_loss(m, &p, &obs, m.torso_mask(), 1.0).unwrap();
        let b = masked_loss(m, &p, &moved, m.torso_mask(), 1.0).unwrap();
        prop_assert_eq!(a, b);
    }
}
