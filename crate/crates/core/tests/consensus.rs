mod common;

use common::{models, synth, synth_config};
use thoraguide::consensus::{
    aggregate_to_world, average_params, combinations, consensus_from_frames, frame_residuals, ransac_consensus_detailed,
    world_params, RansacConfig,
};
use thoraguide::fitting::{fit_batch, FitConfig, Observation};
use thoraguide::{Error, ErrorClass};

/// Largest inlier count over every `m`-subset, computed without the library's
/// hypothesis machinery.
fn brute_force_max_support(obs: &[Observation], seeds: &[thoraguide::body::PoseParams], ransac: &RansacConfig) -> usize {
    let m = &models().surface;
    let mut best = 0;
    for subset in combinations(obs.len(), ransac.sample_size) {
        let members: Vec<Observation> = subset.iter().map(|&i| obs[i].clone()).collect();
        let init = average_params(m, &subset.iter().map(|&i| &seeds[i]).collect::<Vec<_>>()).unwrap();
        let fit = fit_batch(m, &members, m.torso_mask(), &init, &FitConfig::default()).unwrap();
        let res = frame_residuals(m, &fit.params(), obs).unwrap();
        best = best.max(res.iter().filter(|&&r| r < ransac.inlier_threshold_m).count());
    }
    best
}

#[test]
fn exhaustive_winner_has_maximum_support() {
    let m = &models().surface;
    let ransac = RansacConfig::default();
    for (seed, sigma, outliers) in [(1, 0.002, 2), (2, 0.005, 1), (3, 0.01, 3), (4, 0.0, 2)] {
        let (session, _) = synth(&synth_config(seed, sigma, outliers));
        let obs = aggregate_to_world(m, &session.frames).unwrap();
        let seeds = world_params(m, &session.frames).unwrap();
        let (_, hyps) = ransac_consensus_detailed(m, &obs, &seeds, &ransac, &FitConfig::default()).unwrap();
        assert_eq!(hyps.len(), 56);
        let winner = hyps.iter().map(|h| h.inliers.len()).max().unwrap();
        assert_eq!(winner, brute_force_max_support(&obs, &seeds, &ransac), "seed {seed}");
    }
}

#[test]
fn noiseless_outliers_are_excluded_exactly() {
    let m = &models().surface;
    let (session, gt) = synth(&synth_config(11, 0.0, 2));
    let r = consensus_from_frames(m, &session.frames, &RansacConfig::default(), &FitConfig::default()).unwrap();
    let clean: Vec<usize> = (0..8).filter(|i| !gt.outlier_frames.contains(i)).collect();
    assert_eq!(r.inlier_frames, clean);
    assert!(r.final_rms_m < 1e-9, "{}", r.final_rms_m);
    for &o in &gt.outlier_frames {
        assert!(r.per_frame_residual_m[o] > 0.02);
    }
}

#[test]
fn frame_order_does_not_change_the_consensus() {
    let m = &models().surface;
    let (session, _) = synth(&synth_config(12, 0.003, 2));
    let a = consensus_from_frames(m, &session.frames, &RansacConfig::default(), &FitConfig::default()).unwrap();
    let perm = [5, 2, 7, 0, 3, 6, 1, 4];
    let shuffled: Vec<_> = perm.iter().map(|&i| session.frames[i].clone()).collect();
    let b = consensus_from_frames(m, &shuffled, &RansacConfig::default(), &FitConfig::default()).unwrap();
    let mut mapped: Vec<usize> = b.inlier_frames.iter().map(|&i| perm[i]).collect();
    mapped.sort_unstable();
    assert_eq!(mapped, a.inlier_frames);
    for (j, &i) in perm.iter().enumerate() {
        assert!((a.per_frame_residual_m[i] - b.per_frame_residual_m[j]).abs() < 1e-9);
    }
    assert!((a.final_rms_m - b.final_rms_m).abs() < 1e-9);
}

#[test]
fn sampling_mode_is_reproducible_and_thread_independent() {
    let m = &models().surface;
    let mut cfg = synth_config(13, 0.002, 3);
    cfg.frames = 12;
    let (session, _) = synth(&cfg);
    let ransac = RansacConfig {
        max_hypotheses: 30,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| consensus_from_frames(m, &session.frames, &ransac, &FitConfig::default()).unwrap())
    };
    let a = run(1);
    assert_eq!(a.hypotheses_evaluated, 30);
    assert_eq!(a, run(3));
    assert_eq!(a, consensus_from_frames(m, &session.frames, &ransac, &FitConfig::default()).unwrap());
    let other = RansacConfig { seed: 7, ..ransac.clone() };
    let c = consensus_from_frames(m, &session.frames, &other, &FitConfig::default()).unwrap();
    assert_eq!(c.hypotheses_evaluated, 30);
}

#[test]
fn insufficient_support_is_a_numerical_failure() {
    let m = &models().surface;
    let (session, _) = synth(&synth_config(14, 0.005, 0));
    let strict = RansacConfig {
        inlier_threshold_m: 1e-6,
        ..Default::default()
    };
    let err = consensus_from_frames(m, &session.frames, &strict, &FitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NoSupport { .. }), "{err}");
    assert_eq!(err.class(), ErrorClass::Numerical);
}

#[test]
fn sample_larger_than_session_is_infeasible() {
    let m = &models().surface;
    let (session, _) = synth(&synth_config(15, 0.0, 0));
    let cfg = RansacConfig {
        sample_size: 9,
        ..Default::default()
    };
    let err = consensus_from_frames(m, &session.frames, &cfg, &FitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InfeasibleConfig(_)), "{err}");
}

#[test]
fn world_aggregation_is_camera_independent() {
    let m = &models().surface;
    let (session, gt) = synth(&synth_config(16, 0.0, 0));
    let truth = m.pose(&gt.surface_params).unwrap();
    for o in aggregate_to_world(m, &session.frames).unwrap() {
        let v = o.vertices.unwrap();
        let worst = v.iter().zip(&truth.vertices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }
}
