use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn thoraguide(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thoraguide"))
        .args(args)
        .current_dir(dir)
        .env_remove("THORAGUIDE_LOG")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = thoraguide(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|e| panic!("{e}: {stderr}"))
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const RUN_CONFIG: &str = r#"{
  "schema_version": 1,
  "rules": "rules.json",
  "target_model": "skeleton.pbm.json",
  "outputs": { "mesh_obj": "mesh.obj", "scene_obj": "scene.obj" }
}"#;

const SYNTH_CONFIG: &str = r#"{
  "schema_version": 1,
  "seed": 5,
  "vertex_noise_sigma_m": 0.003,
  "outlier_count": 2,
  "model_ref": "surface.pbm.json"
}"#;

/// Runs every subcommand in `dir` and returns the produced file names.
fn full_run(dir: &Path) -> Vec<&'static str> {
    ok(dir, &["model", "--flavor", "surface", "--out", "surface.pbm.json"]);
    ok(dir, &["model", "--flavor", "skeleton", "--out", "skeleton.pbm.json"]);
    std::fs::copy(Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/default_rules.json"), dir.join("rules.json")).unwrap();
    write(dir, "run.json", RUN_CONFIG);
    write(dir, "synth.json", SYNTH_CONFIG);
    ok(dir, &["synth", "--config", "synth.json", "--out", "session.json"]);
    ok(dir, &["fit", "--session", "session.json", "--config", "run.json", "--out", "fit.json"]);
    ok(dir, &["guide", "--fit", "fit.json", "--config", "run.json", "--out", "guidance.json"]);
    ok(dir, &["eval", "--session", "session.json", "--guidance", "guidance.json", "--out", "report.json"]);
    ok(
        dir,
        &["score", "--session", "session.json", "--fit", "fit.json", "--guidance", "guidance.json", "--truth", "session.truth.json", "--out", "score.json"],
    );
    vec![
        "session.json",
        "session.truth.json",
        "session.json.manifest.json",
        "fit.json",
        "fit.json.manifest.json",
        "mesh.obj",
        "guidance.json",
        "guidance.json.manifest.json",
        "scene.obj",
        "scene.obj.frames.json",
        "report.json",
        "report.json.manifest.json",
        "score.json",
        "score.json.manifest.json",
    ]
}

#[test]
fn end_to_end_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files = full_run(a.path());
    full_run(b.path());
    for f in files {
        let x = std::fs::read(a.path().join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }

    let fit: Value = serde_json::from_slice(&std::fs::read(a.path().join("fit.json")).unwrap()).unwrap();
    let inliers = fit["consensus"]["inlier_frames"].as_array().unwrap();
    assert_eq!(inliers.len(), 6);
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.path().join("fit.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["outputs"][0]["path"], "fit.json");
    let scene = std::fs::read_to_string(a.path().join("scene.obj")).unwrap();
    assert_eq!(scene.matches("\no probe_").count(), 10);
    let report: Value = serde_json::from_slice(&std::fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert!(!report["groups"].as_array().unwrap().is_empty());
}

#[test]
fn seed_override_changes_the_manifest_seed() {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path());
    let cfg = RUN_CONFIG.replacen("\"schema_version\": 1,", "\"schema_version\": 1, \"seed\": 9,", 1);
    write(dir.path(), "run9.json", &cfg);
    ok(dir.path(), &["fit", "--session", "session.json", "--config", "run9.json", "--out", "fit9.json", "--mesh", "mesh9.obj"]);
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit9.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert!(dir.path().join("mesh9.obj").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &[][..], &["fit", "--session", "s.json"][..]] {
        let out = thoraguide(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_record(&out)["class"], "usage");
    }
    assert_eq!(thoraguide(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = thoraguide(p, &["fit", "--session", "missing.json", "--config", "run.json", "--out", "fit.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "io");

    write(p, "synth.json", r#"{"schema_version": 1, "frames": 4, "outlier_count": 4}"#);
    let out = thoraguide(p, &["synth", "--config", "synth.json", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "infeasible_config");

    write(p, "synth.json", r#"{"schema_version": 2}"#);
    let out = thoraguide(p, &["synth", "--config", "synth.json", "--out", "s.json"]);
    assert_eq!(error_record(&out)["error"], "schema_version");

    // A session without recorded poses cannot be evaluated.
    write(p, "synth.json", r#"{"schema_version": 1, "vertex_noise_sigma_m": 0.0, "recorded_views": []}"#);
    ok(p, &["synth", "--config", "synth.json", "--out", "s.json"]);
    ok(p, &["model", "--flavor", "surface", "--out", "desk_surface.pbm.json"]);
    ok(p, &["model", "--flavor", "skeleton", "--out", "skeleton.pbm.json"]);
    std::fs::copy(Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/default_rules.json"), p.join("rules.json")).unwrap();
    write(p, "run.json", RUN_CONFIG);
    ok(p, &["fit", "--session", "s.json", "--config", "run.json", "--out", "fit.json"]);
    ok(p, &["guide", "--fit", "fit.json", "--config", "run.json", "--out", "g.json"]);
    let out = thoraguide(p, &["eval", "--session", "s.json", "--guidance", "g.json", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "missing_data");
    assert_eq!(rec["class"], "data");
    assert!(!p.join("r.json").exists());
}

#[test]
fn numerical_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    full_run(p);
    let strict = RUN_CONFIG.replacen("\"rules\"", "\"ransac\": {\"inlier_threshold_m\": 1e-7}, \"rules\"", 1);
    write(p, "strict.json", &strict);
    let out = thoraguide(p, &["fit", "--session", "session.json", "--config", "strict.json", "--out", "f.json"]);
    assert_eq!(out.status.code(), Some(4));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "no_support");
    assert_eq!(rec["class"], "numerical");
}
