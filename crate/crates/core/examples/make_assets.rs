//! Regenerates the bundled assets: desk models, default rules, an example
//! run config, synth config, and an 8-frame session with its truth.
//!
//!     cargo run --release --example make_assets [-- <dir>]

use std::path::PathBuf;

use thoraguide::body::{save_model, Flavor};
use thoraguide::guidance::default_rules;
use thoraguide::jsonio;
use thoraguide::session::{save_session, OutputPaths, RunConfig};
use thoraguide::synth::desk::desk_model;
use thoraguide::synth::{generate_session, SynthConfig};

fn main() -> thoraguide::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets"));
    let surface = desk_model(Flavor::Surface)?;
    let skeleton = desk_model(Flavor::Skeleton)?;
    let rules = default_rules();
    save_model(&surface, dir.join("desk_surface.pbm.json"))?;
    save_model(&skeleton, dir.join("desk_skeleton.pbm.json"))?;
    rules.save(dir.join("default_rules.json"))?;

    let run = RunConfig {
        schema_version: jsonio::SCHEMA_VERSION,
        fit: Default::default(),
        ransac: Default::default(),
        rules: "default_rules.json".into(),
        target_model: "desk_skeleton.pbm.json".into(),
        outputs: OutputPaths::default(),
        seed: None,
    };
    jsonio::write(&dir.join("run_config.json"), &run)?;

    let synth = SynthConfig {
        outlier_count: 2,
        ..SynthConfig::default()
    };
    jsonio::write(&dir.join("synth_config.json"), &synth)?;
    let (session, truth) = generate_session(&synth, &surface, &skeleton, &rules)?;
    save_session(&session, dir.join("example_session.json"))?;
    jsonio::write(&dir.join("example_session.truth.json"), &truth)?;
    println!("wrote assets to {}", dir.display());
    Ok(())
}
