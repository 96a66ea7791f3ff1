//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit status.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::body::{load_model, save_model, BodyModel, Flavor};
use crate::error::{Error, ErrorClass, Result};
use crate::guidance::{default_rules, GuidanceFile, RuleSet};
use crate::jsonio;
use crate::pipeline::{evaluate, run_fit, run_guidance, FitOutput};
use crate::scene::{mesh_obj, write_scene};
use crate::session::{load_config, load_session, resolve, save_session, CaptureSession, RunConfig};
use crate::synth::desk::desk_model;
use crate::synth::{generate_session, score_run, GroundTruth, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable holding the log filter, e.g. `info` or `thoraguide=debug`.
pub const LOG_ENV: &str = "THORAGUIDE_LOG";

#[derive(Debug, Parser)]
#[command(name = "thoraguide", version, about = "Body-model fusion and probe placement guidance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FlavorArg {
    Surface,
    Skeleton,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse a capture session into one body and convert it to the skeleton model.
    Fit {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Posed consensus mesh (OBJ); overrides `outputs.mesh_obj`.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Generate probe poses from a fit result.
    Guide {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Mesh with probe glyphs (OBJ); overrides `outputs.scene_obj`.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Compare guidance with the session's recorded probe poses.
    Eval {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        guidance: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic session and its ground truth.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out stem>.truth.json` beside the session.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Rule file; the built-in defaults otherwise.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Surface model; the desk model otherwise.
        #[arg(long)]
        surface: Option<PathBuf>,
        /// Skeleton model; the desk model otherwise.
        #[arg(long)]
        skeleton: Option<PathBuf>,
    },
    /// Score fit and guidance outputs against synthetic ground truth.
    Score {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        guidance: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in desk model.
    Model {
        #[arg(long, value_enum)]
        flavor: FlavorArg,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Machine-readable failure written to stderr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub class: String,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorRecord {
    pub fn from_error(e: &Error) -> Self {
        let (class, exit_code) = match e.class() {
            ErrorClass::Data => ("data", EXIT_DATA),
            ErrorClass::Numerical => ("numerical", EXIT_NUMERICAL),
        };
        Self {
            error: e.kind().into(),
            class: class.into(),
            message: e.to_string(),
            exit_code,
        }
    }

    fn usage(message: String) -> Self {
        Self {
            error: "usage".into(),
            class: "usage".into(),
            message,
            exit_code: EXIT_USAGE,
        }
    }

    fn emit(&self) {
        eprintln!("{}", serde_json::to_string(self).unwrap_or_default());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written beside every main output as `<out>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    fn new(command: &str, seed: Option<u64>) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("thoraguide".into(), env!("CARGO_PKG_VERSION").into());
        Self {
            schema_version: jsonio::SCHEMA_VERSION,
            command: command.into(),
            seed,
            versions,
            inputs: vec![],
            outputs: vec![],
        }
    }

    fn model(&mut self, role: &str, model: &BodyModel) {
        self.versions.insert(role.into(), model.version().into());
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest(path)?);
        Ok(())
    }

    fn write(&self, out: &Path) -> Result<()> {
        jsonio::write(&manifest_path(out), self)
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// `dir/name.json` → `dir/name.truth.json`.
pub fn truth_path(session_out: &Path) -> PathBuf {
    let stem = session_out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    session_out.with_file_name(format!("{stem}.truth.json"))
}

/// Runs the CLI on `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter(LOG_ENV)).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{e}");
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            ErrorRecord::usage(first).emit();
            return EXIT_USAGE;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let rec = ErrorRecord::from_error(&e);
            rec.emit();
            rec.exit_code
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Fit { session, config, out, mesh } => cmd_fit(&session, &config, &out, mesh),
        Command::Guide { fit, config, out, scene } => cmd_guide(&fit, &config, &out, scene),
        Command::Eval { session, guidance, out } => cmd_eval(&session, &guidance, &out),
        Command::Synth {
            config,
            out,
            truth,
            rules,
            surface,
            skeleton,
        } => cmd_synth(&config, &out, truth, rules, surface, skeleton),
        Command::Score {
            session,
            fit,
            guidance,
            truth,
            out,
        } => cmd_score(&session, &fit, &guidance, &truth, &out),
        Command::Model { flavor, out } => cmd_model(flavor, &out),
    }
}

fn session_model(session_path: &Path, session: &CaptureSession) -> Result<(PathBuf, BodyModel)> {
    let path = resolve(session_path, &session.model_ref);
    let model = load_model(&path)?;
    Ok((path, model))
}

fn output_path(flag: Option<PathBuf>, config_path: &Path, configured: &Option<String>) -> Option<PathBuf> {
    flag.or_else(|| configured.as_deref().map(|r| resolve(config_path, r)))
}

fn cmd_fit(session_path: &Path, config_path: &Path, out: &Path, mesh: Option<PathBuf>) -> Result<()> {
    let session = load_session(session_path)?;
    let config = load_config(config_path)?;
    let (surface_path, surface) = session_model(session_path, &session)?;
    let skeleton_path = resolve(config_path, &config.target_model);
    let skeleton = load_model(&skeleton_path)?;
    let ransac = config.ransac();
    info!("fitting {} frames of `{}`", session.num_frames(), session.session_id);

    let result = run_fit(&surface, &skeleton, &session, &config.fit, &ransac)?;
    info!(
        "consensus inliers {:?}, rms {:.3e} m",
        result.consensus.inlier_frames, result.consensus.final_rms_m
    );
    jsonio::write(out, &result)?;

    let mut manifest = Manifest::new("fit", Some(ransac.seed));
    manifest.model("surface_model", &surface);
    manifest.model("skeleton_model", &skeleton);
    for p in [session_path, config_path, &surface_path, &skeleton_path] {
        manifest.input(p)?;
    }
    manifest.output(out)?;
    if let Some(mesh) = output_path(mesh, config_path, &config.outputs.mesh_obj) {
        let body = surface.pose(&result.consensus.params)?;
        jsonio::write_bytes(&mesh, mesh_obj(&body, &surface).as_bytes())?;
        manifest.output(&mesh)?;
    }
    manifest.write(out)
}

fn load_rules(config_path: &Path, config: &RunConfig) -> Result<(PathBuf, RuleSet)> {
    let path = resolve(config_path, &config.rules);
    let rules = RuleSet::load(&path)?;
    Ok((path, rules))
}

fn cmd_guide(fit_path: &Path, config_path: &Path, out: &Path, scene: Option<PathBuf>) -> Result<()> {
    let fit = FitOutput::parse(&jsonio::read_text(fit_path)?)?;
    let config = load_config(config_path)?;
    let skeleton_path = resolve(config_path, &config.target_model);
    let skeleton = load_model(&skeleton_path)?;
    if fit.skeleton_model_version != skeleton.version() {
        return Err(Error::IdMismatch(format!(
            "fit used skeleton `{}`, config names `{}`",
            fit.skeleton_model_version,
            skeleton.version()
        )));
    }
    let (rules_path, rules) = load_rules(config_path, &config)?;
    for r in &rules.rules {
        r.validate_for(&skeleton)?;
    }

    let (body, outcomes) = run_guidance(&skeleton, &fit.skeleton.params(), &rules)?;
    let file = GuidanceFile::new(&skeleton, &body, &outcomes);
    info!("{} of {} views placed", file.probes().len(), file.views.len());
    jsonio::write(out, &file)?;

    let mut manifest = Manifest::new("guide", None);
    manifest.model("skeleton_model", &skeleton);
    for p in [fit_path, config_path, &skeleton_path, &rules_path] {
        manifest.input(p)?;
    }
    manifest.output(out)?;
    if let Some(scene) = output_path(scene, config_path, &config.outputs.scene_obj) {
        write_scene(&scene, &body, &skeleton, &file.probes())?;
        manifest.output(&scene)?;
        manifest.output(&crate::scene::sidecar_path(&scene))?;
    }
    manifest.write(out)
}

fn cmd_eval(session_path: &Path, guidance_path: &Path, out: &Path) -> Result<()> {
    let session = load_session(session_path)?;
    let guidance: GuidanceFile = jsonio::load(guidance_path)?;
    let report = evaluate(&session, &guidance)?;
    jsonio::write(out, &report)?;
    let mut manifest = Manifest::new("eval", None);
    manifest.input(session_path)?;
    manifest.input(guidance_path)?;
    manifest.output(out)?;
    manifest.write(out)
}

fn model_or_desk(path: &Option<PathBuf>, flavor: Flavor, manifest: &mut Manifest) -> Result<BodyModel> {
    match path {
        Some(p) => {
            manifest.input(p)?;
            load_model(p)
        }
        None => desk_model(flavor),
    }
}

fn cmd_synth(
    config_path: &Path,
    out: &Path,
    truth: Option<PathBuf>,
    rules: Option<PathBuf>,
    surface: Option<PathBuf>,
    skeleton: Option<PathBuf>,
) -> Result<()> {
    let config = SynthConfig::parse(&jsonio::read_text(config_path)?)?;
    let mut manifest = Manifest::new("synth", Some(config.seed));
    manifest.input(config_path)?;
    let surface = model_or_desk(&surface, Flavor::Surface, &mut manifest)?;
    let skeleton = model_or_desk(&skeleton, Flavor::Skeleton, &mut manifest)?;
    let rules = match &rules {
        Some(p) => {
            manifest.input(p)?;
            RuleSet::load(p)?
        }
        None => default_rules(),
    };
    manifest.model("surface_model", &surface);
    manifest.model("skeleton_model", &skeleton);

    let (session, gt) = generate_session(&config, &surface, &skeleton, &rules)?;
    info!("generated `{}` with outliers {:?}", session.session_id, gt.outlier_frames);
    let truth = truth.unwrap_or_else(|| truth_path(out));
    save_session(&session, out)?;
    jsonio::write(&truth, &gt)?;
    manifest.output(out)?;
    manifest.output(&truth)?;
    manifest.write(out)
}

fn cmd_score(session_path: &Path, fit_path: &Path, guidance_path: &Path, truth_path: &Path, out: &Path) -> Result<()> {
    let session = load_session(session_path)?;
    let (surface_path, surface) = session_model(session_path, &session)?;
    let fit = FitOutput::parse(&jsonio::read_text(fit_path)?)?;
    let guidance: GuidanceFile = jsonio::load(guidance_path)?;
    let gt = GroundTruth::parse(&jsonio::read_text(truth_path)?)?;
    let card = score_run(&surface, &fit, &guidance, &gt, session.num_frames())?;
    jsonio::write(out, &card)?;
    let mut manifest = Manifest::new("score", None);
    manifest.model("surface_model", &surface);
    for p in [session_path, &surface_path, fit_path, guidance_path, truth_path] {
        manifest.input(p)?;
    }
    manifest.output(out)?;
    manifest.write(out)
}

fn cmd_model(flavor: FlavorArg, out: &Path) -> Result<()> {
    let flavor = match flavor {
        FlavorArg::Surface => Flavor::Surface,
        FlavorArg::Skeleton => Flavor::Skeleton,
    };
    let model = desk_model(flavor)?;
    save_model(&model, out)?;
    let mut manifest = Manifest::new("model", None);
    manifest.model("model", &model);
    manifest.output(out)?;
    manifest.write(out)
}
