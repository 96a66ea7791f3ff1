//! Python bindings: models, sessions, the fit / guide / eval pipeline,
//! pose metrics and the synthetic session generator.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use thoraguide::body::{self, Flavor, PoseParams};
use thoraguide::consensus::RansacConfig;
use thoraguide::fitting::FitConfig;
use thoraguide::geometry::{self, Vec3};
use thoraguide::guidance::{self, GuidanceFile};
use thoraguide::metrics::{self, ErrorReport};
use thoraguide::pipeline::{self, FitOutput};
use thoraguide::session::{self, CaptureSession};
use thoraguide::synth::{self, GroundTruth, SynthConfig};
use thoraguide::{jsonio, Error};

create_exception!(thoraguide_py, ThoraguideError, PyException, "Raised with (kind, message).");

fn py_err(e: Error) -> PyErr {
    ThoraguideError::new_err((e.kind(), e.to_string()))
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for thoraguide::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_flavor(name: &str) -> PyResult<Flavor> {
    match name {
        "surface" => Ok(Flavor::Surface),
        "skeleton" => Ok(Flavor::Skeleton),
        other => Err(py_err(Error::Schema(format!("unknown flavor `{other}`")))),
    }
}

#[pyclass(name = "RigidTransform", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRigidTransform(geometry::RigidTransform);

#[pymethods]
impl PyRigidTransform {
    #[new]
    #[pyo3(signature = (rotation_wxyz = [1.0, 0.0, 0.0, 0.0], translation_m = [0.0, 0.0, 0.0]))]
    fn new(rotation_wxyz: [f64; 4], translation_m: [f64; 3]) -> PyResult<Self> {
        geometry::RigidTransform::from_wxyz(rotation_wxyz, translation_m).py().map(Self)
    }

    #[getter]
    fn rotation_wxyz(&self) -> [f64; 4] {
        self.0.wxyz()
    }

    #[getter]
    fn translation_m(&self) -> [f64; 3] {
        self.0.translation().into()
    }

    fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let m = self.0.rotation_matrix();
        [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
    }

    fn compose(&self, other: &PyRigidTransform) -> Self {
        Self(self.0.compose(&other.0))
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    fn apply(&self, point: [f64; 3]) -> [f64; 3] {
        self.0.apply(&Vec3::from(point)).into()
    }

    fn __repr__(&self) -> String {
        format!("RigidTransform(rotation_wxyz={:?}, translation_m={:?})", self.0.wxyz(), self.translation_m())
    }
}

#[pyclass(name = "PosedBody", frozen)]
struct PyPosedBody(body::PosedBody);

#[pymethods]
impl PyPosedBody {
    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.0.vertices.iter().map(|v| (*v).into()).collect()
    }

    #[getter]
    fn joints(&self) -> Vec<[f64; 3]> {
        self.0.joints.iter().map(|v| (*v).into()).collect()
    }

    #[getter]
    fn thorax_frame(&self) -> PyRigidTransform {
        PyRigidTransform(self.0.thorax_frame.clone())
    }

    fn landmark(&self, name: &str) -> PyResult<[f64; 3]> {
        self.0.landmark(name).py().map(Into::into)
    }
}

#[pyclass(name = "BodyModel", frozen)]
struct PyBodyModel(body::BodyModel);

#[pymethods]
impl PyBodyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        body::load_model(path).py().map(Self)
    }

    /// Built-in desk model, `"surface"` or `"skeleton"`.
    #[staticmethod]
    fn desk(flavor: &str) -> PyResult<Self> {
        synth::desk::desk_model(parse_flavor(flavor)?).py().map(Self)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        body::save_model(&self.0, path).py()
    }

    #[getter]
    fn version(&self) -> String {
        self.0.version().into()
    }

    #[getter]
    fn flavor(&self) -> &'static str {
        match self.0.flavor() {
            Flavor::Surface => "surface",
            Flavor::Skeleton => "skeleton",
        }
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.0.num_vertices()
    }

    #[getter]
    fn num_betas(&self) -> usize {
        self.0.num_betas()
    }

    #[getter]
    fn pose_dim(&self) -> usize {
        self.0.pose_dim()
    }

    #[getter]
    fn landmarks(&self) -> Vec<String> {
        self.0.landmarks().keys().cloned().collect()
    }

    /// Poses the model; omitted arguments are zero.
    #[pyo3(signature = (beta = None, theta = None, translation = [0.0, 0.0, 0.0]))]
    fn pose(&self, beta: Option<Vec<f64>>, theta: Option<Vec<f64>>, translation: [f64; 3]) -> PyResult<PyPosedBody> {
        let params = PoseParams {
            beta: beta.unwrap_or_else(|| vec![0.0; self.0.num_betas()]),
            theta: theta.unwrap_or_else(|| vec![0.0; self.0.pose_dim()]),
            translation: Vec3::from(translation),
        };
        self.0.pose(&params).py().map(PyPosedBody)
    }
}

#[pyclass(name = "CaptureSession", frozen)]
struct PyCaptureSession(CaptureSession);

#[pymethods]
impl PyCaptureSession {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        session::load_session(path).py().map(Self)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CaptureSession::parse(text).py().map(Self)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        session::save_session(&self.0, path).py()
    }

    #[getter]
    fn session_id(&self) -> String {
        self.0.session_id.clone()
    }

    #[getter]
    fn num_frames(&self) -> usize {
        self.0.num_frames()
    }

    #[getter]
    fn posture(&self) -> &'static str {
        self.0.posture_label.label()
    }
}

#[pyclass(name = "RuleSet", frozen)]
struct PyRuleSet(guidance::RuleSet);

#[pymethods]
impl PyRuleSet {
    #[staticmethod]
    fn default() -> Self {
        Self(guidance::default_rules())
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        guidance::RuleSet::load(path).py().map(Self)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        guidance::RuleSet::parse(text).py().map(Self)
    }

    fn to_json(&self) -> PyResult<String> {
        jsonio::to_string(&self.0).py()
    }

    #[getter]
    fn view_ids(&self) -> Vec<String> {
        self.0.rules.iter().map(|r| r.view_id.clone()).collect()
    }
}

#[pyclass(name = "ProbePose", frozen)]
struct PyProbePose(guidance::ProbePose);

#[pymethods]
impl PyProbePose {
    #[getter]
    fn view_id(&self) -> String {
        self.0.view_id.clone()
    }

    #[getter]
    fn pose(&self) -> PyRigidTransform {
        PyRigidTransform(self.0.pose.clone())
    }

    #[getter]
    fn contact_point_m(&self) -> [f64; 3] {
        self.0.contact_point.into()
    }

    #[getter]
    fn axis(&self) -> [f64; 3] {
        self.0.axis().into()
    }
}

#[pyclass(name = "FitOutput", frozen)]
struct PyFitOutput(FitOutput);

#[pymethods]
impl PyFitOutput {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        FitOutput::parse(text).py().map(Self)
    }

    fn to_json(&self) -> PyResult<String> {
        jsonio::to_string(&self.0).py()
    }

    #[getter]
    fn session_id(&self) -> String {
        self.0.session_id.clone()
    }

    #[getter]
    fn inlier_frames(&self) -> Vec<usize> {
        self.0.consensus.inlier_frames.clone()
    }

    #[getter]
    fn consensus_rms_m(&self) -> f64 {
        self.0.consensus.final_rms_m
    }

    #[getter]
    fn skeleton_rms_m(&self) -> f64 {
        self.0.skeleton.final_rms_m
    }
}

#[pyclass(name = "GuidanceFile", frozen)]
struct PyGuidanceFile(GuidanceFile);

#[pymethods]
impl PyGuidanceFile {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        jsonio::parse_versioned(text).py().map(Self)
    }

    fn to_json(&self) -> PyResult<String> {
        jsonio::to_string(&self.0).py()
    }

    /// `(view_id, status)` for every view.
    fn statuses(&self) -> Vec<(String, String)> {
        self.0.views.iter().map(|v| (v.view_id.clone(), v.status.clone())).collect()
    }

    fn probes(&self) -> Vec<PyProbePose> {
        self.0.probes().into_iter().map(PyProbePose).collect()
    }

    #[getter]
    fn thorax_frame(&self) -> PyRigidTransform {
        PyRigidTransform(self.0.thorax_frame.clone())
    }
}

fn config_or_default<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        Some(text) => jsonio::parse(text).py(),
        None => Ok(T::default()),
    }
}

/// Consensus fit of `session` on `surface`, converted to `skeleton`.
/// Configs are optional JSON objects with the run-config field names.
#[pyfunction]
#[pyo3(signature = (surface, skeleton, session, fit_config = None, ransac_config = None))]
fn fit(
    py: Python<'_>,
    surface: &PyBodyModel,
    skeleton: &PyBodyModel,
    session: &PyCaptureSession,
    fit_config: Option<&str>,
    ransac_config: Option<&str>,
) -> PyResult<PyFitOutput> {
    let fit: FitConfig = config_or_default(fit_config)?;
    let ransac: RansacConfig = config_or_default(ransac_config)?;
    py.detach(|| pipeline::run_fit(&surface.0, &skeleton.0, &session.0, &fit, &ransac))
        .py()
        .map(PyFitOutput)
}

#[pyfunction]
fn guide(skeleton: &PyBodyModel, fit: &PyFitOutput, rules: &PyRuleSet) -> PyResult<PyGuidanceFile> {
    let (body, outcomes) = pipeline::run_guidance(&skeleton.0, &fit.0.skeleton.params(), &rules.0).py()?;
    Ok(PyGuidanceFile(GuidanceFile::new(&skeleton.0, &body, &outcomes)))
}

/// Error report as JSON.
#[pyfunction]
fn evaluate(session: &PyCaptureSession, guidance: &PyGuidanceFile) -> PyResult<String> {
    let report: ErrorReport = pipeline::evaluate(&session.0, &guidance.0).py()?;
    jsonio::to_string(&report).py()
}

/// `(e_pos_mm, e_tilt_deg, e_spin_deg or None)`.
#[pyfunction]
fn pose_error(a: &PyRigidTransform, b: &PyRigidTransform, thorax: &PyRigidTransform) -> (f64, f64, Option<f64>) {
    let e = metrics::transform_error(&a.0, &b.0, &thorax.0);
    (e.e_pos_mm, e.e_tilt_deg, e.e_spin_deg)
}

/// Synthetic session and its ground truth (as JSON) from a synth config.
#[pyfunction]
#[pyo3(signature = (surface, skeleton, rules, config = None))]
fn synthesize(surface: &PyBodyModel, skeleton: &PyBodyModel, rules: &PyRuleSet, config: Option<&str>) -> PyResult<(PyCaptureSession, String)> {
    let config = match config {
        Some(text) => SynthConfig::parse(text).py()?,
        None => SynthConfig::default(),
    };
    let (session, gt) = synth::generate_session(&config, &surface.0, &skeleton.0, &rules.0).py()?;
    Ok((PyCaptureSession(session), jsonio::to_string(&gt).py()?))
}

/// Scorecard JSON for fit and guidance outputs against ground-truth JSON.
#[pyfunction]
fn score(surface: &PyBodyModel, session: &PyCaptureSession, fit: &PyFitOutput, guidance: &PyGuidanceFile, truth: &str) -> PyResult<String> {
    let gt = GroundTruth::parse(truth).py()?;
    let card = synth::score_run(&surface.0, &fit.0, &guidance.0, &gt, session.0.num_frames()).py()?;
    jsonio::to_string(&card).py()
}

/// Runs the command-line interface in-process and returns its exit status.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    thoraguide::cli::run(std::iter::once("thoraguide".to_string()).chain(args))
}

#[pymodule]
fn thoraguide_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ThoraguideError", m.py().get_type::<ThoraguideError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRigidTransform>()?;
    m.add_class::<PyPosedBody>()?;
    m.add_class::<PyBodyModel>()?;
    m.add_class::<PyCaptureSession>()?;
    m.add_class::<PyRuleSet>()?;
    m.add_class::<PyProbePose>()?;
    m.add_class::<PyFitOutput>()?;
    m.add_class::<PyGuidanceFile>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(guide, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(pose_error, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
