//! Python bindings for `burstforge`.
//!
//! Tensors cross the boundary as `(shape, flat data)`; `Tensor.to_bytes` and
//! `Tensor.from_bytes` give a copy-once path to and from `numpy.frombuffer`.

use std::path::PathBuf;

use burstforge::align::{BlockMatching, FlowProvider, ZeroFlow};
use burstforge::metrics::{self, ChartGeometry, Extrema};
use burstforge::simulate::{self, SyntheticBurstSpec};
use burstforge::{io, selftest, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

create_exception!(pyburstforge, FormatError, PyValueError, "A file failed to parse.");
create_exception!(pyburstforge, CheckpointError, PyValueError, "A checkpoint does not match the model.");
create_exception!(pyburstforge, NonFiniteError, PyArithmeticError, "A kernel produced NaN or infinity.");

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Shape { .. } | Error::InvalidArgument { .. } => PyValueError::new_err(msg),
        Error::NonFinite { .. } => NonFiniteError::new_err(msg),
        Error::Format { .. } | Error::Json { .. } => FormatError::new_err(msg),
        Error::Checkpoint { .. } => CheckpointError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for burstforge::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// A dense row-major f32 array.
#[pyclass(name = "Tensor", module = "pyburstforge", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTensor(burstforge::Tensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f32>) -> PyResult<Self> {
        burstforge::Tensor::new(shape, data).py_err().map(Self)
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> Self {
        Self(burstforge::Tensor::zeros(shape))
    }

    /// Builds a tensor from little-endian f32 bytes.
    #[staticmethod]
    fn from_bytes(shape: Vec<usize>, data: &[u8]) -> PyResult<Self> {
        if !data.len().is_multiple_of(4) {
            return Err(PyValueError::new_err("byte length is not a multiple of 4"));
        }
        let values = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(shape, values)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    fn numel(&self) -> usize {
        self.0.numel()
    }

    /// Flat copy of the data.
    fn tolist(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let bytes: Vec<u8> = self.0.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        PyBytes::new(py, &bytes)
    }

    fn max_abs_diff(&self, other: &PyTensor) -> PyResult<f32> {
        self.0.max_abs_diff(&other.0).py_err()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn __len__(&self) -> usize {
        self.0.shape().first().copied().unwrap_or(1)
    }

    fn __eq__(&self, other: &PyTensor) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.0.shape())
    }
}

/// Named weights plus the model configuration.
#[pyclass(name = "Checkpoint", module = "pyburstforge", frozen)]
struct PyCheckpoint(burstforge::Checkpoint);

fn config_for(n_frames: usize) -> burstforge::ModelConfig {
    burstforge::ModelConfig {
        n_frames,
        ..Default::default()
    }
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    #[pyo3(signature = (n_frames = 4, seed = 0))]
    fn random(n_frames: usize, seed: u64) -> PyResult<Self> {
        burstforge::Checkpoint::random(&config_for(n_frames), seed).py_err().map(Self)
    }

    /// Weights under which the network returns a bilinear upsampling of the
    /// reference frame.
    #[staticmethod]
    #[pyo3(signature = (n_frames = 4))]
    fn identity(n_frames: usize) -> PyResult<Self> {
        burstforge::Checkpoint::identity(&config_for(n_frames)).py_err().map(Self)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::load_checkpoint(path).py_err().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_checkpoint(path, &self.0).py_err()
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.0.config.n_frames
    }

    fn names(&self) -> Vec<String> {
        self.0.tensors.keys().cloned().collect()
    }

    fn tensor(&self, name: &str) -> PyResult<PyTensor> {
        self.0
            .tensors
            .get(name)
            .cloned()
            .map(PyTensor)
            .ok_or_else(|| CheckpointError::new_err(format!("no tensor `{name}`")))
    }

    /// Model configuration as a JSON string.
    fn config_json(&self) -> String {
        serde_json::to_string(&self.0.config).expect("config serializes")
    }
}

#[pyclass(name = "Model", module = "pyburstforge", frozen)]
struct PyModel(burstforge::Model);

#[pymethods]
impl PyModel {
    #[new]
    fn new(checkpoint: &PyCheckpoint) -> PyResult<Self> {
        burstforge::Model::load(&checkpoint.0).py_err().map(Self)
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.0.config().n_frames
    }

    /// Reconstructs `[3, H, W]` from packed frames `[N, 4, h, w]`.
    /// `flow` is `"blockmatch"` or `"zero"`.
    #[pyo3(signature = (burst, flow = "blockmatch"))]
    fn forward(&self, py: Python<'_>, burst: &PyTensor, flow: &str) -> PyResult<PyTensor> {
        let provider: Box<dyn FlowProvider> = match flow {
            "blockmatch" => Box::new(BlockMatching::default()),
            "zero" => Box::new(ZeroFlow),
            other => return Err(PyValueError::new_err(format!("unknown flow provider `{other}`"))),
        };
        let frames = burst.0.clone();
        py.detach(|| self.0.forward(&frames, provider.as_ref()))
            .py_err()
            .map(PyTensor)
    }
}

/// Simulates a packed RGGB burst from an HR `[3, H, W]` image.
/// Returns `(frames, transforms)` with transforms as `(dx, dy, theta_deg)`.
#[pyfunction]
#[pyo3(signature = (hr, n_frames = 14, seed = 0, max_shift_px = 2.0, max_rot_deg = 1.0, downscale = 4, read_noise = 0.01, shot_noise = 0.02))]
#[allow(clippy::too_many_arguments)]
fn generate_burst(
    py: Python<'_>,
    hr: &PyTensor,
    n_frames: usize,
    seed: u64,
    max_shift_px: f64,
    max_rot_deg: f64,
    downscale: usize,
    read_noise: f64,
    shot_noise: f64,
) -> PyResult<(PyTensor, Vec<(f64, f64, f64)>)> {
    let spec = SyntheticBurstSpec {
        n_frames,
        max_shift_px,
        max_rot_deg,
        downscale,
        read_noise,
        shot_noise,
        seed,
    };
    let hr = hr.0.clone();
    let stack = py.detach(|| simulate::generate_burst(&hr, &spec)).py_err()?;
    let transforms = stack.transforms.iter().map(|t| (t.dx, t.dy, t.theta_deg)).collect();
    Ok((PyTensor(stack.frames), transforms))
}

/// A smooth random `[channels, h, w]` test image in `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (channels, h, w, cycles = 3.0, seed = 0))]
fn smooth_image(channels: usize, h: usize, w: usize, cycles: f64, seed: u64) -> PyTensor {
    PyTensor(simulate::smooth_image(channels, h, w, cycles, seed))
}

/// Bilinear demosaic and upsampling of one packed `[4, h, w]` frame.
#[pyfunction]
#[pyo3(signature = (packed, factor = 4))]
fn baseline_upsample(packed: &PyTensor, factor: usize) -> PyResult<PyTensor> {
    simulate::baseline_upsample(&packed.0, factor).py_err().map(PyTensor)
}

#[pyfunction]
#[pyo3(signature = (a, b, peak = 1.0))]
fn psnr(a: &PyTensor, b: &PyTensor, peak: f64) -> PyResult<f64> {
    metrics::psnr(&a.0, &b.0, peak).py_err()
}

#[pyfunction]
fn ssim(a: &PyTensor, b: &PyTensor) -> PyResult<f64> {
    metrics::ssim(&a.0, &b.0).py_err()
}

#[pyfunction]
#[pyo3(signature = (image, start, end, period, raw = false))]
fn line_pair_contrast(image: &PyTensor, start: (f64, f64), end: (f64, f64), period: f64, raw: bool) -> PyResult<f64> {
    let mode = if raw { Extrema::Raw } else { Extrema::Robust };
    metrics::line_pair_contrast(&image.0, start, end, period, mode).py_err()
}

/// Converts a chart reading to LP/mm with the default sensor geometry.
#[pyfunction]
fn chart_reading_to_lpmm(reading: f64) -> PyResult<f64> {
    metrics::chart_reading_to_lpmm(reading, &ChartGeometry::default()).py_err()
}

#[pyfunction]
fn read_image(path: PathBuf) -> PyResult<PyTensor> {
    io::read_image(path).py_err().map(PyTensor)
}

#[pyfunction]
#[pyo3(signature = (path, image, bits = 8))]
fn write_image(path: PathBuf, image: &PyTensor, bits: u8) -> PyResult<()> {
    io::write_image(path, &image.0, bits).py_err()
}

#[pyfunction]
fn read_tensor(path: PathBuf) -> PyResult<PyTensor> {
    io::read_tensor(path).py_err().map(PyTensor)
}

#[pyfunction]
fn write_tensor(path: PathBuf, tensor: &PyTensor) -> PyResult<()> {
    io::write_tensor(path, &tensor.0).py_err()
}

/// Runs the kernel, degeneracy and module checks. Returns one dict per
/// check.
#[pyfunction]
#[pyo3(signature = (instances = 20, seed = 0, perturb = None))]
fn run_selftest<'py>(py: Python<'py>, instances: usize, seed: u64, perturb: Option<String>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let opts = selftest::SuiteOptions { instances, seed, perturb };
    let checks = py.detach(|| selftest::run_all(&opts)).py_err()?;
    checks
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("group", c.group)?;
            d.set_item("name", c.name)?;
            d.set_item("instances", c.instances)?;
            d.set_item("max_err", c.max_err)?;
            d.set_item("tol", c.tol)?;
            d.set_item("passed", c.passed)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pyburstforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("FormatError", py.get_type::<FormatError>())?;
    m.add("CheckpointError", py.get_type::<CheckpointError>())?;
    m.add("NonFiniteError", py.get_type::<NonFiniteError>())?;
    m.add_class::<PyTensor>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_burst, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_image, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_upsample, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(line_pair_contrast, m)?)?;
    m.add_function(wrap_pyfunction!(chart_reading_to_lpmm, m)?)?;
    m.add_function(wrap_pyfunction!(read_image, m)?)?;
    m.add_function(wrap_pyfunction!(write_image, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}
