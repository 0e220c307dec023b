//! Python bindings for `vitguard`.
//!
//! Exposes the bit codec, fault planning, model I/O, inference and
//! campaign drivers. Tensors cross the boundary as flat Python lists;
//! richer results (campaigns, BERZAD, overhead tables) as JSON strings.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use vitguard::bitcodec;
use vitguard::campaign::{self, BerzadTarget, CampaignConfig};
use vitguard::faultinject::{self, BitErrorRate, FaultSpec};
use vitguard::modelio;
use vitguard::overhead;
use vitguard::toy;
use vitguard::vit::{Batch, ViTConfig, ViTModel};
use vitguard::{Error, TensorF32};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn popcount32(w: u32) -> u32 {
    bitcodec::popcount32(w)
}

#[pyfunction]
fn encode_word(w: u32) -> u32 {
    bitcodec::encode_word(w)
}

#[pyfunction]
fn check_word(w: u32) -> bool {
    bitcodec::check_word(w)
}

#[pyfunction]
fn flip_bit(w: u32, pos: u32) -> PyResult<u32> {
    bitcodec::flip_bit(w, pos).map_err(to_py)
}

#[pyfunction]
fn num_faults(units: u64, ber: f64) -> PyResult<u64> {
    Ok(faultinject::num_faults(units, BitErrorRate::new(ber).map_err(to_py)?))
}

#[pyfunction]
#[pyo3(signature = (samples, confidence=0.95, half_width=0.01))]
fn required_iterations(samples: Vec<f64>, confidence: f64, half_width: f64) -> usize {
    vitguard::stats::required_iterations(&samples, confidence, half_width)
}

/// Overhead comparison table (published inputs, default cost model) as JSON.
#[pyfunction]
fn overhead_table() -> PyResult<String> {
    let rows = overhead::overhead_table(&overhead::published_cases(), &overhead::CostModel::default()).map_err(to_py)?;
    serde_json::to_string(&rows).map_err(json_err)
}

/// Image set `[n, c, s, s]` with optional labels.
#[pyclass(name = "Dataset", module = "vitguard_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Batch,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (images, shape, labels=None))]
    fn new(images: Vec<f32>, shape: Vec<usize>, labels: Option<Vec<u32>>) -> PyResult<Self> {
        let t = TensorF32::new("images", shape, images).map_err(to_py)?;
        Ok(Self {
            inner: Batch::new(t, labels).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: modelio::load_dataset(path).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (path, num_classes=None))]
    fn save(&self, path: &str, num_classes: Option<usize>) -> PyResult<()> {
        modelio::save_dataset(&self.inner, num_classes, path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.images.shape.clone()
    }

    #[getter]
    fn images(&self) -> Vec<f32> {
        self.inner.images.data.clone()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<u32>> {
        self.inner.labels.clone()
    }
}

#[pyclass(name = "Model", module = "vitguard_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ViTModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: modelio::load_checkpoint(path).map_err(to_py)?,
        })
    }

    /// Seeded toy model for a preset (`toy-tiny`, `toy-small`, `toy-base`):
    /// random body with a nearest-class-mean head.
    #[staticmethod]
    #[pyo3(signature = (preset="toy-tiny", seed=0))]
    fn random(preset: &str, seed: u64) -> PyResult<Self> {
        let cfg = ViTConfig::preset(preset).ok_or_else(|| PyValueError::new_err(format!("unknown preset {preset}")))?;
        Ok(Self {
            inner: toy::toy_model(cfg, seed).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        modelio::save_checkpoint(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    #[getter]
    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(self.inner.config()).map_err(json_err)
    }

    fn digest(&self) -> PyResult<String> {
        modelio::model_digest(&self.inner).map_err(to_py)
    }

    fn tensor_names(&self) -> Vec<String> {
        self.inner.params().iter().map(|t| t.name.clone()).collect()
    }

    fn tensor(&self, name: &str) -> PyResult<(Vec<usize>, Vec<f32>)> {
        let t = self
            .inner
            .param(name)
            .ok_or_else(|| PyValueError::new_err(format!("no tensor {name}")))?;
        Ok((t.shape.clone(), t.data.clone()))
    }

    /// Flat logits `[n * num_classes]`.
    fn forward(&self, data: &PyDataset) -> PyResult<Vec<f32>> {
        self.inner.forward(&data.inner).map_err(to_py)
    }

    fn predict(&self, data: &PyDataset) -> PyResult<Vec<u32>> {
        self.inner.predict(&data.inner).map_err(to_py)
    }

    /// Parity-encoded copy plus `(lsb_flipped, max_ulp_change)`.
    fn protect(&self) -> PyResult<(PyModel, usize, f64)> {
        let (enc, stats) = bitcodec::encode_params_with_stats(self.inner.params());
        let m = ViTModel::new(self.inner.config().clone(), enc.into_tensors()).map_err(to_py)?;
        Ok((PyModel { inner: m }, stats.lsb_flipped, stats.max_ulp_change))
    }

    fn mismatches(&self) -> usize {
        bitcodec::count_mismatches(self.inner.params())
    }

    /// Zero-masked copy plus the number of masked words.
    fn scrub(&self) -> PyResult<(PyModel, usize)> {
        let mut params = self.inner.params().to_vec();
        let report = bitcodec::scrub_in_place(&mut params);
        let m = ViTModel::new(self.inner.config().clone(), params).map_err(to_py)?;
        Ok((PyModel { inner: m }, report.detected))
    }

    /// Faulted copy plus the fault plan as a JSON line.
    #[pyo3(signature = (ber, seed=0, bit=None))]
    fn inject(&self, ber: f64, seed: u64, bit: Option<u32>) -> PyResult<(PyModel, String)> {
        let ber = BitErrorRate::new(ber).map_err(to_py)?;
        let spec = match bit {
            Some(b) => FaultSpec::fixed_bit(ber, b),
            None => FaultSpec::random(ber),
        };
        let plan = faultinject::plan_faults(&faultinject::layout_of(self.inner.params()), &spec, seed).map_err(to_py)?;
        let params = faultinject::apply_faults(self.inner.params(), &plan).map_err(to_py)?;
        let m = ViTModel::new(self.inner.config().clone(), params).map_err(to_py)?;
        Ok((PyModel { inner: m }, plan.to_json_line().map_err(to_py)?))
    }
}

/// Runs a campaign; `config_json` follows the campaign config schema
/// (missing keys take defaults). Returns the result as JSON.
#[pyfunction]
#[pyo3(signature = (model, data, config_json="{}"))]
fn run_campaign(py: Python<'_>, model: &PyModel, data: &PyDataset, config_json: &str) -> PyResult<String> {
    let cfg: CampaignConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let (m, b) = (model.inner.clone(), data.inner.clone());
    let result = py
        .detach(move || campaign::run_campaign(&m, &b, &cfg))
        .map_err(to_py)?;
    serde_json::to_string(&result).map_err(json_err)
}

/// BERZAD per bit position (`bits=None` means random-bit injection).
#[pyfunction]
#[pyo3(signature = (model, data, config_json="{}", bits=None))]
fn compute_berzad(
    py: Python<'_>,
    model: &PyModel,
    data: &PyDataset,
    config_json: &str,
    bits: Option<Vec<u32>>,
) -> PyResult<String> {
    let cfg: CampaignConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let targets: Vec<BerzadTarget> = match bits {
        Some(b) => b.into_iter().map(BerzadTarget::Bit).collect(),
        None => vec![BerzadTarget::All],
    };
    let (m, b) = (model.inner.clone(), data.inner.clone());
    let est = py
        .detach(move || campaign::compute_berzad(&m, &b, &cfg, &targets))
        .map_err(to_py)?;
    serde_json::to_string(&est).map_err(json_err)
}

/// Synthetic images labelled by the model's own predictions.
#[pyfunction]
#[pyo3(signature = (model, n=64, seed=0))]
fn teacher_dataset(model: &PyModel, n: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: toy::teacher_dataset(&model.inner, n, seed).map_err(to_py)?,
    })
}

#[pymodule]
fn vitguard_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(popcount32, m)?)?;
    m.add_function(wrap_pyfunction!(encode_word, m)?)?;
    m.add_function(wrap_pyfunction!(check_word, m)?)?;
    m.add_function(wrap_pyfunction!(flip_bit, m)?)?;
    m.add_function(wrap_pyfunction!(num_faults, m)?)?;
    m.add_function(wrap_pyfunction!(required_iterations, m)?)?;
    m.add_function(wrap_pyfunction!(overhead_table, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(compute_berzad, m)?)?;
    m.add_function(wrap_pyfunction!(teacher_dataset, m)?)?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDataset>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
