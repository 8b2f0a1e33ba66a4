//! Python access to simulation, transforms, datasets and evaluation.
//!
//! Tensors cross the boundary as nested lists so the module has no numpy
//! dependency; wrap them with `numpy.asarray` when needed.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use wiom_core::dataset::{self, Dataset, SplitKind};
use wiom_core::eval::{self, ErrorReport, LEVELS};
use wiom_core::pipeline::{self, Checkpoint, EvalOn};
use wiom_core::scenario::Scenario;
use wiom_core::wiometrics::WiometricKind;

fn to_py(e: wiom_core::Error) -> PyErr {
    use wiom_core::Error::*;
    match e {
        Config(_) | Domain(_) | Shape(_) | Empty(_) => PyValueError::new_err(e.to_string()),
        Load(_) | Io { .. } | Csv(_) => PyIOError::new_err(e.to_string()),
        Diverged { .. } => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<WiometricKind> {
    kind.parse().map_err(to_py)
}

fn split_kind(split: &str, test_fraction: f64, seed: u64, held_out_lap: usize) -> PyResult<SplitKind> {
    match split {
        "leu" => Ok(SplitKind::Leu {
            test_fraction,
            seed,
            stratify_by_lap: false,
        }),
        "heu" => Ok(SplitKind::Heu { held_out_lap }),
        other => Err(PyValueError::new_err(format!("unknown split {other:?}; expected leu or heu"))),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &ErrorReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("network", &r.meta.network)?;
    d.set_item("split", &r.meta.split)?;
    d.set_item("samples", r.len())?;
    for l in LEVELS {
        d.set_item(format!("p{l}_position_m"), r.position(l))?;
        d.set_item(format!("p{l}_heading_deg"), r.heading(l))?;
    }
    d.set_item("position_errors", r.position_errors.clone())?;
    d.set_item("heading_errors", r.heading_errors.clone())?;
    Ok(d)
}

/// Simulates the desk-scale drive into `out`; returns the snapshot count per station.
#[pyfunction]
#[pyo3(signature = (out, laps=None, speed=None, seed=None))]
fn simulate_desk(py: Python<'_>, out: PathBuf, laps: Option<usize>, speed: Option<f64>, seed: Option<u64>) -> PyResult<usize> {
    let mut s = Scenario::desk();
    if let Some(l) = laps {
        s.route.laps = l;
        s.route.ccw_laps = s.route.ccw_laps.min(l);
    }
    if let Some(v) = speed {
        s.route.speed = v;
    }
    if let Some(v) = seed {
        s.route.seed = v;
        s.scene.seed = v;
    }
    py.detach(|| {
        let ds = wiom_core::sim::simulate(&s.route, &s.scene, &s.grid, &s.geometry)?;
        ds.save(&out)?;
        Ok(ds.len())
    })
    .map_err(to_py)
}

/// Transforms the CSI dataset in `input` with desk-scale parameters.
#[pyfunction]
fn transform(py: Python<'_>, input: PathBuf, kind: &str, out: PathBuf) -> PyResult<()> {
    let kind = parse_kind(kind)?;
    py.detach(|| {
        let ds = Dataset::load(&input)?;
        let params = Scenario::desk().transform(kind);
        pipeline::transform_dataset(&ds, &params)?.save(&out)
    })
    .map_err(to_py)
}

/// Smallest absolute angle between two headings in degrees, in `[0, 180]`.
#[pyfunction]
fn heading_difference(a: f64, b: f64) -> f64 {
    eval::heading_difference(a, b)
}

/// Nearest-rank percentile of `errors` at `level` in `(0, 100]`.
#[pyfunction]
fn percentile(errors: Vec<f64>, level: f64) -> PyResult<f64> {
    eval::percentile(&errors, level).map_err(to_py)
}

/// k-NN baseline on a wiometric dataset; returns percentiles and per-sample errors.
#[pyfunction]
#[pyo3(signature = (dataset, k=5, split="leu", test_fraction=0.25, seed=0, held_out_lap=3, stations=vec![1]))]
#[allow(clippy::too_many_arguments)]
fn knn_evaluate<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    k: usize,
    split: &str,
    test_fraction: f64,
    seed: u64,
    held_out_lap: usize,
    stations: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = split_kind(split, test_fraction, seed, held_out_lap)?;
    let report = py
        .detach(|| {
            let ds = Dataset::load(&dataset)?;
            let split = dataset::split(&ds, kind)?;
            pipeline::evaluate_knn(&ds, &split, &stations, k, EvalOn::Test)
        })
        .map_err(to_py)?;
    report_dict(py, &report)
}

/// A dataset directory loaded into memory.
#[pyclass(name = "Dataset", module = "wiometrics", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(py: Python<'_>, path: PathBuf) -> PyResult<Self> {
        let inner = py.detach(|| Dataset::load(&path)).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(kind={}, records={}, stations={})",
            self.kind().unwrap_or_else(|| "csi".into()),
            self.inner.len(),
            self.inner.stations.len()
        )
    }

    /// Wiometric name, or None for raw CSI.
    #[getter]
    fn kind(&self) -> Option<String> {
        self.inner.kind().map(|k| k.name().to_string())
    }

    #[getter]
    fn station_ids(&self) -> Vec<String> {
        self.inner.stations.iter().map(|s| s.id.clone()).collect()
    }

    #[getter]
    fn shape(&self) -> PyResult<(usize, usize)> {
        pipeline::item_shape(&self.inner).map_err(to_py)
    }

    /// `(x_e, x_n, gamma)` per record.
    fn poses(&self) -> Vec<(f64, f64, f64)> {
        self.inner.records.iter().map(|r| (r.pose.x_e, r.pose.x_n, r.pose.gamma)).collect()
    }

    fn laps(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.lap_index).collect()
    }

    /// One record's tensor as rows; complex CSI comes back as Python complex numbers.
    fn tensor<'py>(&self, py: Python<'py>, station: usize, index: usize) -> PyResult<Bound<'py, PyAny>> {
        let st = self
            .inner
            .stations
            .get(station)
            .ok_or_else(|| PyValueError::new_err(format!("station {station} out of range")))?;
        if index >= st.tensors.len() {
            return Err(PyValueError::new_err(format!("record {index} out of range")));
        }
        if self.inner.kind().is_some() {
            let a = st.tensors.real(index).map_err(to_py)?;
            let rows: Vec<Vec<f64>> = a.outer_iter().map(|r| r.to_vec()).collect();
            rows.into_pyobject(py).map(|o| o.into_any())
        } else {
            let a = st.tensors.complex(index).map_err(to_py)?;
            let rows: Vec<Vec<num_complex::Complex64>> = a.outer_iter().map(|r| r.to_vec()).collect();
            rows.into_pyobject(py).map(|o| o.into_any())
        }
    }
}

/// A trained network loaded from a checkpoint directory.
#[pyclass(name = "Checkpoint", module = "wiometrics", frozen)]
struct PyCheckpoint {
    inner: Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(py: Python<'_>, path: PathBuf) -> PyResult<Self> {
        let inner = py.detach(|| Checkpoint::load(&path)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.model.network.num_params()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.name().to_string()
    }

    /// `(train_loss, val_loss)` per epoch.
    fn history(&self) -> Vec<(f64, Option<f64>)> {
        self.inner.model.history.iter().map(|h| (h.train_loss, h.val_loss)).collect()
    }

    /// Scores the checkpoint on the held-out side of its own split.
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        let report = py
            .detach(|| {
                let split = dataset::split(&dataset.inner, self.inner.split)?;
                pipeline::evaluate_checkpoint(&self.inner, &dataset.inner, &split, EvalOn::Test)
            })
            .map_err(to_py)?;
        report_dict(py, &report)
    }
}

#[pymodule]
fn wiometrics(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("KINDS", WiometricKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())?;
    m.add_function(wrap_pyfunction!(simulate_desk, m)?)?;
    m.add_function(wrap_pyfunction!(transform, m)?)?;
    m.add_function(wrap_pyfunction!(heading_difference, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(knn_evaluate, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyCheckpoint>()?;
    Ok(())
}
