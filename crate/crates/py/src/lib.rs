//! Python bindings. Types, roots and ranks are 1-based as in the file formats.

use mgw::forest::{height_process, lukasiewicz, type_counts, upsilon};
use mgw::reduce::{exact_size_distribution, height_tail, project_monotype};
use mgw::sampler::{sample_forest, ConditionedSampler, OffspringSampler, RngStream, SampleOptions, DEFAULT_VERTEX_CAP};
use mgw::snake::{attach_spatial, big_sigma_squared};
use mgw::spectra::fixtures;
use mgw::verify::{Experiment, ExperimentConfig};
use mgw::{OffspringModel, PlanarForest, SpectralData};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: mgw::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn zero_based(xs: &[usize], what: &str) -> PyResult<Vec<usize>> {
    xs.iter()
        .map(|&x| x.checked_sub(1).ok_or_else(|| PyValueError::new_err(format!("{what} are 1-based"))))
        .collect()
}

fn one(x: usize, what: &str) -> PyResult<usize> {
    Ok(zero_based(&[x], what)?[0])
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// Ordered offspring distribution.
#[pyclass(frozen, name = "Model", module = "mgw_py")]
struct Model {
    inner: OffspringModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model {
            inner: OffspringModel::from_json_str(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: OffspringModel::from_json_file(&path).map_err(err)?,
        })
    }

    /// One of `mono1`, `alt2`, `alt2_spatial`, `three3`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let inner = match name {
            "mono1" => fixtures::mono1(),
            "alt2" => fixtures::alt2(),
            "alt2_spatial" => fixtures::alt2_spatial(),
            "three3" => fixtures::three3(),
            _ => return Err(PyKeyError::new_err(name.to_string())),
        };
        Ok(Model { inner })
    }

    #[getter]
    fn num_types(&self) -> usize {
        self.inner.num_types()
    }

    fn sha256(&self) -> String {
        self.inner.hash()
    }

    fn to_json(&self) -> String {
        self.inner.to_json_value().to_string()
    }

    /// Mean matrix, Perron data, sigma and criticality as a dict.
    fn analyze<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let spec = SpectralData::compute(&self.inner).map_err(err)?;
        let mut v = serde_json::to_value(&spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
        if !self.inner.spatial_laws().is_empty() {
            v["Sigma_squared"] = big_sigma_squared(&self.inner, &spec).into();
        }
        json_to_py(py, &v)
    }

    fn __repr__(&self) -> String {
        format!("Model(num_types={}, sha256={})", self.inner.num_types(), &self.inner.hash()[..12])
    }
}

/// Planar forest in depth-first order.
#[pyclass(frozen, name = "Forest", module = "mgw_py")]
struct Forest {
    inner: PlanarForest,
}

#[pymethods]
impl Forest {
    #[staticmethod]
    #[pyo3(signature = (parents, types, num_types))]
    fn from_parents(parents: Vec<Option<usize>>, types: Vec<usize>, num_types: usize) -> PyResult<Self> {
        let types = zero_based(&types, "types")?;
        Ok(Forest {
            inner: PlanarForest::from_parents(&parents, &types, num_types).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    fn parents(&self) -> Vec<Option<usize>> {
        self.inner.parents()
    }

    fn types(&self) -> Vec<usize> {
        self.inner.types().map(|t| t + 1).collect()
    }

    fn height(&self) -> Vec<u32> {
        height_process(&self.inner)
    }

    fn lukasiewicz(&self) -> Vec<i64> {
        lukasiewicz(&self.inner)
    }

    fn upsilon(&self) -> Vec<u32> {
        upsilon(&self.inner)
    }

    /// `Lambda_i` for every type, inclusive of the current vertex.
    fn type_counts(&self) -> Vec<Vec<u32>> {
        type_counts(&self.inner)
    }

    /// Contraction onto the type-`ty` vertices; returns the reduced forest and
    /// the original index of each of its vertices.
    fn project(&self, ty: usize) -> PyResult<(Forest, Vec<usize>)> {
        let i = one(ty, "types")?;
        if i >= self.inner.num_types() {
            return Err(PyValueError::new_err(format!("type {ty} outside 1..={}", self.inner.num_types())));
        }
        let p = project_monotype(&self.inner, i);
        Ok((Forest { inner: p.reduced }, p.origin))
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf, true).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Forest(len={}, components={})", self.inner.len(), self.inner.num_components())
    }
}

/// Forest with the given root types on stream `stream` of `seed`.
#[pyfunction]
#[pyo3(signature = (model, roots, seed = 0, stream = 0, cap = DEFAULT_VERTEX_CAP))]
fn sample(py: Python<'_>, model: &Model, roots: Vec<usize>, seed: u64, stream: u64, cap: usize) -> PyResult<Forest> {
    let roots = zero_based(&roots, "roots")?;
    let inner = py
        .detach(|| {
            let s = OffspringSampler::new(&model.inner);
            sample_forest(&s, &roots, &mut RngStream::new(seed, stream).rng(), SampleOptions::with_cap(cap))
        })
        .map_err(err)?;
    Ok(Forest { inner })
}

/// Tree from a type-`root` ancestor conditioned on exactly `n` vertices of
/// type `count_type`; returns the tree and the number of attempts.
#[pyfunction]
#[pyo3(signature = (model, root, count_type, n, seed = 0, stream = 0, max_attempts = 100_000_000, cap = DEFAULT_VERTEX_CAP))]
#[allow(clippy::too_many_arguments)]
fn sample_conditioned(
    py: Python<'_>,
    model: &Model,
    root: usize,
    count_type: usize,
    n: usize,
    seed: u64,
    stream: u64,
    max_attempts: u64,
    cap: usize,
) -> PyResult<(Forest, u64)> {
    let (i, j) = (one(root, "types")?, one(count_type, "types")?);
    let c = py
        .detach(|| {
            let cs = ConditionedSampler::new(&model.inner, i, j, n)?;
            cs.sample(&mut RngStream::new(seed, stream).rng(), max_attempts, cap)
        })
        .map_err(err)?;
    Ok((Forest { inner: c.tree }, c.attempts))
}

/// Forest with displacements; returns the forest, the displacements `y` and
/// the snake positions `S`.
#[pyfunction]
#[pyo3(signature = (model, roots, seed = 0, stream = 0, cap = DEFAULT_VERTEX_CAP, strict = false))]
fn snake(
    py: Python<'_>,
    model: &Model,
    roots: Vec<usize>,
    seed: u64,
    stream: u64,
    cap: usize,
    strict: bool,
) -> PyResult<(Forest, Vec<f64>, Vec<f64>)> {
    let roots = zero_based(&roots, "roots")?;
    let (f, sf) = py
        .detach(|| {
            let s = OffspringSampler::new(&model.inner);
            let mut rng = RngStream::new(seed, stream).rng();
            let f = sample_forest(&s, &roots, &mut rng, SampleOptions::with_cap(cap))?;
            let sf = attach_spatial(&f, &model.inner, &mut rng, strict)?;
            Ok::<_, mgw::Error>((f, sf))
        })
        .map_err(err)?;
    Ok((Forest { inner: f }, sf.y, sf.s))
}

/// `P(#T^(count_type) = n)` for `n = 0..=n_max` from a type-`root` ancestor.
#[pyfunction]
fn size_distribution(model: &Model, root: usize, count_type: usize, n_max: usize) -> PyResult<Vec<f64>> {
    let (i, j) = (one(root, "types")?, one(count_type, "types")?);
    Ok(exact_size_distribution::<f64>(&model.inner, i, j, n_max).map_err(err)?.q)
}

/// `P(ht >= n)` for `n = 0..=n_max` from a type-`root` ancestor.
#[pyfunction]
fn height_tail_probabilities(model: &Model, root: usize, n_max: usize) -> PyResult<Vec<f64>> {
    let i = one(root, "types")?;
    if i >= model.inner.num_types() {
        return Err(PyValueError::new_err(format!("type {root} outside 1..={}", model.inner.num_types())));
    }
    Ok(height_tail(&model.inner, i, n_max))
}

fn config_from_kwargs(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let Some(kw) = kwargs else { return Ok(cfg) };
    for (key, value) in kw.iter() {
        let key: String = key.extract()?;
        match key.as_str() {
            "roots" => cfg.roots = zero_based(&value.extract::<Vec<usize>>()?, "roots")?,
            "n" => cfg.n = value.extract()?,
            "reps" => cfg.reps = value.extract()?,
            "seed" => cfg.seed = value.extract()?,
            "s" => cfg.s = value.extract()?,
            "s2" => cfg.s2 = value.extract()?,
            "type" => cfg.i = one(value.extract()?, "types")?,
            "count_type" => cfg.j = one(value.extract()?, "types")?,
            "word" => cfg.word = zero_based(&value.extract::<Vec<usize>>()?, "word letters")?,
            "rank" => cfg.rank = one(value.extract()?, "ranks")?,
            "h" => cfg.h = value.extract()?,
            "gamma" => cfg.gamma = value.extract()?,
            "eta" => cfg.eta = value.extract()?,
            "cap" => cfg.vertex_cap = value.extract()?,
            "max_attempts" => cfg.max_attempts = value.extract()?,
            "strict" => cfg.strict = value.extract()?,
            "parallel" => cfg.parallel = value.extract()?,
            "reference_steps" => cfg.reference_steps = value.extract()?,
            "reference_reps" => cfg.reference_reps = value.extract()?,
            _ => return Err(PyKeyError::new_err(format!("unknown option {key}"))),
        }
    }
    Ok(cfg)
}

/// Runs a named experiment. Returns `{"report": ..., "fingerprint": ...}`.
#[pyfunction]
#[pyo3(signature = (experiment, model, **kwargs))]
fn verify<'py>(
    py: Python<'py>,
    experiment: &str,
    model: &Model,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let exp: Experiment = experiment.parse().map_err(err)?;
    let cfg = config_from_kwargs(kwargs)?;
    let report = py.detach(|| exp.run(&model.inner, &cfg)).map_err(err)?;
    let v = serde_json::json!({"report": report, "fingerprint": report.fingerprint()});
    json_to_py(py, &v)
}

/// Experiment names accepted by `verify`.
#[pyfunction]
fn experiments() -> Vec<&'static str> {
    Experiment::ALL.iter().map(|e| e.name()).collect()
}

#[pymodule]
fn mgw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_class::<Forest>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(sample_conditioned, m)?)?;
    m.add_function(wrap_pyfunction!(snake, m)?)?;
    m.add_function(wrap_pyfunction!(size_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(height_tail_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    Ok(())
}
