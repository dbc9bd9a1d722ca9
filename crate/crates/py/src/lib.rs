//! Python bindings: datasets, index structures, queries and the benchmark.

// pyo3's generated wrappers trip this lint on newer toolchains
#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use svx_core::evalkit::oracle_query;
use svx_core::workbench::{
    generate_dataset, load_dataset, run_benchmark, save_dataset, BenchmarkConfig, DatasetSpec,
};
use svx_core::{GeoImage, IndexKind, IndexStructure, Point, Rect, SpatialVisualRangeQuery};

fn err(e: svx_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Geo-tagged images: ids, `(x, y)` locations and feature vectors.
#[pyclass(name = "Dataset", module = "svx")]
#[derive(Clone)]
pub struct PyDataset {
    inner: svx_core::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(
        dim: usize,
        ids: Vec<u64>,
        locations: Vec<(f64, f64)>,
        features: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        if ids.len() != locations.len() || ids.len() != features.len() {
            return Err(PyValueError::new_err(
                "ids, locations and features differ in length",
            ));
        }
        let images = ids
            .into_iter()
            .zip(locations)
            .zip(features)
            .map(|((id, (x, y)), v)| GeoImage::new(id, Point::new(x, y), v))
            .collect();
        Ok(Self {
            inner: svx_core::Dataset::new(dim, images).map_err(err)?,
        })
    }

    /// The clustered synthetic dataset used by the benchmark defaults.
    #[staticmethod]
    #[pyo3(signature = (n=2000, d=32, seed=42))]
    fn standard(n: usize, d: usize, seed: u64) -> PyResult<Self> {
        let inner = generate_dataset(&DatasetSpec::standard(n, d, seed)).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_dataset(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_dataset(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<u64> {
        self.inner.images().iter().map(|i| i.id.0).collect()
    }

    /// `(x, y, features)` for one image.
    fn image(&self, id: u64) -> PyResult<(f64, f64, Vec<f64>)> {
        let img = self
            .inner
            .get(svx_core::ImageId(id))
            .ok_or_else(|| PyKeyError::new_err(id))?;
        Ok((img.location.x, img.location.y, img.features.clone()))
    }

    /// Exact answer ids: `(strict, extended)` where extended widens the
    /// rectangle by `explore_max`.
    #[pyo3(signature = (query, explore_max=0.0))]
    fn truth(&self, query: &Query, explore_max: f64) -> PyResult<(Vec<u64>, Vec<u64>)> {
        let t = oracle_query(&self.inner, &query.inner, explore_max).map_err(err)?;
        Ok((
            t.strict.iter().map(|i| i.0).collect(),
            t.extended.iter().map(|i| i.0).collect(),
        ))
    }
}

/// A spatial-visual range query.
#[pyclass(module = "svx")]
#[derive(Clone)]
pub struct Query {
    inner: SpatialVisualRangeQuery,
}

#[pymethods]
impl Query {
    /// `rect` is `(min_x, min_y, max_x, max_y)`.
    #[new]
    #[pyo3(signature = (rect, vector, sigma, explore_spatial=0.0, explore_visual=0, seed=0))]
    fn new(
        rect: (f64, f64, f64, f64),
        vector: Vec<f64>,
        sigma: f64,
        explore_spatial: f64,
        explore_visual: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let r = Rect::from_coords(rect.0, rect.1, rect.2, rect.3).map_err(err)?;
        let inner = SpatialVisualRangeQuery::new(r, vector, sigma)
            .and_then(|q| q.with_exploration(explore_spatial, explore_visual))
            .map_err(err)?
            .with_seed(seed);
        Ok(Self { inner })
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    fn __repr__(&self) -> String {
        let r = &self.inner.spatial;
        format!(
            "Query(rect=({}, {}, {}, {}), dim={}, sigma={})",
            r.min.x,
            r.min.y,
            r.max.x,
            r.max.y,
            self.inner.dim(),
            self.inner.sigma
        )
    }
}

/// One index structure over a simulated paged disk.
#[pyclass(module = "svx")]
pub struct Index {
    inner: IndexStructure,
}

#[pymethods]
impl Index {
    /// Build `kind` (DI, AugRTree, AugLSH, SFI, VFI, AugSFI, AugVFI) with
    /// the benchmark's default parameters; `config` is optional TOML text
    /// with any benchmark configuration keys.
    #[staticmethod]
    #[pyo3(signature = (kind, dataset, config=None))]
    fn build(kind: &str, dataset: &PyDataset, config: Option<&str>) -> PyResult<Self> {
        let kind: IndexKind = kind.parse().map_err(err)?;
        let cfg = parse_config(config)?;
        let family = cfg.family(&dataset.inner).map_err(err)?;
        let inner = IndexStructure::build(kind, &dataset.inner, &cfg.index_config(), &family)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn open(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: IndexStructure::open(&dir).map_err(err)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Page count per file name.
    fn files(&self) -> Vec<(String, usize)> {
        self.inner
            .store()
            .files()
            .map(|(_, f)| (f.name().to_string(), f.page_count()))
            .collect()
    }

    /// Returns `(ids, stats)`; stats holds page counts per component,
    /// the simulated time and the intermediate result sizes.
    fn query<'py>(
        &self,
        py: Python<'py>,
        query: &Query,
    ) -> PyResult<(Vec<u64>, Bound<'py, PyDict>)> {
        let out = self.inner.query(&query.inner).map_err(err)?;
        let s = &out.stats;
        let stats = PyDict::new_bound(py);
        stats.set_item("pages_rtree", s.pages_rtree)?;
        stats.set_item("pages_lsh", s.pages_lsh)?;
        stats.set_item("pages_data", s.pages_data)?;
        stats.set_item("total_pages", s.total_pages())?;
        stats.set_item("simulated_time", s.simulated_time)?;
        let inter = PyDict::new_bound(py);
        for (k, v) in &s.intermediate {
            inter.set_item(*k, *v)?;
        }
        stats.set_item("intermediate", inter)?;
        Ok((out.ids.iter().map(|i| i.0).collect(), stats))
    }
}

fn parse_config(text: Option<&str>) -> PyResult<BenchmarkConfig> {
    match text {
        Some(t) => toml::from_str(t).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(BenchmarkConfig::default()),
    }
}

/// Run the benchmark described by TOML `config` text; returns the written
/// file paths.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn benchmark(config: Option<&str>) -> PyResult<Vec<PathBuf>> {
    let cfg = parse_config(config)?;
    Ok(run_benchmark(&cfg).map_err(err)?.files)
}

#[pymodule]
fn svx(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<Query>()?;
    m.add_class::<Index>()?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add(
        "KINDS",
        IndexKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
