//! Python bindings: forest queries, interpolation weights and the benchmark runs.

use std::collections::BTreeMap;

use blockmg_core as bmg;
use bmg::harness::{self, RunConfig};
use bmg::{BlockId, Blockforest, Direction, SchemeOrder};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: bmg::Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_direction(s: &str) -> PyResult<Direction> {
    Direction::ALL
        .iter()
        .copied()
        .find(|d| d.to_string().eq_ignore_ascii_case(s))
        .ok_or_else(|| PyValueError::new_err(format!("unknown direction '{s}'")))
}

fn parse_scheme(s: &str) -> PyResult<SchemeOrder> {
    s.parse().map_err(to_py)
}

fn block_id(level: u32, coords: Vec<u64>) -> PyResult<BlockId> {
    if coords.is_empty() || coords.len() > 3 {
        return Err(PyValueError::new_err("coords must have 2 or 3 entries"));
    }
    let mut c = [0; 3];
    c[..coords.len()].copy_from_slice(&coords);
    Ok(BlockId::new(level, c))
}

fn block_tuple(b: &BlockId, dim: usize) -> (u32, Vec<u64>) {
    (b.level, b.coords[..dim].to_vec())
}

/// Loads a configuration from a preset name or a JSON document and applies overrides.
fn load_config(
    preset: Option<&str>,
    config_json: Option<&str>,
    block_size: Option<usize>,
    scheme: Option<&str>,
    ranks: Option<usize>,
    max_cycles: Option<usize>,
) -> PyResult<RunConfig> {
    let mut cfg = match (preset, config_json) {
        (Some(_), Some(_)) => {
            return Err(PyValueError::new_err("pass either preset or config_json, not both"))
        }
        (Some(p), None) => RunConfig::preset(p).map_err(to_py)?,
        (None, Some(j)) => RunConfig::from_json(j).map_err(to_py)?,
        (None, None) => return Err(PyValueError::new_err("preset or config_json is required")),
    };
    if let Some(n) = block_size {
        cfg.block_size = n;
    }
    if let Some(s) = scheme {
        cfg.scheme = parse_scheme(s)?;
    }
    if let Some(r) = ranks {
        cfg.ranks = r;
    }
    if let Some(c) = max_cycles {
        cfg.solver.max_cycles = c;
    }
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// A balanced block forest.
#[pyclass(name = "Forest", frozen)]
struct PyForest {
    inner: Blockforest,
}

#[pymethods]
impl PyForest {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let inner = RunConfig::preset(name).and_then(|c| c.forest()).map_err(to_py)?;
        Ok(PyForest { inner })
    }

    #[staticmethod]
    fn from_json(config_json: &str) -> PyResult<Self> {
        let inner = RunConfig::from_json(config_json)
            .and_then(|c| c.forest())
            .map_err(to_py)?;
        Ok(PyForest { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn leaves(&self) -> Vec<(u32, Vec<u64>)> {
        let d = self.inner.dim();
        self.inner.leaves().iter().map(|b| block_tuple(b, d)).collect()
    }

    fn leaves_per_level(&self) -> BTreeMap<u32, usize> {
        self.inner.leaves_per_level()
    }

    /// Neighbors of a leaf as `(level, coords, case, segment)` tuples.
    fn neighbors(
        &self,
        level: u32,
        coords: Vec<u64>,
        direction: &str,
    ) -> PyResult<Vec<(u32, Vec<u64>, String, usize)>> {
        let d = self.inner.dim();
        let infos = self
            .inner
            .neighbors(&block_id(level, coords)?, parse_direction(direction)?)
            .map_err(to_py)?;
        Ok(infos
            .iter()
            .map(|n| {
                let (l, c) = block_tuple(&n.neighbor, d);
                (l, c, n.case.as_str().to_string(), n.segment_index)
            })
            .collect())
    }

    fn balance_violations(&self) -> usize {
        self.inner.check_balance().len()
    }

    /// Blocks per rank after space-filling-curve partitioning.
    fn rank_counts(&self, n_ranks: usize) -> PyResult<Vec<usize>> {
        Ok(self.inner.assign_ranks(n_ranks).map_err(to_py)?.counts())
    }

    fn __repr__(&self) -> String {
        format!("Forest(dim={}, leaves={})", self.inner.dim(), self.inner.len())
    }
}

#[pyfunction]
fn n_neigh(l_curr: u32, l_neigh: u32, r: usize, d: usize) -> PyResult<usize> {
    bmg::n_neigh(l_curr, l_neigh, r, d).map_err(to_py)
}

#[pyfunction]
fn lagrange_weights(positions: Vec<f64>, x: f64) -> PyResult<Vec<f64>> {
    bmg::interp::lagrange_weights(&positions, x).map_err(to_py)
}

#[pyfunction]
fn f2c_reduce(values: Vec<f64>, dim: usize) -> PyResult<f64> {
    bmg::interp::f2c_reduce(&values, dim).map_err(to_py)
}

/// JSON text of a named configuration, handy as a starting point for edits.
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    Ok(RunConfig::preset(name).map_err(to_py)?.to_json())
}

/// Runs one solve and returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (preset=None, config_json=None, block_size=None, scheme=None, ranks=None, max_cycles=None))]
fn solve(
    py: Python<'_>,
    preset: Option<&str>,
    config_json: Option<&str>,
    block_size: Option<usize>,
    scheme: Option<&str>,
    ranks: Option<usize>,
    max_cycles: Option<usize>,
) -> PyResult<BTreeMap<String, Py<PyAny>>> {
    let cfg = load_config(preset, config_json, block_size, scheme, ranks, max_cycles)?;
    let run = py.detach(|| harness::run_solve(&cfg)).map_err(to_py)?;
    let mut out = BTreeMap::new();
    out.insert("cycles".into(), run.report.cycles.into_pyobject(py)?.into_any().unbind());
    out.insert(
        "initial_residual".into(),
        run.report.initial_residual.into_pyobject(py)?.into_any().unbind(),
    );
    out.insert("history".into(), run.report.history.clone().into_pyobject(py)?.into_any().unbind());
    out.insert(
        "l2_error_volume_weighted".into(),
        run.errors.volume_weighted.into_pyobject(py)?.into_any().unbind(),
    );
    out.insert("l2_error_plain".into(), run.errors.plain.into_pyobject(py)?.into_any().unbind());
    out.insert("report".into(), run.render().into_pyobject(py)?.into_any().unbind());
    Ok(out)
}

/// Grid-convergence sweep; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (sizes, preset=None, config_json=None, schemes=None))]
fn convergence(
    py: Python<'_>,
    sizes: Vec<usize>,
    preset: Option<&str>,
    config_json: Option<&str>,
    schemes: Option<Vec<String>>,
) -> PyResult<String> {
    let cfg = load_config(preset, config_json, None, None, None, None)?;
    let schemes = match schemes {
        Some(list) => list.iter().map(|s| parse_scheme(s)).collect::<PyResult<Vec<_>>>()?,
        None => SchemeOrder::ALL.to_vec(),
    };
    let table = py
        .detach(|| harness::run_convergence(&cfg, &sizes, &schemes))
        .map_err(to_py)?;
    Ok(table.to_csv())
}

/// Per-exchange communication volume on every multigrid level, as CSV.
#[pyfunction]
#[pyo3(signature = (preset=None, config_json=None, block_size=None, scheme=None))]
fn comm_volume(
    preset: Option<&str>,
    config_json: Option<&str>,
    block_size: Option<usize>,
    scheme: Option<&str>,
) -> PyResult<String> {
    let cfg = load_config(preset, config_json, block_size, scheme, None, None)?;
    Ok(harness::comm_volume(&cfg).map_err(to_py)?.to_csv())
}

/// Forest summary as text.
#[pyfunction]
#[pyo3(signature = (preset=None, config_json=None, ranks=None))]
fn check_forest(preset: Option<&str>, config_json: Option<&str>, ranks: Option<usize>) -> PyResult<String> {
    let cfg = load_config(preset, config_json, None, None, ranks, None)?;
    Ok(harness::check_forest(&cfg).map_err(to_py)?.render())
}

#[pymodule]
fn blockmg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyForest>()?;
    m.add_function(wrap_pyfunction!(n_neigh, m)?)?;
    m.add_function(wrap_pyfunction!(lagrange_weights, m)?)?;
    m.add_function(wrap_pyfunction!(f2c_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(comm_volume, m)?)?;
    m.add_function(wrap_pyfunction!(check_forest, m)?)?;
    Ok(())
}
