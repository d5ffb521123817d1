//! Python bindings: qubit channels, combiners, tree decoders and density evolution.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pmbpqm::channel::{from_flip_family, helstrom_qubit, holevo, QubitBSCQ};
use pmbpqm::combine::{bit_qubit, check_qubit, BranchDistribution};
use pmbpqm::de::{de_threshold, holevo_q_bound, DEConfig};
use pmbpqm::decoder::{
    collective_helstrom, locally_greedy, pmbpqm_exact, pmbpqm_mc, DecodeResult, TreeFactorGraph,
};
use pmbpqm::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Contract(_) | Error::Dimension(_) | Error::Graph(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Qubit channel `(1-q)|±θ><±θ| + q I/2`.
#[pyclass(name = "QubitChannel", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct PyQubit(QubitBSCQ);

#[pymethods]
impl PyQubit {
    #[new]
    fn new(theta: f64, q: f64) -> PyResult<Self> {
        QubitBSCQ::new(theta, q).map(Self).map_err(py_err)
    }

    /// Pure states with bit-flip probability `p`.
    #[staticmethod]
    fn flip_family(theta: f64, p: f64) -> PyResult<Self> {
        from_flip_family(theta, p).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn bsc(p: f64) -> PyResult<Self> {
        QubitBSCQ::bsc(p).map(Self).map_err(py_err)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.q
    }

    fn helstrom(&self) -> f64 {
        helstrom_qubit(&self.0)
    }

    fn holevo(&self) -> f64 {
        holevo(&self.0)
    }

    /// Real part of `W(z)` as nested lists.
    fn density(&self, z: u8) -> Vec<Vec<f64>> {
        let m = self.0.density(z);
        (0..2)
            .map(|i| (0..2).map(|j| m[(i, j)].re).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("QubitChannel(theta={}, q={})", self.0.theta, self.0.q)
    }
}

fn branches(d: BranchDistribution) -> Vec<(f64, PyQubit)> {
    d.iter().map(|b| (b.prob, PyQubit(b.channel))).collect()
}

/// Check-node combination followed by the paired measurement: `[(prob, channel)]`.
#[pyfunction]
fn check_combine(a: PyQubit, b: PyQubit) -> Vec<(f64, PyQubit)> {
    branches(check_qubit(&a.0, &b.0))
}

/// Bit-node combination followed by the paired measurement: `[(prob, channel)]`.
#[pyfunction]
fn bit_combine(a: PyQubit, b: PyQubit) -> Vec<(f64, PyQubit)> {
    branches(bit_qubit(&a.0, &b.0))
}

#[pyclass(name = "FactorGraph", frozen)]
struct PyGraph(TreeFactorGraph);

fn success(r: pmbpqm::Result<DecodeResult>) -> PyResult<f64> {
    r.map(|r| r.success_prob).map_err(py_err)
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        TreeFactorGraph::from_json(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn five_qubit(w: PyQubit) -> Self {
        Self(TreeFactorGraph::five_qubit(w.0))
    }

    #[staticmethod]
    fn seven_qubit(w: PyQubit) -> Self {
        Self(TreeFactorGraph::seven_qubit(w.0))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn observed(&self) -> Vec<usize> {
        self.0.observed()
    }

    /// Exact PMBPQM success probability.
    fn pmbpqm(&self) -> PyResult<f64> {
        success(pmbpqm_exact(&self.0))
    }

    #[pyo3(signature = (trials, seed=0))]
    fn pmbpqm_mc(&self, py: Python<'_>, trials: u64, seed: u64) -> PyResult<f64> {
        success(py.detach(|| pmbpqm_mc(&self.0, trials, seed)))
    }

    fn helstrom(&self) -> PyResult<f64> {
        success(collective_helstrom(&self.0))
    }

    fn locally_greedy(&self) -> PyResult<f64> {
        success(locally_greedy(&self.0))
    }
}

/// Density-evolution threshold `q*` at angle `theta`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (theta, dv=3, dc=6, m=1000, n=50, bisect_steps=20, seed=0))]
fn threshold(
    py: Python<'_>,
    theta: f64,
    dv: usize,
    dc: usize,
    m: usize,
    n: usize,
    bisect_steps: usize,
    seed: u64,
) -> PyResult<f64> {
    let cfg = DEConfig {
        m,
        n,
        bisect_steps,
        ..DEConfig::ci(dv, dc, QubitBSCQ::PERFECT)
    };
    py.detach(|| de_threshold(theta, &cfg, bisect_steps, seed))
        .map_err(py_err)
}

/// Largest `q` whose Holevo information at `theta` reaches `rate`.
#[pyfunction]
fn holevo_bound(theta: f64, rate: f64) -> PyResult<f64> {
    holevo_q_bound(theta, rate).map_err(py_err)
}

#[pymodule]
fn pmbpqm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQubit>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(check_combine, m)?)?;
    m.add_function(wrap_pyfunction!(bit_combine, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(holevo_bound, m)?)?;
    Ok(())
}
