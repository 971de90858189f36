//! Python bindings: configuration, a single-process simulation handle, and
//! the connected-component analysis helper.

use biofilm2d::comm::Communicator;
use biofilm2d::driver::{self, RankSim, SimConfig};
use biofilm2d::mesh::{gather_global, GridSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;

/// Simulation configuration (defaults follow the reference parameter set).
#[pyclass(name = "Config")]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => driver::parse_config(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => SimConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    /// Apply one `key = value` assignment (same keys as the config file).
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner
            .apply(key, value, 0)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.inner
            .validate()
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn intervals(&self) -> usize {
        self.inner.nx - 1
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(grid={}x{}, dt={}, steps={})",
            self.inner.nx - 1,
            self.inner.ny - 1,
            self.inner.dt,
            self.inner.steps
        )
    }
}

/// A running single-rank simulation.
#[pyclass(name = "Simulation", unsendable)]
struct PySimulation {
    sim: RankSim,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        config
            .inner
            .validate()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let sim = RankSim::new(&config.inner, Communicator::solo())
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(PySimulation { sim })
    }

    /// Advance `n` steps; returns the iteration counts of the last step.
    #[pyo3(signature = (n = 1))]
    fn step(&mut self, n: usize) -> PyResult<(usize, usize, usize, usize)> {
        let mut last = driver::StepStats::default();
        for _ in 0..n {
            last = self
                .sim
                .step()
                .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        }
        Ok((last.ch_iters, last.nut_iters, last.mom_iters, last.prs_iters))
    }

    #[getter]
    fn time(&self) -> f64 {
        self.sim.time()
    }

    #[getter]
    fn step_index(&self) -> usize {
        self.sim.step_index
    }

    /// Global field as a list of rows (j = 0 at the bottom wall); names:
    /// phi_n, c, u, v, p (physical, i.e. stored value over dt).
    fn field(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        let comm = &self.sim.comm;
        let flat = match name {
            "phi_n" | "phi" => gather_global(&self.sim.hist.curr, comm),
            "c" => gather_global(&self.sim.c, comm),
            "u" => gather_global(&self.sim.flow.v.u, comm),
            "v" => gather_global(&self.sim.flow.v.v, comm),
            "p" => {
                let mut p = self.sim.flow.p.clone();
                let dt = self.sim.cfg.dt;
                p.map_owned(|x| x / dt);
                gather_global(&p, comm)
            }
            _ => {
                return Err(PyValueError::new_err(format!(
                    "unknown field `{name}` (expected phi_n, c, u, v or p)"
                )))
            }
        };
        let nxu = self.sim.sub.grid.unique_nx();
        Ok(flat.chunks(nxu).map(|row| row.to_vec()).collect())
    }

    fn mass_phi(&self) -> f64 {
        biofilm2d::transport::phi_mass(&self.sim.hist.curr, &self.sim.comm)
    }

    fn free_energy(&self) -> f64 {
        biofilm2d::transport::free_energy(&self.sim.hist.curr, &self.sim.cfg.ch, &self.sim.comm)
    }

    /// Connected components of {phi >= threshold}; defaults to half the
    /// configured bulk fraction.
    #[pyo3(signature = (threshold = None))]
    fn components(&self, threshold: Option<f64>) -> usize {
        let thr = threshold.unwrap_or(0.5 * self.sim.cfg.ic.phi_bulk);
        driver::connected_components(&self.sim.hist.curr, thr, &self.sim.comm)
    }

    /// Write a VTK snapshot of the current state into `dir`.
    fn write_snapshot(&self, dir: &str) -> PyResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        self.sim
            .write_snapshot(&PathBuf::from(dir))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Component count of a thresholded field given as rows (periodic in x).
#[pyfunction]
fn connected_components(rows: Vec<Vec<f64>>, threshold: f64) -> PyResult<usize> {
    let ny = rows.len();
    let nxu = rows.first().map(|r| r.len()).unwrap_or(0);
    if ny < 8 || nxu < 7 {
        return Err(PyValueError::new_err("field must be at least 8x7 nodes"));
    }
    if rows.iter().any(|r| r.len() != nxu) {
        return Err(PyValueError::new_err("rows must have equal lengths"));
    }
    let grid = GridSpec::new(nxu + 1, ny).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(driver::count_components(&flat, &grid, threshold))
}

#[pymodule]
fn biofilm2d_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(connected_components, m)?)?;
    Ok(())
}
