//! Python bindings: grids, packets, potentials, propagation, trajectories,
//! tubes and the preset experiments.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qtube_core::experiments::{execute, RunConfig, Scenario};
use qtube_core::trajectories::{effective_support, integrate_trajectories_with, IntegrationOptions};
use qtube_core::tubes::{find_separatrix, fraunhofer_boundary as boundary, tube_probability, Domain, SeparatrixOptions};
use qtube_core::{
    gaussian_packet, mean_energy, sample_initial_conditions, sample_potential, superpose, GaussianSpec, Grid1D,
    PotentialSpec, ProbabilityTube, PropagationConfig, SamplingScheme, SnapshotStore, WaveFunction,
};

fn err(e: qtube_core::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Uniform periodic grid.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(Grid1D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(x_min: f64, x_max: f64, n_points: usize) -> PyResult<Self> {
        Grid1D::new(x_min, x_max, n_points).map(Self).map_err(err)
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn positions(&self) -> Vec<f64> {
        self.0.positions()
    }
}

/// Gaussian packet parameters with a complex weight.
#[pyclass(name = "Packet", frozen, from_py_object)]
#[derive(Clone)]
struct PyPacket(GaussianSpec);

#[pymethods]
impl PyPacket {
    #[new]
    #[pyo3(signature = (x0, p0, sigma0, weight = Complex64::new(1.0, 0.0)))]
    fn new(x0: f64, p0: f64, sigma0: f64, weight: Complex64) -> PyResult<Self> {
        let spec = GaussianSpec::new(x0, p0, sigma0).with_weight(weight);
        spec.validate().map_err(err)?;
        Ok(Self(spec))
    }

    fn __repr__(&self) -> String {
        let s = &self.0;
        format!("Packet(x0={}, p0={}, sigma0={}, weight={})", s.x0, s.p0, s.sigma0, s.c)
    }
}

#[pyclass(name = "Potential", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPotential(PotentialSpec);

#[pymethods]
impl PyPotential {
    #[staticmethod]
    fn free() -> Self {
        Self(PotentialSpec::free())
    }

    #[staticmethod]
    fn tanh_barrier(v0: f64, alpha: f64, x_minus: f64, x_plus: f64) -> PyResult<Self> {
        PotentialSpec::tanh_barrier(v0, alpha, x_minus, x_plus).map(Self).map_err(err)
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }
}

#[pyclass(name = "WaveFunction", frozen)]
struct PyWaveFunction(WaveFunction);

#[pymethods]
impl PyWaveFunction {
    /// Normalized superposition of `packets` sampled on `grid`.
    #[staticmethod]
    fn superpose(packets: Vec<PyPacket>, grid: &PyGrid) -> PyResult<Self> {
        let specs: Vec<GaussianSpec> = packets.into_iter().map(|p| p.0).collect();
        superpose(&specs, &grid.0).map(Self).map_err(err)
    }

    #[staticmethod]
    fn gaussian(packet: &PyPacket, grid: &PyGrid) -> PyResult<Self> {
        gaussian_packet(&packet.0, &grid.0).map(Self).map_err(err)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t()
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.values().to_vec()
    }

    fn density(&self) -> Vec<f64> {
        qtube_core::density(&self.0).into_values()
    }

    #[pyo3(signature = (potential, mass = 1.0))]
    fn energy(&self, potential: &PyPotential, mass: f64) -> PyResult<f64> {
        let v = sample_potential(&potential.0, self.0.grid()).map_err(err)?;
        mean_energy(&self.0, &v, mass).map_err(err)
    }

    /// Initial positions over the effective support, evenly spaced or at
    /// equal-probability quantiles.
    #[pyo3(signature = (n, scheme = "even", support_cut = 1e-4))]
    fn sample(&self, n: usize, scheme: &str, support_cut: f64) -> PyResult<Vec<f64>> {
        let scheme = match scheme {
            "even" => SamplingScheme::Even,
            "quantile" => SamplingScheme::Quantile,
            other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
        };
        sample_initial_conditions(&self.0, n, scheme, support_cut).map_err(err)
    }

    #[pyo3(signature = (support_cut = 1e-4))]
    fn support(&self, support_cut: f64) -> PyResult<(f64, f64)> {
        effective_support(&self.0, support_cut).map_err(err)
    }
}

/// Snapshots of a propagated state, with trajectory and tube tools.
#[pyclass(name = "Evolution", frozen)]
struct PyEvolution(SnapshotStore);

#[pymethods]
impl PyEvolution {
    #[new]
    #[pyo3(signature = (initial, potential, dt, n_steps, snapshot_stride, mass = 1.0))]
    fn new(
        py: Python<'_>,
        initial: &PyWaveFunction,
        potential: &PyPotential,
        dt: f64,
        n_steps: usize,
        snapshot_stride: usize,
        mass: f64,
    ) -> PyResult<Self> {
        let cfg = PropagationConfig::new(dt, n_steps, snapshot_stride).map_err(err)?.with_mass(mass);
        let v = sample_potential(&potential.0, initial.0.grid()).map_err(err)?;
        py.detach(|| qtube_core::propagate(&initial.0, &v, &cfg)).map(Self).map_err(err)
    }

    fn times(&self) -> Vec<f64> {
        self.0.times().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn state(&self, i: usize) -> PyResult<PyWaveFunction> {
        self.check(i)?;
        Ok(PyWaveFunction(self.0.state(i).clone()))
    }

    fn density(&self, i: usize) -> PyResult<Vec<f64>> {
        self.check(i)?;
        Ok(self.0.density(i).into_values())
    }

    fn velocity(&self, i: usize) -> PyResult<Vec<f64>> {
        self.check(i)?;
        self.0.velocity(i).map(<[f64]>::to_vec).map_err(err)
    }

    /// Probability in `[a, b]` at snapshot `i`.
    fn probability(&self, i: usize, a: f64, b: f64) -> PyResult<f64> {
        self.check(i)?;
        self.0.density(i).integrate(a, b).map_err(err)
    }

    /// `(max |norm − 1|, max relative energy drift)` over all snapshots.
    fn drift(&self) -> (f64, f64) {
        let d = self.0.diagnostics();
        (d.max_norm_drift, d.max_relative_energy_drift)
    }

    /// Trajectory positions at every snapshot, one list per initial position.
    #[pyo3(signature = (x_inits, substeps = 4))]
    fn trajectories(&self, py: Python<'_>, x_inits: Vec<f64>, substeps: usize) -> PyResult<Vec<Vec<f64>>> {
        let opts = IntegrationOptions { substeps, until: None };
        let ens = py.detach(|| integrate_trajectories_with(&self.0, &x_inits, &opts)).map_err(err)?;
        Ok(ens.trajectories().iter().map(|t| t.positions().to_vec()).collect())
    }

    /// Initial position separating trajectories that end in `[a, b]` from
    /// those that do not.
    #[pyo3(signature = (bracket, a, b, tol = 1e-4))]
    fn separatrix(&self, py: Python<'_>, bracket: (f64, f64), a: f64, b: f64, tol: f64) -> PyResult<f64> {
        let target = Domain::new("target", a, b).map_err(err)?;
        let opts = SeparatrixOptions { tol, ..Default::default() };
        py.detach(|| find_separatrix(&self.0, |x, _| target.contains(x), bracket, &opts))
            .map(|s| s.x_init)
            .map_err(err)
    }

    /// Probability enclosed between the trajectories launched from
    /// `lower` and `upper`, at every snapshot.
    fn tube(&self, py: Python<'_>, lower: f64, upper: f64) -> PyResult<Vec<f64>> {
        py.detach(|| {
            let tube = ProbabilityTube::from_initial(&self.0, lower, upper, &IntegrationOptions::default())?;
            tube_probability(&tube, &self.0)
        })
        .map_err(err)
    }
}

impl PyEvolution {
    fn check(&self, i: usize) -> PyResult<()> {
        if i < self.0.len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("snapshot {i} out of range (have {})", self.0.len())))
        }
    }
}

/// Far-field domain edges of diffraction order `n`.
#[pyfunction]
#[pyo3(signature = (n, t, slits, spacing, mass = 1.0))]
fn fraunhofer_boundary(n: i32, t: f64, slits: usize, spacing: f64, mass: f64) -> PyResult<(f64, f64)> {
    boundary(n, t, slits, spacing, mass).map_err(err)
}

/// Runs `scenario` ("tunnel", "grating" or "custom") and returns the
/// report as a JSON string. `config` is optional TOML text overriding the
/// preset.
#[pyfunction]
#[pyo3(signature = (scenario, config = None))]
fn run(py: Python<'_>, scenario: &str, config: Option<&str>) -> PyResult<String> {
    let scenario = match scenario {
        "tunnel" => Scenario::Tunnel,
        "grating" => Scenario::Grating,
        "custom" => Scenario::Custom,
        other => return Err(PyValueError::new_err(format!("unknown scenario {other:?}"))),
    };
    let cfg = match config {
        Some(text) => RunConfig::from_toml_str(text, Some(scenario)).map_err(err)?,
        None => RunConfig::preset(scenario).ok_or_else(|| PyValueError::new_err("custom runs need a config"))?,
    };
    let out = py.detach(|| execute(&cfg)).map_err(err)?;
    serde_json::to_string(&out.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn qtube(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPacket>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyWaveFunction>()?;
    m.add_class::<PyEvolution>()?;
    m.add_function(wrap_pyfunction!(fraunhofer_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
