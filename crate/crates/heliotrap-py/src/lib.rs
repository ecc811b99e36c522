//! Python bindings over the simulation chain: electrode fields, bias
//! points, electron equilibria, vibrational mode spectra, and the
//! resonator reflection, plus JSON-driven sweep protocols.
//!
//! Physical constants are the library's SI defaults throughout. Heavy
//! results cross the boundary as plain lists and floats; sweep specs and
//! reports cross as the same JSON the command line tools use.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use heliotrap::equilibrium::{self, EquilibriumOptions};
use heliotrap::harness::{self, SweepSpec};
use heliotrap::modes::{self, ResonatorMode, ResonatorModeKind};
use heliotrap::potential::io::{load_field, save_field};
use heliotrap::potential::laplace::{solve_unit_potentials, ElectrodeGeometry2D};
use heliotrap::potential::synthetic::device_field;
use heliotrap::response::{self, ReflectionTrace};
use heliotrap::{
    BiasConfig, ElectronConfiguration, ModeSpectrum, PhysicalConstants, ResonatorParams,
};

fn err(e: heliotrap::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(format!("bad JSON: {e}"))
}

fn consts() -> PhysicalConstants {
    PhysicalConstants::default()
}

/// Unit potentials for a set of electrodes on one shared grid.
#[pyclass(name = "PotentialField", frozen)]
struct Field {
    inner: heliotrap::PotentialField,
}

#[pymethods]
impl Field {
    /// The built-in five-gate trap layout, solved on demand.
    #[staticmethod]
    fn device() -> PyResult<Self> {
        Ok(Field { inner: device_field().map_err(err)? })
    }

    /// Solve a layout described by the same JSON `solve-potential` takes.
    #[staticmethod]
    fn solve(geometry_json: &str) -> PyResult<Self> {
        let layout: ElectrodeGeometry2D =
            serde_json::from_str(geometry_json).map_err(json_err)?;
        Ok(Field { inner: solve_unit_potentials(&layout).map_err(err)? })
    }

    /// Read previously saved `.alpha` grid files.
    #[staticmethod]
    fn load(paths: Vec<PathBuf>) -> PyResult<Self> {
        Ok(Field { inner: load_field(&paths).map_err(err)? })
    }

    /// Write one `<electrode>.alpha` file per grid; returns the paths.
    fn save(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        save_field(&self.inner, &dir).map_err(err)
    }

    #[getter]
    fn electrodes(&self) -> Vec<String> {
        self.inner.electrodes().map(str::to_owned).collect()
    }

    /// Total potential at a point, volts.
    fn phi(&self, bias: &Bias, x_um: f64, y_um: f64) -> PyResult<f64> {
        self.inner.phi_at(&bias.inner, x_um, y_um).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("PotentialField(electrodes={:?})", self.electrodes())
    }
}

/// Voltages applied to the electrodes, plus the bath temperature.
#[pyclass(name = "Bias")]
#[derive(Clone)]
struct Bias {
    inner: BiasConfig,
}

#[pymethods]
impl Bias {
    #[new]
    #[pyo3(signature = (voltages, temperature_k = 1.1))]
    fn new(voltages: BTreeMap<String, f64>, temperature_k: f64) -> PyResult<Self> {
        Ok(Bias { inner: BiasConfig::new(voltages, temperature_k).map_err(err)? })
    }

    #[getter]
    fn voltages(&self) -> BTreeMap<String, f64> {
        self.inner.voltages.clone()
    }

    #[getter]
    fn temperature_k(&self) -> f64 {
        self.inner.temperature_k
    }

    /// A copy with one electrode's voltage replaced.
    fn with_voltage(&self, name: &str, volts: f64) -> Bias {
        Bias { inner: self.inner.with_voltage(name, volts) }
    }

    fn __repr__(&self) -> String {
        format!(
            "Bias({:?}, temperature_k={})",
            self.inner.voltages, self.inner.temperature_k
        )
    }
}

/// An N-electron configuration and how it was obtained.
#[pyclass(name = "Equilibrium", frozen)]
struct Equilibrium {
    inner: ElectronConfiguration,
}

#[pymethods]
impl Equilibrium {
    /// A configuration fixed by hand rather than relaxed; counts as
    /// converged for mode analysis.
    #[staticmethod]
    fn pinned(positions_um: Vec<(f64, f64)>) -> Self {
        let pts = positions_um.iter().map(|&(x, y)| [x, y]).collect();
        Equilibrium { inner: ElectronConfiguration::pinned(pts) }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn positions_um(&self) -> Vec<(f64, f64)> {
        self.inner.positions_um.iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn energy_j(&self) -> f64 {
        self.inner.energy_j
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn gradient_norm(&self) -> f64 {
        self.inner.gradient_norm
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Equilibrium(n={}, energy_j={:e}, converged={})",
            self.inner.n, self.inner.energy_j, self.inner.converged
        )
    }
}

/// Vibrational modes of a configuration: frequencies, damping, and the
/// resonator coupling of each mode once `couplings` has filled it.
#[pyclass(name = "ModeSpectrum", frozen)]
struct Modes {
    inner: ModeSpectrum,
}

#[pymethods]
impl Modes {
    #[getter]
    fn omega_over_2pi_hz(&self) -> Vec<f64> {
        self.inner.omegas.iter().map(|w| w / std::f64::consts::TAU).collect()
    }

    #[getter]
    fn g_over_2pi_hz(&self) -> Vec<f64> {
        self.inner.couplings.iter().map(|g| g / std::f64::consts::TAU).collect()
    }

    #[getter]
    fn gamma_over_2pi_hz(&self) -> Vec<f64> {
        self.inner.gammas.iter().map(|g| g / std::f64::consts::TAU).collect()
    }

    #[getter]
    fn stable(&self) -> bool {
        self.inner.stable
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("ModeSpectrum(n={}, stable={})", self.inner.len(), self.inner.stable)
    }
}

/// Readout resonator parameters; defaults describe the reference device.
#[pyclass(name = "Resonator")]
#[derive(Clone)]
struct Resonator {
    inner: ResonatorParams,
}

#[pymethods]
impl Resonator {
    #[new]
    #[pyo3(signature = (f_r_hz = 6.04383e9, q_i = 5800.0, q_c = 4800.0, a = 1.0,
                        theta_rad = 0.0, gamma_scale = 0.85))]
    fn new(f_r_hz: f64, q_i: f64, q_c: f64, a: f64, theta_rad: f64, gamma_scale: f64) -> Self {
        Resonator {
            inner: ResonatorParams {
                f_r_hz,
                q_i,
                q_c,
                a,
                theta_rad,
                gamma_scale,
                ..ResonatorParams::default()
            },
        }
    }

    #[getter]
    fn f_r_hz(&self) -> f64 {
        self.inner.f_r_hz
    }

    #[getter]
    fn q_i(&self) -> f64 {
        self.inner.q_i
    }

    #[getter]
    fn q_c(&self) -> f64 {
        self.inner.q_c
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn theta_rad(&self) -> f64 {
        self.inner.theta_rad
    }

    #[getter]
    fn gamma_scale(&self) -> f64 {
        self.inner.gamma_scale
    }

    /// Loaded quality factor.
    fn q_t(&self) -> f64 {
        self.inner.q_t()
    }

    /// Total capacitance the electron motion modulates, farads.
    fn c_total(&self) -> f64 {
        self.inner.c_total()
    }

    fn __repr__(&self) -> String {
        format!(
            "Resonator(f_r_hz={:e}, q_i={}, q_c={})",
            self.inner.f_r_hz, self.inner.q_i, self.inner.q_c
        )
    }
}

/// A reflection spectrum: frequencies and complex S11 samples.
#[pyclass(name = "Trace", frozen)]
struct Trace {
    inner: ReflectionTrace,
}

#[pymethods]
impl Trace {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let inner = ReflectionTrace::read_csv(BufReader::new(text.as_bytes())).map_err(err)?;
        Ok(Trace { inner })
    }

    #[getter]
    fn freq_hz(&self) -> Vec<f64> {
        self.inner.frequencies_hz.clone()
    }

    #[getter]
    fn s11(&self) -> Vec<Complex64> {
        self.inner.s11.clone()
    }

    #[getter]
    fn noise_sigma(&self) -> f64 {
        self.inner.noise_sigma
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Trace(points={})", self.inner.len())
    }
}

fn options_from(
    max_electrons: usize,
    search_box: Option<(f64, f64, f64, f64)>,
    reservoir_potential: f64,
) -> EquilibriumOptions {
    EquilibriumOptions {
        max_electrons,
        search_box: search_box.map(|(x0, x1, y0, y1)| [x0, x1, y0, y1]),
        reservoir_potential,
        ..EquilibriumOptions::default()
    }
}

/// Relax exactly `n` electrons from seeded random starts.
#[pyfunction]
#[pyo3(signature = (field, bias, n, seed = 0, max_electrons = 100, search_box = None))]
fn find_equilibrium(
    field: &Field,
    bias: &Bias,
    n: usize,
    seed: u64,
    max_electrons: usize,
    search_box: Option<(f64, f64, f64, f64)>,
) -> PyResult<Equilibrium> {
    let opts = options_from(max_electrons, search_box, 0.0);
    let cfg = equilibrium::find_equilibrium(&consts(), &field.inner, &bias.inner, n, seed, &opts)
        .map_err(err)?;
    Ok(Equilibrium { inner: cfg })
}

/// Relax from explicit starting positions.
#[pyfunction]
fn minimize(field: &Field, bias: &Bias, start_um: Vec<(f64, f64)>) -> PyResult<Equilibrium> {
    let start: Vec<[f64; 2]> = start_um.iter().map(|&(x, y)| [x, y]).collect();
    let cfg = equilibrium::minimize(
        &consts(),
        &field.inner,
        &bias.inner,
        &start,
        &EquilibriumOptions::default(),
    )
    .map_err(err)?;
    Ok(Equilibrium { inner: cfg })
}

/// Fill the trap one electron at a time until the chemical potential
/// crosses the reservoir. Returns the final configuration, the per-step
/// `(n, energy_j, chemical_potential_j)` ladder, and whether the
/// electron cap stopped the fill.
#[pyfunction]
#[pyo3(signature = (field, bias, seed = 0, max_electrons = 100, search_box = None,
                    reservoir_potential = 0.0))]
fn load_trap(
    field: &Field,
    bias: &Bias,
    seed: u64,
    max_electrons: usize,
    search_box: Option<(f64, f64, f64, f64)>,
    reservoir_potential: f64,
) -> PyResult<(Equilibrium, Vec<(usize, f64, f64)>, bool)> {
    let opts = options_from(max_electrons, search_box, reservoir_potential);
    let loaded =
        equilibrium::load_trap(&consts(), &field.inner, &bias.inner, seed, &opts).map_err(err)?;
    let steps = loaded
        .steps
        .iter()
        .map(|s| (s.n, s.energy_j, s.chemical_potential_j))
        .collect();
    Ok((Equilibrium { inner: loaded.configuration }, steps, loaded.capped))
}

/// Vibrational modes of a converged or pinned configuration.
#[pyfunction]
#[pyo3(signature = (field, bias, equilibrium, gamma_over_2pi_hz = 1.5e9))]
fn eigenmodes(
    field: &Field,
    bias: &Bias,
    equilibrium: &Equilibrium,
    gamma_over_2pi_hz: f64,
) -> PyResult<Modes> {
    let spectrum = modes::eigenmodes(
        &consts(),
        &field.inner,
        &bias.inner,
        &equilibrium.inner,
        std::f64::consts::TAU * gamma_over_2pi_hz,
    )
    .map_err(err)?;
    Ok(Modes { inner: spectrum })
}

/// Fill mode-resonator couplings using the differential arm field at the
/// electron positions.
#[pyfunction]
fn couplings(
    field: &Field,
    equilibrium: &Equilibrium,
    modes_in: &Modes,
    resonator: &Resonator,
) -> PyResult<Modes> {
    let mode = ResonatorMode::differential(&field.inner, &equilibrium.inner.positions_um)
        .map_err(err)?;
    let filled = modes::couplings(
        &consts(),
        &modes_in.inner,
        &mode,
        resonator.inner.c_total(),
        resonator.inner.gamma_scale,
    )
    .map_err(err)?;
    Ok(Modes { inner: filled })
}

/// Couplings for a spatially uniform resonator field, 1/μm per axis.
#[pyfunction]
fn couplings_uniform(
    equilibrium: &Equilibrium,
    modes_in: &Modes,
    e_x_per_um: f64,
    e_y_per_um: f64,
    resonator: &Resonator,
) -> PyResult<Modes> {
    let mode = ResonatorMode::uniform(
        ResonatorModeKind::Differential,
        [e_x_per_um, e_y_per_um],
        equilibrium.inner.n,
    );
    let filled = modes::couplings(
        &consts(),
        &modes_in.inner,
        &mode,
        resonator.inner.c_total(),
        resonator.inner.gamma_scale,
    )
    .map_err(err)?;
    Ok(Modes { inner: filled })
}

/// Closed-form single-electron coupling for a uniform field, rad/s.
#[pyfunction]
fn single_electron_coupling(e_y_per_um: f64, c_total_f: f64, gamma_scale: f64) -> f64 {
    modes::single_electron_coupling(&consts(), e_y_per_um, c_total_f, gamma_scale)
}

/// Dispersive resonator shift from a coupled mode spectrum, Hz.
#[pyfunction]
fn frequency_shift(modes_in: &Modes, resonator: &Resonator) -> f64 {
    response::frequency_shift(&modes_in.inner, &resonator.inner)
}

/// Electron branch susceptibility at an angular frequency.
#[pyfunction]
fn susceptibility(modes_in: &Modes, omega_rad_s: f64) -> Complex64 {
    response::susceptibility(&modes_in.inner, omega_rad_s)
}

/// Generate a reflection trace with optional additive noise.
#[pyfunction]
#[pyo3(signature = (resonator, delta_f_hz, f_lo_hz, f_hi_hz, n_points, noise_sigma = 0.0,
                    seed = 0))]
fn synthesize_trace(
    resonator: &Resonator,
    delta_f_hz: f64,
    f_lo_hz: f64,
    f_hi_hz: f64,
    n_points: usize,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<Trace> {
    let trace = response::synthesize_trace(
        &resonator.inner,
        delta_f_hz,
        f_lo_hz,
        f_hi_hz,
        n_points,
        noise_sigma,
        seed,
    )
    .map_err(err)?;
    Ok(Trace { inner: trace })
}

/// Fit the reflection model to a trace. Returns a dict with the fitted
/// parameters, their standard errors, and convergence diagnostics.
#[pyfunction]
fn fit_s11<'py>(py: Python<'py>, trace: &Trace, guess: &Resonator) -> PyResult<Bound<'py, PyDict>> {
    let fit = response::fit_s11(&trace.inner, &guess.inner).map_err(err)?;
    let stderr = PyDict::new_bound(py);
    stderr.set_item("f_r_hz", fit.stderr.f_r_hz)?;
    stderr.set_item("q_i", fit.stderr.q_i)?;
    stderr.set_item("q_c", fit.stderr.q_c)?;
    stderr.set_item("a", fit.stderr.a)?;
    stderr.set_item("theta_rad", fit.stderr.theta_rad)?;
    let out = PyDict::new_bound(py);
    out.set_item("f_r_hz", fit.f_r_hz)?;
    out.set_item("q_i", fit.q_i)?;
    out.set_item("q_c", fit.q_c)?;
    out.set_item("a", fit.a)?;
    out.set_item("theta_rad", fit.theta_rad)?;
    out.set_item("stderr", stderr)?;
    out.set_item("converged", fit.converged)?;
    out.set_item("iterations", fit.iterations)?;
    out.set_item("residual_rms", fit.residual_rms)?;
    if let Some(w) = fit.warning {
        out.set_item("warning", w)?;
    }
    Ok(out)
}

/// Run a load or unload sweep described by the same JSON the `sweep`
/// subcommand takes. Returns `(points_csv, plateaus_json)`.
#[pyfunction]
fn run_sweep(field: &Field, spec_json: &str) -> PyResult<(String, String)> {
    let spec: SweepSpec = serde_json::from_str(spec_json).map_err(json_err)?;
    let mut result = harness::run_sweep(&consts(), &field.inner, &spec).map_err(err)?;
    result.plateaus = harness::detect_plateaus(&result, None).unwrap_or_default();
    let plateaus = serde_json::to_string_pretty(&result.plateaus).map_err(json_err)?;
    Ok((harness::points_csv(&result), plateaus))
}

/// Sweep two gates with one electron held; returns `(points_csv,
/// ridges_json)` where the JSON carries the grid shape and both ridges.
#[pyfunction]
fn map2d(field: &Field, spec_json: &str) -> PyResult<(String, String)> {
    let spec: SweepSpec = serde_json::from_str(spec_json).map_err(json_err)?;
    let map = harness::map2d(&consts(), &field.inner, &spec).map_err(err)?;
    let ridges = serde_json::json!({
        "shape": [map.shape.0, map.shape.1],
        "omega_min_ridge": map.omega_min_ridge,
        "delta_f_ridge": map.delta_f_ridge,
    });
    let ridges = serde_json::to_string_pretty(&ridges).map_err(json_err)?;
    Ok((harness::points_csv(&map.result), ridges))
}

/// Alternate single-electron loads with unload excursions; returns the
/// cycle report as JSON.
#[pyfunction]
fn single_electron_cycle(field: &Field, spec_json: &str, repetitions: usize) -> PyResult<String> {
    let spec: SweepSpec = serde_json::from_str(spec_json).map_err(json_err)?;
    let report =
        harness::single_electron_cycle(&consts(), &field.inner, &spec, repetitions).map_err(err)?;
    serde_json::to_string_pretty(&report).map_err(json_err)
}

#[pymodule]
fn heliotrap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Field>()?;
    m.add_class::<Bias>()?;
    m.add_class::<Equilibrium>()?;
    m.add_class::<Modes>()?;
    m.add_class::<Resonator>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(find_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    m.add_function(wrap_pyfunction!(load_trap, m)?)?;
    m.add_function(wrap_pyfunction!(eigenmodes, m)?)?;
    m.add_function(wrap_pyfunction!(couplings, m)?)?;
    m.add_function(wrap_pyfunction!(couplings_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(single_electron_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(frequency_shift, m)?)?;
    m.add_function(wrap_pyfunction!(susceptibility, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_trace, m)?)?;
    m.add_function(wrap_pyfunction!(fit_s11, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(map2d, m)?)?;
    m.add_function(wrap_pyfunction!(single_electron_cycle, m)?)?;
    m.add("DEFAULT_GAMMA_OVER_2PI_HZ", modes::DEFAULT_GAMMA_OVER_2PI_HZ)?;
    Ok(())
}
