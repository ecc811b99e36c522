//! Voltage-sweep protocols over a gate layout: stateless loading curves,
//! stateful unload staircases, two-dimensional shift maps with ridge
//! extraction, and repeated single-electron load/unload cycling. Results
//! are written as a self-describing run directory (spec echo, CSV points,
//! plateau list, plain-text log) whose bytes depend only on the spec, the
//! field, and the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, UM};
use crate::equilibrium::{load_trap, minimize, ElectronConfiguration, EquilibriumOptions};
use crate::error::{Error, Result};
use crate::modes::{couplings, eigenmodes, ModeSpectrum, ResonatorMode};
use crate::potential::{BiasConfig, PotentialField};
use crate::response::{frequency_shift, ResonatorParams};

const TAU: f64 = std::f64::consts::TAU;

/// Added to the second swept voltage when a ridge is re-emitted shifted,
/// so the raw and offset curves can be overlaid without covering each
/// other.
pub const RIDGE_OFFSET_V: f64 = 0.05;

/// Couplings below this fraction of the strongest one are treated as
/// zero when picking the lowest mode the resonator actually senses.
const COUPLED_FRACTION: f64 = 1e-6;

/// One swept gate: inclusive linear ramp from `start_v` to `stop_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweptElectrode {
    pub name: String,
    pub start_v: f64,
    pub stop_v: f64,
    pub steps: usize,
}

impl SweptElectrode {
    /// The ramp values, endpoints included.
    pub fn values(&self) -> Vec<f64> {
        let n = self.steps.max(2);
        let span = self.stop_v - self.start_v;
        (0..n)
            .map(|k| self.start_v + span * k as f64 / (n - 1) as f64)
            .collect()
    }

    fn validate(&self, field: &PotentialField) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "swept electrode '{}' needs at least 2 steps, got {}",
                self.name, self.steps
            )));
        }
        if !self.start_v.is_finite() || !self.stop_v.is_finite() {
            return Err(Error::NonFinite(format!("sweep range for '{}'", self.name)));
        }
        if !electrode_is_biasable(field, &self.name) {
            return Err(Error::MissingVoltage(format!(
                "swept electrode '{}' matches no grid in the field",
                self.name
            )));
        }
        Ok(())
    }
}

/// True when setting a voltage under this name reaches at least one grid,
/// either by exact match or through the `name_<suffix>` arm convention.
fn electrode_is_biasable(field: &PotentialField, name: &str) -> bool {
    field.electrodes().any(|grid| {
        grid == name
            || (grid.len() > name.len()
                && grid.starts_with(name)
                && grid.as_bytes()[name.len()] == b'_')
    })
}

/// What a sweep does at each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Refill the trap from scratch at every bias.
    Load,
    /// Carry electrons forward, expelling those that come unbound at each
    /// excursion; survivors are measured back at the return voltage.
    Unload,
    /// Two swept gates, one electron held throughout.
    Map2d,
    /// Alternate a fresh single-electron load with a full unload.
    SingleElectronCycle,
}

fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Load => "load",
        Protocol::Unload => "unload",
        Protocol::Map2d => "map2d",
        Protocol::SingleElectronCycle => "single_electron_cycle",
    }
}

fn default_gamma_over_2pi() -> f64 {
    1.5e9
}

fn default_max_electrons() -> usize {
    100
}

/// Complete description of one run. Serializes field-for-field to the
/// JSON config format accepted by the command line tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub swept_electrodes: Vec<SweptElectrode>,
    /// Voltages held on everything that is not swept.
    pub bias: BiasConfig,
    pub protocol: Protocol,
    /// Where the unload gate parks between excursions; required by the
    /// unload protocol, optional override of the ramp start for cycling.
    #[serde(default)]
    pub unload_return_voltage: Option<f64>,
    #[serde(default)]
    pub resonator: ResonatorParams,
    /// Mode damping Γ/2π applied to every vibrational mode, Hz.
    #[serde(default = "default_gamma_over_2pi")]
    pub gamma_over_2pi: f64,
    #[serde(default)]
    pub seed: u64,
    /// Restrict the trap search to (xmin, xmax, ymin, ymax), μm. An
    /// electron whose equilibrium leaves this box during an unload
    /// excursion counts as drained to the reservoir.
    #[serde(default)]
    pub search_box: Option<[f64; 4]>,
    /// Loading cap passed through to the filling rule.
    #[serde(default = "default_max_electrons")]
    pub max_electrons: usize,
}

impl SweepSpec {
    pub fn validate(&self, field: &PotentialField) -> Result<()> {
        self.bias.validate()?;
        self.resonator.validate()?;
        if !(self.gamma_over_2pi > 0.0) || !self.gamma_over_2pi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mode damping must be positive and finite, got {}",
                self.gamma_over_2pi
            )));
        }
        if self.max_electrons == 0 {
            return Err(Error::InvalidParameter(
                "electron cap must be at least 1".into(),
            ));
        }
        for swept in &self.swept_electrodes {
            swept.validate(field)?;
        }
        let axes = self.swept_electrodes.len();
        match self.protocol {
            Protocol::Load => {
                if axes != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "load protocol sweeps exactly 1 electrode, got {axes}"
                    )));
                }
            }
            Protocol::Unload => {
                if axes != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "unload protocol sweeps exactly 1 electrode, got {axes}"
                    )));
                }
                match self.unload_return_voltage {
                    Some(v) if v.is_finite() => {}
                    Some(v) => {
                        return Err(Error::NonFinite(format!("return voltage {v}")));
                    }
                    None => {
                        return Err(Error::InvalidParameter(
                            "unload protocol needs a return voltage".into(),
                        ));
                    }
                }
            }
            Protocol::Map2d => {
                if axes != 2 {
                    return Err(Error::InvalidParameter(format!(
                        "map2d sweeps exactly 2 electrodes, got {axes}"
                    )));
                }
            }
            Protocol::SingleElectronCycle => {
                if axes > 1 {
                    return Err(Error::InvalidParameter(format!(
                        "cycling uses at most 1 swept electrode, got {axes}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn equilibrium_options(&self) -> EquilibriumOptions {
        EquilibriumOptions {
            search_box: self.search_box,
            max_electrons: self.max_electrons,
            ..EquilibriumOptions::default()
        }
    }

    fn gamma(&self) -> f64 {
        TAU * self.gamma_over_2pi
    }

    fn swept_names(&self) -> Vec<String> {
        self.swept_electrodes.iter().map(|s| s.name.clone()).collect()
    }
}

/// One evaluated bias point. `voltages` is the sweep coordinate (for the
/// unload protocol that is the excursion value; the measurement itself
/// happens back at the return voltage). `modes` keeps the filled spectrum
/// the shift was computed from, so the number can be re-derived exactly.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub idx: usize,
    pub voltages: BTreeMap<String, f64>,
    pub n_e: usize,
    pub delta_f_hz: f64,
    /// Lowest mode frequency the resonator couples to, Hz; 0 for an
    /// empty trap.
    pub omega_min_over_2pi_hz: f64,
    pub stable: bool,
    pub modes: ModeSpectrum,
    pub error: Option<String>,
}

/// Ordered sweep output plus any plateaus found in it.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub swept_names: Vec<String>,
    pub points: Vec<SweepPoint>,
    pub plateaus: Vec<Plateau>,
}

/// A run of consecutive points sharing one occupancy, bounded by shift
/// jumps or occupancy changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub n_e: usize,
    pub first_idx: usize,
    pub last_idx: usize,
    /// Swept voltage at the first and last point of the run.
    pub v_start: f64,
    pub v_stop: f64,
    pub delta_f_mean_hz: f64,
}

/// Evaluate modes, couplings, and the resonator shift for an equilibrated
/// configuration. Failures land in the point record, not in a Result: a
/// sweep keeps going past a bad bias.
fn measure_point(
    consts: &PhysicalConstants,
    field: &PotentialField,
    measure_bias: &BiasConfig,
    snapshot: &BiasConfig,
    idx: usize,
    cfg: &ElectronConfiguration,
    spec: &SweepSpec,
    note: Option<String>,
) -> SweepPoint {
    let mut point = SweepPoint {
        idx,
        voltages: snapshot.voltages.clone(),
        n_e: cfg.n,
        delta_f_hz: 0.0,
        omega_min_over_2pi_hz: 0.0,
        stable: true,
        modes: ModeSpectrum::empty(),
        error: note,
    };
    if cfg.n == 0 {
        return point;
    }
    if !cfg.converged {
        point.stable = false;
        point.error = Some(format!(
            "minimizer stalled at the measurement bias, gradient {:.3e} J/um",
            cfg.gradient_norm
        ));
        return point;
    }
    let spectrum = eigenmodes(consts, field, measure_bias, cfg, spec.gamma())
        .and_then(|s| {
            let mode = ResonatorMode::differential(field, &cfg.positions_um)?;
            couplings(
                consts,
                &s,
                &mode,
                spec.resonator.c_total(),
                spec.resonator.gamma_scale,
            )
        });
    match spectrum {
        Ok(filled) => {
            point.delta_f_hz = frequency_shift(&filled, &spec.resonator);
            point.omega_min_over_2pi_hz = coupled_minimum(&filled) / TAU;
            point.stable = filled.stable;
            point.modes = filled;
        }
        Err(e) => {
            point.stable = false;
            point.error = Some(e.to_string());
        }
    }
    point
}

/// Lowest frequency among modes carrying a nonzero coupling, rad/s. A
/// rigid translation of the whole cluster can sit below every coupled
/// mode while being invisible to the resonator, so the bare minimum would
/// misplace the soft-mode ridge.
fn coupled_minimum(spectrum: &ModeSpectrum) -> f64 {
    let gmax = spectrum.couplings.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if gmax == 0.0 {
        return spectrum.omegas.first().copied().unwrap_or(0.0);
    }
    spectrum
        .omegas
        .iter()
        .zip(&spectrum.couplings)
        .filter(|(_, g)| g.abs() >= COUPLED_FRACTION * gmax)
        .map(|(w, _)| *w)
        .fold(f64::INFINITY, f64::min)
}

fn error_point(idx: usize, snapshot: &BiasConfig, n_e: usize, message: String) -> SweepPoint {
    SweepPoint {
        idx,
        voltages: snapshot.voltages.clone(),
        n_e,
        delta_f_hz: 0.0,
        omega_min_over_2pi_hz: 0.0,
        stable: false,
        modes: ModeSpectrum::empty(),
        error: Some(message),
    }
}

/// Run a one-dimensional load or unload sweep. Load points are
/// independent and evaluated in parallel; unload points carry their
/// surviving electrons forward in order. Per-point failures are recorded
/// in the affected point and the sweep continues.
pub fn run_sweep(
    consts: &PhysicalConstants,
    field: &PotentialField,
    spec: &SweepSpec,
) -> Result<SweepResult> {
    spec.validate(field)?;
    match spec.protocol {
        Protocol::Load => sweep_load(consts, field, spec),
        Protocol::Unload => sweep_unload(consts, field, spec),
        Protocol::Map2d => Err(Error::InvalidParameter(
            "two-dimensional maps run through map2d".into(),
        )),
        Protocol::SingleElectronCycle => Err(Error::InvalidParameter(
            "cycling runs through single_electron_cycle".into(),
        )),
    }
}

fn sweep_load(
    consts: &PhysicalConstants,
    field: &PotentialField,
    spec: &SweepSpec,
) -> Result<SweepResult> {
    let axis = &spec.swept_electrodes[0];
    let opts = spec.equilibrium_options();
    let points: Vec<SweepPoint> = axis
        .values()
        .par_iter()
        .enumerate()
        .map(|(idx, &v)| {
            let bias = spec.bias.with_voltage(&axis.name, v);
            match load_trap(consts, field, &bias, spec.seed, &opts) {
                Ok(loaded) => measure_point(
                    consts,
                    field,
                    &bias,
                    &bias,
                    idx,
                    &loaded.configuration,
                    spec,
                    None,
                ),
                Err(e) => error_point(idx, &bias, 0, e.to_string()),
            }
        })
        .collect();
    Ok(SweepResult {
        swept_names: spec.swept_names(),
        points,
        plateaus: Vec::new(),
    })
}

fn sweep_unload(
    consts: &PhysicalConstants,
    field: &PotentialField,
    spec: &SweepSpec,
) -> Result<SweepResult> {
    let axis = &spec.swept_electrodes[0];
    let return_v = spec.unload_return_voltage.expect("validated above");
    let return_bias = spec.bias.with_voltage(&axis.name, return_v);
    let opts = spec.equilibrium_options();

    // Fill once at the parked gate; everything after only removes.
    let initial = load_trap(consts, field, &return_bias, spec.seed, &opts)?;
    let mut survivors = initial.configuration.positions_um.clone();

    let mut points = Vec::with_capacity(axis.steps);
    for (idx, &v) in axis.values().iter().enumerate() {
        let excursion_bias = spec.bias.with_voltage(&axis.name, v);
        let (kept, note) = drop_unbound(consts, field, &excursion_bias, survivors.clone(), &opts);
        match minimize(consts, field, &return_bias, &kept, &opts) {
            Ok(cfg) => {
                let point = measure_point(
                    consts,
                    field,
                    &return_bias,
                    &excursion_bias,
                    idx,
                    &cfg,
                    spec,
                    note,
                );
                survivors = cfg.positions_um.clone();
                points.push(point);
            }
            Err(e) => {
                points.push(error_point(idx, &excursion_bias, kept.len(), e.to_string()));
                survivors = kept;
            }
        }
    }

    let mut result = SweepResult {
        swept_names: spec.swept_names(),
        points,
        plateaus: Vec::new(),
    };
    result.plateaus = detect_plateaus(&result, None).unwrap_or_default();
    Ok(result)
}

/// Remove electrons that are no longer held at this bias: any whose
/// equilibrium settles outside the search box (drained to the reservoir),
/// then, repeatedly, the most weakly bound one for as long as removing it
/// lowers the energy past the reservoir level. Returns the surviving
/// equilibrated positions and a note when the assessment was cut short.
fn drop_unbound(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    mut positions: Vec<[f64; 2]>,
    opts: &EquilibriumOptions,
) -> (Vec<[f64; 2]>, Option<String>) {
    let escape_level = -consts.e * opts.reservoir_potential;
    loop {
        if positions.is_empty() {
            return (positions, None);
        }
        let cfg = match minimize(consts, field, bias, &positions, opts) {
            Ok(cfg) => cfg,
            Err(Error::OutOfDomain(_, _)) | Err(Error::Unconfined(_)) | Err(Error::Singularity(_)) => {
                // The cluster cannot even be held inside the grid; shed
                // the loosest electron and try the rest.
                let w = weakest_index(consts, field, bias, &positions);
                positions.remove(w);
                continue;
            }
            Err(e) => return (positions, Some(e.to_string())),
        };

        if let Some(boxed) = opts.search_box {
            let inside: Vec<[f64; 2]> = cfg
                .positions_um
                .iter()
                .copied()
                .filter(|p| in_box(*p, boxed))
                .collect();
            if inside.len() < cfg.positions_um.len() {
                positions = inside;
                continue;
            }
        }

        if !cfg.converged {
            return (
                cfg.positions_um,
                Some(format!(
                    "binding assessment stopped on a stalled minimization, gradient {:.3e} J/um",
                    cfg.gradient_norm
                )),
            );
        }

        let w = weakest_index(consts, field, bias, &cfg.positions_um);
        let mut reduced = cfg.positions_um.clone();
        reduced.remove(w);
        let lowered = if reduced.is_empty() {
            Ok((0.0, Vec::new()))
        } else {
            minimize(consts, field, bias, &reduced, opts)
                .map(|c| (c.energy_j, c.positions_um))
        };
        match lowered {
            Ok((energy_without, positions_without)) => {
                let chemical_potential = cfg.energy_j - energy_without;
                if chemical_potential > escape_level {
                    positions = positions_without;
                    if positions.is_empty() {
                        return (positions, None);
                    }
                } else {
                    return (cfg.positions_um, None);
                }
            }
            Err(e) => {
                return (
                    cfg.positions_um,
                    Some(format!("binding assessment failed: {e}")),
                );
            }
        }
    }
}

fn in_box(p: [f64; 2], b: [f64; 4]) -> bool {
    p[0] >= b[0] && p[0] <= b[1] && p[1] >= b[2] && p[1] <= b[3]
}

/// Index of the electron with the highest energy attributed to it: its
/// gate energy plus every pair term it participates in. Removing that
/// electron at frozen positions lowers the total by exactly this amount.
fn weakest_index(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    positions: &[[f64; 2]],
) -> usize {
    let k_c = consts.coulomb_factor();
    let mut worst = 0usize;
    let mut worst_energy = f64::NEG_INFINITY;
    for (i, p) in positions.iter().enumerate() {
        let gate = match field.phi_at(bias, p[0], p[1]) {
            Ok(phi) => -consts.e * phi,
            Err(_) => f64::INFINITY,
        };
        let mut pairs = 0.0;
        for (j, q) in positions.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() * UM;
            pairs += k_c / d;
        }
        let total = gate + pairs;
        if total > worst_energy {
            worst_energy = total;
            worst = i;
        }
    }
    worst
}

/// Segment a sweep into runs of constant occupancy. Boundaries fall where
/// the shift jumps by more than the threshold or the recorded occupancy
/// changes. Without an explicit threshold one is derived from the data:
/// three times the median point-to-point shift difference, floored at a
/// thousandth of the largest difference so minimizer-level jitter on flat
/// stretches cannot masquerade as steps; if the trace is entirely flat,
/// only occupancy changes separate plateaus.
pub fn detect_plateaus(result: &SweepResult, threshold_hz: Option<f64>) -> Result<Vec<Plateau>> {
    let points = &result.points;
    if points.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "plateau detection needs at least 4 points, got {}",
            points.len()
        )));
    }
    let axis = result.swept_names.first().ok_or_else(|| {
        Error::InvalidParameter("result records no swept electrode".into())
    })?;

    let diffs: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].delta_f_hz - w[0].delta_f_hz).abs())
        .collect();
    let threshold = match threshold_hz {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => {
            return Err(Error::InvalidParameter(format!(
                "plateau threshold must be positive, got {t}"
            )));
        }
        None => default_jump_threshold(&diffs),
    };

    let mut plateaus = Vec::new();
    let mut first = 0usize;
    for i in 0..points.len() {
        let boundary = i + 1 == points.len()
            || diffs[i] > threshold
            || points[i + 1].n_e != points[i].n_e;
        if boundary {
            let run = &points[first..=i];
            let mean = run.iter().map(|p| p.delta_f_hz).sum::<f64>() / run.len() as f64;
            plateaus.push(Plateau {
                n_e: run[0].n_e,
                first_idx: run[0].idx,
                last_idx: run[run.len() - 1].idx,
                v_start: swept_voltage(&run[0], axis),
                v_stop: swept_voltage(&run[run.len() - 1], axis),
                delta_f_mean_hz: mean,
            });
            first = i + 1;
        }
    }
    Ok(plateaus)
}

fn swept_voltage(point: &SweepPoint, axis: &str) -> f64 {
    point.voltages.get(axis).copied().unwrap_or(f64::NAN)
}

fn default_jump_threshold(diffs: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = diffs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("shift differences are finite"));
    let median = if sorted.is_empty() {
        0.0
    } else {
        sorted[sorted.len() / 2]
    };
    let largest = sorted.last().copied().unwrap_or(0.0);
    let threshold = (3.0 * median).max(1e-3 * largest);
    if threshold > 0.0 {
        threshold
    } else {
        f64::INFINITY
    }
}

/// One point of a ridge traced across a 2D map: for a fixed first-axis
/// voltage, the second-axis voltage selecting the row's extremum. The
/// offset copy is the same point shifted by `RIDGE_OFFSET_V` for overlay
/// plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgePoint {
    pub axis0_v: f64,
    pub axis1_v: f64,
    pub axis1_v_offset: f64,
}

/// Grid output of `map2d`, row-major over (first axis, second axis),
/// with the soft-mode and shift-extremum ridges.
#[derive(Debug, Clone)]
pub struct Map2dResult {
    pub result: SweepResult,
    /// (first axis steps, second axis steps).
    pub shape: (usize, usize),
    /// Per first-axis value: where the lowest coupled mode is softest.
    pub omega_min_ridge: Vec<RidgePoint>,
    /// Per first-axis value: where the shift is most negative.
    pub delta_f_ridge: Vec<RidgePoint>,
}

/// Sweep two gates over a grid with the trap held at one electron
/// (loading capped at 1), and trace where each row's lowest coupled mode
/// and shift extremum sit. Points are independent and evaluated in
/// parallel; output order is row-major regardless of execution order.
pub fn map2d(
    consts: &PhysicalConstants,
    field: &PotentialField,
    spec: &SweepSpec,
) -> Result<Map2dResult> {
    spec.validate(field)?;
    if spec.protocol != Protocol::Map2d {
        return Err(Error::InvalidParameter(format!(
            "map2d requires the map2d protocol, got {}",
            protocol_name(spec.protocol)
        )));
    }
    let axis0 = &spec.swept_electrodes[0];
    let axis1 = &spec.swept_electrodes[1];
    let v0s = axis0.values();
    let v1s = axis1.values();
    let (n0, n1) = (v0s.len(), v1s.len());

    let mut opts = spec.equilibrium_options();
    opts.max_electrons = 1;

    let points: Vec<SweepPoint> = (0..n0 * n1)
        .into_par_iter()
        .map(|idx| {
            let (i0, i1) = (idx / n1, idx % n1);
            let bias = spec
                .bias
                .with_voltage(&axis0.name, v0s[i0])
                .with_voltage(&axis1.name, v1s[i1]);
            match load_trap(consts, field, &bias, spec.seed, &opts) {
                Ok(loaded) => measure_point(
                    consts,
                    field,
                    &bias,
                    &bias,
                    idx,
                    &loaded.configuration,
                    spec,
                    None,
                ),
                Err(e) => error_point(idx, &bias, 0, e.to_string()),
            }
        })
        .collect();

    let mut omega_min_ridge = Vec::with_capacity(n0);
    let mut delta_f_ridge = Vec::with_capacity(n0);
    for i0 in 0..n0 {
        let row = &points[i0 * n1..(i0 + 1) * n1];
        let usable = || {
            row.iter()
                .enumerate()
                .filter(|(_, p)| p.error.is_none() && p.n_e > 0)
        };
        let softest = usable().min_by(|a, b| {
            a.1.omega_min_over_2pi_hz
                .total_cmp(&b.1.omega_min_over_2pi_hz)
        });
        let deepest = usable().min_by(|a, b| a.1.delta_f_hz.total_cmp(&b.1.delta_f_hz));
        if let Some((i1, _)) = softest {
            omega_min_ridge.push(ridge_point(v0s[i0], v1s[i1]));
        }
        if let Some((i1, _)) = deepest {
            delta_f_ridge.push(ridge_point(v0s[i0], v1s[i1]));
        }
    }

    Ok(Map2dResult {
        result: SweepResult {
            swept_names: spec.swept_names(),
            points,
            plateaus: Vec::new(),
        },
        shape: (n0, n1),
        omega_min_ridge,
        delta_f_ridge,
    })
}

fn ridge_point(axis0_v: f64, axis1_v: f64) -> RidgePoint {
    RidgePoint {
        axis0_v,
        axis1_v,
        axis1_v_offset: axis1_v + RIDGE_OFFSET_V,
    }
}

/// One load/unload repetition: occupancy and shift after the fresh load,
/// then after the unload excursion and return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub loaded_n_e: usize,
    pub loaded_delta_f_hz: f64,
    pub empty_n_e: usize,
    pub empty_delta_f_hz: f64,
    /// The fresh load trapped exactly one electron.
    pub load_ok: bool,
    /// The excursion left the trap empty.
    pub unload_ok: bool,
}

impl CycleRecord {
    pub fn ok(&self) -> bool {
        self.load_ok && self.unload_ok
    }
}

/// Outcome of repeated cycling. `errors` counts failed checks, two per
/// repetition: one for the load half, one for the unload half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycles: Vec<CycleRecord>,
    pub errors: usize,
}

/// Alternate a fresh single-electron load with an unload excursion and
/// report both halves of every repetition. The swept electrode, when
/// present, provides the excursion (its stop value) and the parking
/// voltage (the return voltage if given, the ramp start otherwise); with
/// no swept electrode the trap is never emptied and every unload check
/// fails, which is reported, not raised.
pub fn single_electron_cycle(
    consts: &PhysicalConstants,
    field: &PotentialField,
    spec: &SweepSpec,
    repetitions: usize,
) -> Result<CycleReport> {
    spec.validate(field)?;
    if spec.protocol != Protocol::SingleElectronCycle {
        return Err(Error::InvalidParameter(format!(
            "cycling requires the single_electron_cycle protocol, got {}",
            protocol_name(spec.protocol)
        )));
    }
    let axis = spec.swept_electrodes.first();
    let load_bias = match axis {
        Some(a) => {
            let park = spec.unload_return_voltage.unwrap_or(a.start_v);
            spec.bias.with_voltage(&a.name, park)
        }
        None => spec.bias.clone(),
    };
    let opts = spec.equilibrium_options();

    let mut cycles = Vec::with_capacity(repetitions);
    let mut errors = 0usize;
    for _ in 0..repetitions {
        let (loaded_cfg, load_note) = match load_trap(consts, field, &load_bias, spec.seed, &opts)
        {
            Ok(l) => (l.configuration, None),
            Err(e) => (ElectronConfiguration::empty(), Some(e.to_string())),
        };
        let loaded_point = measure_point(
            consts,
            field,
            &load_bias,
            &load_bias,
            0,
            &loaded_cfg,
            spec,
            load_note,
        );
        let load_ok = loaded_cfg.n == 1 && loaded_point.error.is_none();

        let (empty_n, empty_df) = match axis {
            Some(a) => {
                let excursion = spec.bias.with_voltage(&a.name, a.stop_v);
                let (kept, note) =
                    drop_unbound(consts, field, &excursion, loaded_cfg.positions_um.clone(), &opts);
                match minimize(consts, field, &load_bias, &kept, &opts) {
                    Ok(cfg) => {
                        let p = measure_point(
                            consts, field, &load_bias, &load_bias, 0, &cfg, spec, note,
                        );
                        (cfg.n, p.delta_f_hz)
                    }
                    Err(_) => (kept.len(), 0.0),
                }
            }
            None => (loaded_cfg.n, loaded_point.delta_f_hz),
        };
        let unload_ok = empty_n == 0;

        errors += usize::from(!load_ok) + usize::from(!unload_ok);
        cycles.push(CycleRecord {
            loaded_n_e: loaded_cfg.n,
            loaded_delta_f_hz: loaded_point.delta_f_hz,
            empty_n_e: empty_n,
            empty_delta_f_hz: empty_df,
            load_ok,
            unload_ok,
        });
    }
    Ok(CycleReport { cycles, errors })
}

/// The CSV table for a sweep: one row per point, voltage columns in
/// alphabetical electrode order. Floats print in shortest round-trip
/// form, so rewriting the same result reproduces the same bytes.
pub fn points_csv(result: &SweepResult) -> String {
    let mut out = String::from("idx");
    let names: Vec<&String> = result
        .points
        .first()
        .map(|p| p.voltages.keys().collect())
        .unwrap_or_default();
    for name in &names {
        let _ = write!(out, ",{name}");
    }
    out.push_str(",n_e,delta_f_hz,omega_min_over_2pi_hz,stable\n");
    for p in &result.points {
        let _ = write!(out, "{}", p.idx);
        for name in &names {
            let _ = write!(out, ",{}", p.voltages[*name]);
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            p.n_e, p.delta_f_hz, p.omega_min_over_2pi_hz, p.stable
        );
    }
    out
}

fn run_log(spec: &SweepSpec, result: &SweepResult) -> String {
    let mut log = String::new();
    let _ = writeln!(log, "protocol: {}", protocol_name(spec.protocol));
    for s in &spec.swept_electrodes {
        let _ = writeln!(
            log,
            "swept: {} from {} to {} in {} steps",
            s.name, s.start_v, s.stop_v, s.steps
        );
    }
    let _ = writeln!(log, "seed: {}", spec.seed);
    let _ = writeln!(log, "points: {}", result.points.len());
    let flagged: Vec<&SweepPoint> = result.points.iter().filter(|p| p.error.is_some()).collect();
    let _ = writeln!(log, "flagged: {}", flagged.len());
    for p in &flagged {
        let _ = writeln!(log, "point {}: {}", p.idx, p.error.as_deref().unwrap_or(""));
    }
    if let (Some(first), Some(last)) = (result.points.first(), result.points.last()) {
        let _ = writeln!(log, "occupancy: first {} last {}", first.n_e, last.n_e);
    }
    let _ = writeln!(log, "plateaus: {}", result.plateaus.len());
    for p in &result.plateaus {
        let _ = writeln!(
            log,
            "plateau n_e={}: points {}..{} mean shift {} Hz",
            p.n_e, p.first_idx, p.last_idx, p.delta_f_mean_hz
        );
    }
    log
}

/// Write the run directory for a one-dimensional sweep: spec.json echoes
/// the input, points.csv holds the table, plateaus.json the segments,
/// log.txt a plain-text account. Nothing in the output depends on when
/// or where it ran.
pub fn write_run_dir(dir: &Path, spec: &SweepSpec, result: &SweepResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("spec.json"), spec)?;
    fs::write(dir.join("points.csv"), points_csv(result))?;
    write_json(&dir.join("plateaus.json"), &result.plateaus)?;
    fs::write(dir.join("log.txt"), run_log(spec, result))?;
    Ok(())
}

/// Run directory for a 2D map: the sweep files plus ridges.json carrying
/// the raw and offset ridge curves.
pub fn write_map2d_dir(dir: &Path, spec: &SweepSpec, map: &Map2dResult) -> Result<()> {
    write_run_dir(dir, spec, &map.result)?;
    let ridges = serde_json::json!({
        "shape": [map.shape.0, map.shape.1],
        "omega_min": map.omega_min_ridge,
        "delta_f_extremum": map.delta_f_ridge,
    });
    write_json(&dir.join("ridges.json"), &ridges)?;
    Ok(())
}

/// Run directory for repeated cycling: spec.json, cycles.json with every
/// repetition, log.txt with the tally.
pub fn write_cycle_dir(dir: &Path, spec: &SweepSpec, report: &CycleReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("spec.json"), spec)?;
    write_json(&dir.join("cycles.json"), report)?;
    let mut log = String::new();
    let _ = writeln!(log, "protocol: {}", protocol_name(spec.protocol));
    let _ = writeln!(log, "seed: {}", spec.seed);
    let _ = writeln!(log, "repetitions: {}", report.cycles.len());
    let _ = writeln!(log, "errors: {}", report.errors);
    for (i, c) in report.cycles.iter().enumerate() {
        let _ = writeln!(
            log,
            "cycle {i}: loaded n={} shift {} Hz, after unload n={} shift {} Hz, ok={}",
            c.loaded_n_e,
            c.loaded_delta_f_hz,
            c.empty_n_e,
            c.empty_delta_f_hz,
            c.ok()
        );
    }
    fs::write(dir.join("log.txt"), log)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
