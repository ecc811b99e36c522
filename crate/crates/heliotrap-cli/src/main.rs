//! Command line driver for the simulation chain. Every subcommand reads a
//! JSON config, runs one stage (or a whole sweep protocol), and writes a
//! self-contained output directory whose bytes depend only on the config
//! and the seed, never on wall time or thread count.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use heliotrap::equilibrium::{find_equilibrium, load_trap, EquilibriumOptions, LoadResult};
use heliotrap::harness::{
    map2d, run_sweep, single_electron_cycle, write_cycle_dir, write_map2d_dir, write_run_dir,
    SweepSpec,
};
use heliotrap::modes::{couplings, eigenmodes, ResonatorMode, DEFAULT_GAMMA_OVER_2PI_HZ};
use heliotrap::potential::io::{load_field, save_field};
use heliotrap::potential::laplace::{solve_unit_potentials, ElectrodeGeometry2D};
use heliotrap::potential::synthetic::device_field;
use heliotrap::response::{fit_s11, frequency_shift, synthesize_trace, ReflectionTrace};
use heliotrap::{
    BiasConfig, ElectronConfiguration, ModeSpectrum, PhysicalConstants, PotentialField,
    ResonatorParams,
};

const TAU: f64 = std::f64::consts::TAU;

/// Simulate the charge-sensing chain for electrons on liquid helium:
/// electrode potentials, trapped-electron equilibria, vibrational modes,
/// and the resonator's dispersive readout.
#[derive(Parser)]
#[command(name = "heliotrap", version, arg_required_else_help = true)]
struct Cli {
    /// JSON config for the chosen subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the config's random seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Worker threads for parallel sweeps; 0 means one per core.
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve electrode unit potentials on a rectangular mesh.
    #[command(name = "solve-potential")]
    SolvePotential,
    /// Find the trapped electron configuration at a fixed bias.
    #[command(name = "equilibrium")]
    Equilibrium,
    /// Vibrational spectrum and resonator couplings at a fixed bias.
    #[command(name = "modes")]
    Modes,
    /// Synthesize a reflection trace from a dispersive shift.
    #[command(name = "response")]
    Response,
    /// Voltage sweep under the load or unload protocol.
    #[command(name = "sweep")]
    Sweep,
    /// Two-axis single-electron shift map with ridge extraction.
    #[command(name = "map2d")]
    Map2d,
    /// Repeated single-electron load/unload cycling.
    #[command(name = "cycle")]
    Cycle,
    /// Fit the resonator model to a reflection trace.
    #[command(name = "fit-s11")]
    FitS11,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match cli.command {
        Command::SolvePotential => cmd_solve_potential(cli),
        Command::Equilibrium => cmd_equilibrium(cli),
        Command::Modes => cmd_modes(cli),
        Command::Response => cmd_response(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::Map2d => cmd_map2d(cli),
        Command::Cycle => cmd_cycle(cli),
        Command::FitS11 => cmd_fit_s11(cli),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn read_config<T: DeserializeOwned>(cli: &Cli) -> Result<T> {
    let path = cli
        .config
        .as_deref()
        .context("--config <file> is required")?;
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli.out.as_deref().context("--out <dir> is required")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Where the unit potentials come from: the built-in demonstration device,
/// a directory of `.alpha` grid files, or explicit file paths. Exactly one
/// source must be named; a missing `field` key means the device.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSource {
    #[serde(default)]
    device: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grids: Option<Vec<PathBuf>>,
}

impl Default for FieldSource {
    fn default() -> Self {
        FieldSource {
            device: true,
            grid_dir: None,
            grids: None,
        }
    }
}

impl FieldSource {
    fn build(&self) -> Result<PotentialField> {
        let picks =
            self.device as u8 + self.grid_dir.is_some() as u8 + self.grids.is_some() as u8;
        if picks != 1 {
            bail!(
                "field must name exactly one source: \"device\": true, \"grid_dir\", or \"grids\""
            );
        }
        if self.device {
            return device_field().context("building the built-in device field");
        }
        if let Some(dir) = &self.grid_dir {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "alpha"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                bail!("{} holds no .alpha grid files", dir.display());
            }
            return load_field(&paths)
                .with_context(|| format!("loading grids from {}", dir.display()));
        }
        let paths = self.grids.as_ref().unwrap();
        load_field(paths).context("loading grid files")
    }
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA_OVER_2PI_HZ
}

// ---------------------------------------------------------------------------
// solve-potential

fn cmd_solve_potential(cli: &Cli) -> Result<()> {
    let layout: ElectrodeGeometry2D = read_config(cli)?;
    let dir = out_dir(cli)?;
    let field = solve_unit_potentials(&layout).context("relaxation failed")?;
    let paths = save_field(&field, dir)?;
    write_json(&dir.join("spec.json"), &layout)?;

    let geom = field.geometry();
    let mut log = String::from("stage: solve-potential\n");
    log.push_str(&format!(
        "mesh: {} x {} nodes, spacing {} x {} um\n",
        geom.nx, geom.ny, geom.dx, geom.dy
    ));
    log.push_str(&format!("surface height: {} um\n", layout.surface_height_um));
    for path in &paths {
        log.push_str(&format!(
            "grid: {}\n",
            path.file_name().unwrap_or_default().to_string_lossy()
        ));
    }
    write_text(&dir.join("log.txt"), &log)?;
    println!(
        "wrote {} unit potential grids to {}",
        paths.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// equilibrium

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EquilibriumConfig {
    #[serde(default)]
    field: FieldSource,
    bias: BiasConfig,
    /// Fixed electron number; absent means fill from the reservoir until
    /// the next electron is no longer favorable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    options: EquilibriumOptions,
}

fn cmd_equilibrium(cli: &Cli) -> Result<()> {
    let mut cfg: EquilibriumConfig = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = out_dir(cli)?;
    let consts = PhysicalConstants::default();
    let field = cfg.field.build()?;

    let (configuration, load): (ElectronConfiguration, Option<LoadResult>) = match cfg.n {
        Some(n) => (
            find_equilibrium(&consts, &field, &cfg.bias, n, cfg.seed, &cfg.options)?,
            None,
        ),
        None => {
            let result = load_trap(&consts, &field, &cfg.bias, cfg.seed, &cfg.options)?;
            (result.configuration.clone(), Some(result))
        }
    };

    write_json(&dir.join("spec.json"), &cfg)?;
    write_json(&dir.join("equilibrium.json"), &configuration)?;
    let mut log = String::from("stage: equilibrium\n");
    log.push_str(&format!("electrons: {}\n", configuration.n));
    log.push_str(&format!("energy: {:e} J\n", configuration.energy_j));
    log.push_str(&format!("converged: {}\n", configuration.converged));
    if let Some(load) = &load {
        write_json(&dir.join("load.json"), load)?;
        log.push_str(&format!("capped: {}\n", load.capped));
        for step in &load.steps {
            log.push_str(&format!(
                "filled n {} at chemical potential {:e} J\n",
                step.n, step.chemical_potential_j
            ));
        }
    }
    write_text(&dir.join("log.txt"), &log)?;
    println!(
        "{} electrons, energy {:e} J, converged {}",
        configuration.n, configuration.energy_j, configuration.converged
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// modes

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Drive {
    #[default]
    Differential,
    Common,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModesConfig {
    #[serde(default)]
    field: FieldSource,
    bias: BiasConfig,
    /// Fixed electron number; absent means fill from the reservoir.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Pinned electron positions, bypassing the equilibrium search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions_um: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_gamma")]
    gamma_over_2pi_hz: f64,
    #[serde(default)]
    resonator: ResonatorParams,
    #[serde(default)]
    drive: Drive,
    #[serde(default)]
    options: EquilibriumOptions,
}

fn cmd_modes(cli: &Cli) -> Result<()> {
    let mut cfg: ModesConfig = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = out_dir(cli)?;
    let consts = PhysicalConstants::default();
    let field = cfg.field.build()?;

    let configuration = match (&cfg.positions_um, cfg.n) {
        (Some(positions), _) => ElectronConfiguration::pinned(positions.clone()),
        (None, Some(n)) => find_equilibrium(&consts, &field, &cfg.bias, n, cfg.seed, &cfg.options)?,
        (None, None) => {
            load_trap(&consts, &field, &cfg.bias, cfg.seed, &cfg.options)?.configuration
        }
    };

    let spectrum = if configuration.n == 0 {
        ModeSpectrum::empty()
    } else {
        let bare = eigenmodes(
            &consts,
            &field,
            &cfg.bias,
            &configuration,
            TAU * cfg.gamma_over_2pi_hz,
        )?;
        let mode = match cfg.drive {
            Drive::Differential => ResonatorMode::differential(&field, &configuration.positions_um)?,
            Drive::Common => ResonatorMode::common(&field, &configuration.positions_um)?,
        };
        couplings(
            &consts,
            &bare,
            &mode,
            cfg.resonator.c_total(),
            cfg.resonator.gamma_scale,
        )?
    };
    let delta_f = frequency_shift(&spectrum, &cfg.resonator);

    write_json(&dir.join("spec.json"), &cfg)?;
    write_json(&dir.join("equilibrium.json"), &configuration)?;
    write_json(&dir.join("modes.json"), &spectrum)?;
    let mut log = String::from("stage: modes\n");
    log.push_str(&format!("electrons: {}\n", configuration.n));
    log.push_str(&format!("stable: {}\n", spectrum.stable));
    if let Some(lowest) = spectrum.omegas.first() {
        log.push_str(&format!("lowest mode: {:e} Hz\n", lowest / TAU));
    }
    if let Some(highest) = spectrum.omegas.last() {
        log.push_str(&format!("highest mode: {:e} Hz\n", highest / TAU));
    }
    let g_max = spectrum.couplings.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    log.push_str(&format!("largest coupling: {:e} Hz\n", g_max / TAU));
    log.push_str(&format!("frequency shift: {:e} Hz\n", delta_f));
    write_text(&dir.join("log.txt"), &log)?;
    println!(
        "{} electrons, {} modes, shift {:e} Hz",
        configuration.n,
        spectrum.omegas.len(),
        delta_f
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// response

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseConfig {
    #[serde(default)]
    resonator: ResonatorParams,
    /// Dispersive shift to impose on the trace, Hz. Absent means compute
    /// it from the field, bias, and occupancy below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta_f_hz: Option<f64>,
    #[serde(default)]
    field: FieldSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<BiasConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default = "default_gamma")]
    gamma_over_2pi_hz: f64,
    #[serde(default)]
    options: EquilibriumOptions,
    /// Probe span; absent means `span_linewidths` half-widths around the
    /// bare resonance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f_start_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f_stop_hz: Option<f64>,
    #[serde(default = "default_span")]
    span_linewidths: f64,
    #[serde(default = "default_points")]
    points: usize,
    /// Gaussian noise scale per quadrature, reflection units.
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default)]
    seed: u64,
}

fn default_span() -> f64 {
    1.5
}

fn default_points() -> usize {
    2001
}

#[derive(Serialize)]
struct ResponseSummary {
    delta_f_hz: f64,
    f_start_hz: f64,
    f_stop_hz: f64,
    points: usize,
    noise_sigma: f64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_e: Option<usize>,
}

fn cmd_response(cli: &Cli) -> Result<()> {
    let mut cfg: ResponseConfig = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = out_dir(cli)?;
    let consts = PhysicalConstants::default();

    let (delta_f, n_e) = match cfg.delta_f_hz {
        Some(df) => (df, None),
        None => {
            let bias = cfg
                .bias
                .as_ref()
                .context("config needs either delta_f_hz or a bias to compute it from")?;
            let field = cfg.field.build()?;
            let configuration = match cfg.n {
                Some(n) => find_equilibrium(&consts, &field, bias, n, cfg.seed, &cfg.options)?,
                None => load_trap(&consts, &field, bias, cfg.seed, &cfg.options)?.configuration,
            };
            let df = if configuration.n == 0 {
                0.0
            } else {
                let bare = eigenmodes(
                    &consts,
                    &field,
                    bias,
                    &configuration,
                    TAU * cfg.gamma_over_2pi_hz,
                )?;
                let mode = ResonatorMode::differential(&field, &configuration.positions_um)?;
                let filled = couplings(
                    &consts,
                    &bare,
                    &mode,
                    cfg.resonator.c_total(),
                    cfg.resonator.gamma_scale,
                )?;
                frequency_shift(&filled, &cfg.resonator)
            };
            (df, Some(configuration.n))
        }
    };

    let linewidth = cfg.resonator.f_r_hz / cfg.resonator.q_t();
    let f_start = cfg
        .f_start_hz
        .unwrap_or(cfg.resonator.f_r_hz - cfg.span_linewidths * linewidth);
    let f_stop = cfg
        .f_stop_hz
        .unwrap_or(cfg.resonator.f_r_hz + cfg.span_linewidths * linewidth);
    let trace = synthesize_trace(
        &cfg.resonator,
        delta_f,
        f_start,
        f_stop,
        cfg.points,
        cfg.noise_sigma,
        cfg.seed,
    )?;

    write_json(&dir.join("spec.json"), &cfg)?;
    write_text(&dir.join("trace.csv"), &trace.to_csv_string())?;
    write_json(
        &dir.join("response.json"),
        &ResponseSummary {
            delta_f_hz: delta_f,
            f_start_hz: f_start,
            f_stop_hz: f_stop,
            points: cfg.points,
            noise_sigma: cfg.noise_sigma,
            seed: cfg.seed,
            n_e,
        },
    )?;
    let mut log = String::from("stage: response\n");
    if let Some(n) = n_e {
        log.push_str(&format!("electrons: {n}\n"));
    }
    log.push_str(&format!("shift: {delta_f:e} Hz\n"));
    log.push_str(&format!(
        "span: {:e} to {:e} Hz in {} points\n",
        f_start, f_stop, cfg.points
    ));
    log.push_str(&format!("noise sigma: {}\n", cfg.noise_sigma));
    write_text(&dir.join("log.txt"), &log)?;
    println!(
        "trace of {} points, shift {:e} Hz, wrote {}",
        cfg.points,
        delta_f,
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-s11

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    /// Reflection trace CSV with header freq_hz,re_s11,im_s11.
    trace: PathBuf,
    #[serde(default)]
    guess: ResonatorParams,
}

fn cmd_fit_s11(cli: &Cli) -> Result<()> {
    let cfg: FitConfig = read_config(cli)?;
    let dir = out_dir(cli)?;
    let file = fs::File::open(&cfg.trace)
        .with_context(|| format!("opening {}", cfg.trace.display()))?;
    let trace = ReflectionTrace::read_csv(BufReader::new(file))
        .with_context(|| format!("parsing {}", cfg.trace.display()))?;
    let report = fit_s11(&trace, &cfg.guess)?;

    write_json(&dir.join("spec.json"), &cfg)?;
    write_json(&dir.join("fit.json"), &report)?;
    let mut log = String::from("stage: fit-s11\n");
    log.push_str(&format!("points: {}\n", trace.len()));
    log.push_str(&format!("f_r: {:e} Hz\n", report.f_r_hz));
    log.push_str(&format!("q_i: {}\n", report.q_i));
    log.push_str(&format!("q_c: {}\n", report.q_c));
    log.push_str(&format!("converged: {}\n", report.converged));
    write_text(&dir.join("log.txt"), &log)?;
    println!(
        "f_r {:e} Hz, q_i {:.1}, q_c {:.1}, converged {}",
        report.f_r_hz, report.q_i, report.q_c, report.converged
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep, map2d, cycle

#[derive(Serialize, Deserialize)]
struct SweepConfig {
    #[serde(default)]
    field: FieldSource,
    #[serde(flatten)]
    spec: SweepSpec,
}

fn cmd_sweep(cli: &Cli) -> Result<()> {
    let mut cfg: SweepConfig = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.spec.seed = seed;
    }
    let dir = out_dir(cli)?;
    let consts = PhysicalConstants::default();
    let field = cfg.field.build()?;
    let result = run_sweep(&consts, &field, &cfg.spec)?;
    write_run_dir(dir, &cfg.spec, &result)?;
    let flagged = result.points.iter().filter(|p| p.error.is_some()).count();
    println!(
        "{} points, {} plateaus, {} flagged, wrote {}",
        result.points.len(),
        result.plateaus.len(),
        flagged,
        dir.display()
    );
    Ok(())
}

fn cmd_map2d(cli: &Cli) -> Result<()> {
    let mut cfg: SweepConfig = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.spec.seed = seed;
    }
    let dir = out_dir(cli)?;
    let consts = PhysicalConstants::default();
    let field = cfg.field.build()?;
    let map = map2d(&consts, &field, &cfg.spec)?;
    write_map2d_dir(dir, &cfg.spec, &map)?;
    let flagged = map
        .result
        .points
        .iter()
        .filter(|p| p.error.is_some())
        .count();
    println!(
        "{} x {} map, {} flagged, wrote {}",
        map.shape.0,
        map.shape.1,
        flagged,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CycleConfig {
    #[serde(default)]
    field: FieldSource,
    #[serde(default = "default_repetitions")]
    repetitions: usize,
    #[serde(flatten)]
    spec: SweepSpec,
}

fn default_repetitions() -> usize {
    20
}

fn cmd_cycle(cli: &Cli) -> Result<()> {
    let mut cfg: CycleConfig = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.spec.seed = seed;
    }
    let dir = out_dir(cli)?;
    let consts = PhysicalConstants::default();
    let field = cfg.field.build()?;
    let report = single_electron_cycle(&consts, &field, &cfg.spec, cfg.repetitions)?;
    write_cycle_dir(dir, &cfg.spec, &report)?;
    println!(
        "{} repetitions, {} errors, wrote {}",
        report.cycles.len(),
        report.errors,
        dir.display()
    );
    Ok(())
}
