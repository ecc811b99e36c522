//! Few-electron equilibria in a gated trap.
//!
//! The energy of N electrons pinned to the helium surface is
//! U = Σᵢ (-e)·φ(rᵢ) + Σᵢ<ⱼ e²/(4πε₀ dᵢⱼ): gate attraction plus pairwise
//! Coulomb repulsion. Equilibria are local minima of U found by
//! backtracking gradient descent warmed into a BFGS refinement, with
//! multi-start over seeded ring layouts when no good starting guess
//! exists. Positions are micrometers, energies joules, gradients J/μm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, UM};
use crate::error::{Error, Result};
use crate::potential::{BiasConfig, PotentialField};

/// Electron positions with the energy and convergence state of the search
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectronConfiguration {
    pub n: usize,
    pub positions_um: Vec<[f64; 2]>,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    pub converged: bool,
    /// Largest gradient component magnitude at the returned positions,
    /// J/μm.
    pub gradient_norm: f64,
}

impl ElectronConfiguration {
    /// Empty trap.
    pub fn empty() -> Self {
        ElectronConfiguration {
            n: 0,
            positions_um: Vec::new(),
            energy_j: 0.0,
            converged: true,
            gradient_norm: 0.0,
        }
    }

    /// Adopt externally chosen positions for mode studies without running
    /// a minimization. Energy and gradient fields are zeroed, not
    /// computed; the configuration is marked converged by fiat.
    pub fn pinned(positions_um: Vec<[f64; 2]>) -> Self {
        ElectronConfiguration {
            n: positions_um.len(),
            positions_um,
            energy_j: 0.0,
            converged: true,
            gradient_norm: 0.0,
        }
    }
}

/// Knobs for the minimizer and the loading rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquilibriumOptions {
    /// Convergence threshold as a fraction of the natural force scale
    /// e·max|V|/μm.
    pub gradient_tolerance_scale: f64,
    /// Iteration cap for one descent.
    pub max_iterations: usize,
    /// Independent starts tried by `find_equilibrium`.
    pub restarts: usize,
    /// Pair separations below this are treated as unphysical, μm.
    pub min_separation_um: f64,
    /// Electrochemical level of the reservoir feeding the trap, volts;
    /// loading continues while the next electron's chemical potential
    /// stays at or below -e·(this).
    pub reservoir_potential: f64,
    /// Hard cap on the electron number during loading.
    pub max_electrons: usize,
    /// Restrict the trap-center search to (xmin, xmax, ymin, ymax), μm.
    pub search_box: Option<[f64; 4]>,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            gradient_tolerance_scale: 1e-12,
            max_iterations: 20_000,
            restarts: 8,
            min_separation_um: 1e-3,
            reservoir_potential: 0.0,
            max_electrons: 100,
            search_box: None,
        }
    }
}

/// Total energy of the configuration, joules. Errors if any electron is
/// outside the evaluable interior or a pair sits closer than the minimum
/// separation.
pub fn total_energy(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    positions_um: &[[f64; 2]],
) -> Result<f64> {
    let opts = EquilibriumOptions::default();
    match evaluate(consts, field, bias, positions_um, &opts)? {
        Feasibility::Ok(energy, _) => Ok(energy),
        Feasibility::TooClose(d) => Err(Error::Singularity(d)),
        Feasibility::Outside(x, y) => Err(Error::OutOfDomain(x, y)),
    }
}

/// Energy plus its gradient with respect to every coordinate, J and J/μm.
pub fn energy_and_gradient(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    positions_um: &[[f64; 2]],
) -> Result<(f64, Vec<[f64; 2]>)> {
    let opts = EquilibriumOptions::default();
    match evaluate(consts, field, bias, positions_um, &opts)? {
        Feasibility::Ok(energy, grad) => {
            let pairs = grad.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            Ok((energy, pairs))
        }
        Feasibility::TooClose(d) => Err(Error::Singularity(d)),
        Feasibility::Outside(x, y) => Err(Error::OutOfDomain(x, y)),
    }
}

enum Feasibility {
    Ok(f64, Vec<f64>),
    TooClose(f64),
    Outside(f64, f64),
}

/// Energy and flattened gradient, distinguishing recoverable infeasibility
/// (used by the line search) from hard errors.
fn evaluate(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    positions_um: &[[f64; 2]],
    opts: &EquilibriumOptions,
) -> Result<Feasibility> {
    let n = positions_um.len();
    let mut energy = 0.0;
    let mut grad = vec![0.0f64; 2 * n];

    let (xmin, xmax, ymin, ymax) = field.geometry().interior();
    for (i, p) in positions_um.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::NonFinite(format!("position of electron {i}")));
        }
        if p[0] < xmin || p[0] > xmax || p[1] < ymin || p[1] > ymax {
            return Ok(Feasibility::Outside(p[0], p[1]));
        }
        let (phi, gphi, _) = field.phi_full(bias, p[0], p[1])?;
        energy += -consts.e * phi;
        grad[2 * i] += -consts.e * gphi[0];
        grad[2 * i + 1] += -consts.e * gphi[1];
    }

    let k_c = consts.coulomb_factor();
    for i in 0..n {
        for j in i + 1..n {
            let dx = positions_um[i][0] - positions_um[j][0];
            let dy = positions_um[i][1] - positions_um[j][1];
            let d_um = (dx * dx + dy * dy).sqrt();
            if d_um < opts.min_separation_um {
                return Ok(Feasibility::TooClose(d_um));
            }
            let d_m = d_um * UM;
            energy += k_c / d_m;
            // d(k/d)/dx_i = -k·Δx / d³, converted to per-μm.
            let f = -k_c * UM / (d_m * d_m * d_m) * UM;
            grad[2 * i] += f * dx;
            grad[2 * i + 1] += f * dy;
            grad[2 * j] -= f * dx;
            grad[2 * j + 1] -= f * dy;
        }
    }
    Ok(Feasibility::Ok(energy, grad))
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn gradient_tolerance(consts: &PhysicalConstants, bias: &BiasConfig, opts: &EquilibriumOptions) -> f64 {
    let vmax = bias
        .voltages
        .values()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-6);
    opts.gradient_tolerance_scale * consts.e * vmax
}

/// Relax the given start to a local energy minimum. Infeasible trial steps
/// (outside the grid interior or pair coincidence) are rejected by the
/// line search; if the start itself is infeasible this is an error.
pub fn minimize(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    start_um: &[[f64; 2]],
    opts: &EquilibriumOptions,
) -> Result<ElectronConfiguration> {
    bias.validate()?;
    let n = start_um.len();
    if n == 0 {
        return Ok(ElectronConfiguration::empty());
    }
    let tol = gradient_tolerance(consts, bias, opts);

    let mut x: Vec<f64> = start_um.iter().flat_map(|p| [p[0], p[1]]).collect();
    let (mut f, mut g) = match evaluate(consts, field, bias, &unflatten(&x), opts)? {
        Feasibility::Ok(f, g) => (f, g),
        Feasibility::TooClose(d) => return Err(Error::Singularity(d)),
        Feasibility::Outside(x, y) => return Err(Error::OutOfDomain(x, y)),
    };

    let dim = 2 * n;
    // Inverse-Hessian estimate for the quasi-Newton stage.
    let mut h: Option<Vec<f64>> = None;
    let mut iterations = 0usize;
    // Trial displacement scale for the first steps, μm.
    let step_scale = 0.02;

    while iterations < opts.max_iterations {
        let gnorm = max_abs(&g);
        if gnorm <= tol {
            return Ok(finish(&x, f, true, gnorm));
        }
        iterations += 1;

        // Search direction: steepest descent until a curvature estimate
        // exists, BFGS afterwards.
        let mut d: Vec<f64> = match &h {
            None => {
                let g2 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                g.iter().map(|v| -v * step_scale / g2).collect()
            }
            Some(hm) => {
                let mut d = vec![0.0; dim];
                for r in 0..dim {
                    let mut acc = 0.0;
                    for c in 0..dim {
                        acc += hm[r * dim + c] * g[c];
                    }
                    d[r] = -acc;
                }
                d
            }
        };
        let mut gd: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(gd < 0.0) {
            // Curvature estimate went bad; fall back to scaled descent.
            let g2 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            d = g.iter().map(|v| -v * step_scale / g2).collect();
            gd = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            h = None;
        }

        // Backtracking Armijo line search that treats infeasible points as
        // unacceptable. The acceptance test carries a small floating allowance
        // of 1e-12·|f|: close to the minimum the true decrease of one step
        // drops below the resolution of the total energy (which includes a
        // large gate-attraction offset), and without the allowance the
        // search would stall with the gradient still well above tolerance.
        let mut alpha = 1.0f64;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            match evaluate(consts, field, bias, &unflatten(&trial), opts)? {
                Feasibility::Ok(ft, gt) if ft <= f + 1e-4 * alpha * gd + 1e-12 * f.abs() => {
                    accepted = Some((trial, ft, gt, alpha));
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        let Some((xt, ft, gt, alpha)) = accepted else {
            // No acceptable step along this direction: either converged to
            // the floating-point floor of the landscape or pinned against
            // the feasible set's edge.
            let gnorm = max_abs(&g);
            return Ok(finish(&x, f, gnorm <= tol, gnorm));
        };

        let s: Vec<f64> = d.iter().map(|di| alpha * di).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();

        if sy > 1e-12 * ss.sqrt() * yy.sqrt() && yy > 0.0 {
            let rho = 1.0 / sy;
            let hm = h.get_or_insert_with(|| {
                // Scale the identity to the measured curvature.
                let gamma = sy / yy;
                let mut m = vec![0.0; dim * dim];
                for i in 0..dim {
                    m[i * dim + i] = gamma;
                }
                m
            });
            // H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
            let mut hy = vec![0.0; dim];
            for r in 0..dim {
                let mut acc = 0.0;
                for c in 0..dim {
                    acc += hm[r * dim + c] * y[c];
                }
                hy[r] = acc;
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for r in 0..dim {
                for c in 0..dim {
                    hm[r * dim + c] += -rho * (s[r] * hy[c] + hy[r] * s[c])
                        + rho * rho * yhy * s[r] * s[c]
                        + rho * s[r] * s[c];
                }
            }
        } else {
            h = None;
        }

        x = xt;
        f = ft;
        g = gt;
    }

    let gnorm = max_abs(&g);
    Ok(finish(&x, f, gnorm <= tol, gnorm))
}

fn unflatten(x: &[f64]) -> Vec<[f64; 2]> {
    x.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

fn finish(x: &[f64], energy: f64, converged: bool, gradient_norm: f64) -> ElectronConfiguration {
    let positions = unflatten(x);
    ElectronConfiguration {
        n: positions.len(),
        positions_um: positions,
        energy_j: energy,
        converged,
        gradient_norm,
    }
}

/// Grid node with the highest potential, searched over the evaluable
/// interior (optionally restricted to a box), μm.
pub fn trap_center(
    field: &PotentialField,
    bias: &BiasConfig,
    search_box: Option<[f64; 4]>,
) -> Result<[f64; 2]> {
    let geom = field.geometry();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = geom.interior();
    if let Some([bx0, bx1, by0, by1]) = search_box {
        xmin = xmin.max(bx0);
        xmax = xmax.min(bx1);
        ymin = ymin.max(by0);
        ymax = ymax.min(by1);
    }
    if !(xmin < xmax && ymin < ymax) {
        return Err(Error::Geometry("trap search box is empty".into()));
    }

    let mut weighted: Vec<(f64, &crate::potential::UnitPotentialGrid)> = Vec::new();
    for g in field.grids() {
        weighted.push((bias.voltage_for(g.electrode())?, g));
    }

    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    for j in 0..geom.ny {
        let y = geom.node_y(j);
        if y < ymin || y > ymax {
            continue;
        }
        for i in 0..geom.nx {
            let x = geom.node_x(i);
            if x < xmin || x > xmax {
                continue;
            }
            let phi: f64 = weighted.iter().map(|(v, g)| v * g.node(i, j)).sum();
            if phi > best.0 {
                best = (phi, [x, y]);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Geometry("no evaluable node in the trap search box".into()));
    }
    Ok(best.1)
}

/// Characteristic neighbor spacing for start layouts, μm: the reservoir's
/// Wigner spacing under the bottom-gate bias when it is positive, a fixed
/// fallback otherwise.
fn start_spacing(consts: &PhysicalConstants, bias: &BiasConfig) -> f64 {
    let v_bottom = bias.voltages.get("bottom").copied().unwrap_or(0.0);
    match crate::potential::reservoir_density(consts, v_bottom, 0.7) {
        Ok(per_cm2) if per_cm2 > 0.0 => {
            let per_m2 = per_cm2 * 1e4;
            (1.0 / per_m2.sqrt()) / UM
        }
        _ => 0.2,
    }
}

fn clamp_into(geom_interior: (f64, f64, f64, f64), p: [f64; 2]) -> [f64; 2] {
    let (xmin, xmax, ymin, ymax) = geom_interior;
    let pad_x = 1e-6 * (xmax - xmin);
    let pad_y = 1e-6 * (ymax - ymin);
    [
        p[0].clamp(xmin + pad_x, xmax - pad_x),
        p[1].clamp(ymin + pad_y, ymax - pad_y),
    ]
}

/// Ring start layout around the trap center, jittered per restart.
fn ring_start(
    center: [f64; 2],
    n: usize,
    spacing: f64,
    restart: usize,
    rng: &mut ChaCha8Rng,
    interior: (f64, f64, f64, f64),
) -> Vec<[f64; 2]> {
    let radius_scale = [1.0, 0.5, 0.75, 1.5, 1.0, 0.6, 1.2, 2.0][restart % 8];
    let radius = 0.5 * spacing * (n as f64).sqrt() * radius_scale;
    let jitter = if restart == 0 { 0.0 } else { 0.15 * spacing };
    (0..n)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64;
            let r = if n == 1 { 0.0 } else { radius };
            let dx = jitter * (rng.gen::<f64>() - 0.5) * 2.0;
            let dy = jitter * (rng.gen::<f64>() - 0.5) * 2.0;
            clamp_into(
                interior,
                [center[0] + r * angle.cos() + dx, center[1] + r * angle.sin() + dy],
            )
        })
        .collect()
}

/// Find the lowest-energy N-electron equilibrium reachable from seeded
/// ring starts. Errors with `Unconfined` when every start fails to settle,
/// which is the signature of a bias that holds no N-electron trap.
pub fn find_equilibrium(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    n: usize,
    seed: u64,
    opts: &EquilibriumOptions,
) -> Result<ElectronConfiguration> {
    bias.validate()?;
    if n == 0 {
        return Ok(ElectronConfiguration::empty());
    }
    let center = trap_center(field, bias, opts.search_box)?;
    let spacing = start_spacing(consts, bias).max(10.0 * opts.min_separation_um);
    let interior = field.geometry().interior();

    let mut best: Option<ElectronConfiguration> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(restart as u64)));
        let start = ring_start(center, n, spacing, restart, &mut rng, interior);
        let candidate = match minimize(consts, field, bias, &start, opts) {
            Ok(c) => c,
            Err(Error::Singularity(_)) | Err(Error::OutOfDomain(_, _)) => continue,
            Err(e) => return Err(e),
        };
        if candidate.converged
            && best.as_ref().map_or(true, |b| candidate.energy_j < b.energy_j)
        {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| {
        Error::Unconfined(format!("no converged {n}-electron equilibrium from any start"))
    })
}

/// One increment of the loading record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadStep {
    pub n: usize,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    /// U(n) - U(n-1), joules.
    #[serde(rename = "chemical_potential_J")]
    pub chemical_potential_j: f64,
}

/// Result of filling the trap from the reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadResult {
    /// Final accepted configuration; `n == 0` when even the first electron
    /// is not favorable.
    pub configuration: ElectronConfiguration,
    /// Accepted increments in order.
    pub steps: Vec<LoadStep>,
    /// True when loading stopped at the electron cap rather than at the
    /// thermodynamic stopping rule.
    pub capped: bool,
}

/// Fill the trap one electron at a time: each increment is accepted while
/// the chemical potential µ(N) = U(N) - U(N-1) stays at or below the
/// reservoir level -e·V_res. Each N is warm-started from the previous
/// equilibrium plus one electron on its rim; the first increment that
/// fails to confine ends the filling.
pub fn load_trap(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    seed: u64,
    opts: &EquilibriumOptions,
) -> Result<LoadResult> {
    bias.validate()?;
    let threshold = -consts.e * opts.reservoir_potential;
    let spacing = start_spacing(consts, bias).max(10.0 * opts.min_separation_um);
    let interior = field.geometry().interior();
    let center = trap_center(field, bias, opts.search_box)?;

    let mut current = ElectronConfiguration::empty();
    let mut steps = Vec::new();
    let mut capped = false;

    loop {
        let n_next = current.n + 1;
        if n_next > opts.max_electrons {
            capped = true;
            break;
        }

        let candidate = if current.n == 0 {
            match find_equilibrium(consts, field, bias, 1, seed, opts) {
                Ok(c) => c,
                Err(Error::Unconfined(_)) => break,
                Err(e) => return Err(e),
            }
        } else {
            // Warm start: previous electrons stay, the newcomer lands just
            // outside the current cluster rim at a seeded angle.
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add(0xA076_1D64_78BD_642Fu64.wrapping_mul(n_next as u64)),
            );
            let rim = current
                .positions_um
                .iter()
                .map(|p| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt())
                .fold(0.0f64, f64::max);
            let angle = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
            let r = rim + 0.7 * spacing;
            let mut start = current.positions_um.clone();
            start.push(clamp_into(
                interior,
                [center[0] + r * angle.cos(), center[1] + r * angle.sin()],
            ));
            match minimize(consts, field, bias, &start, opts) {
                Ok(c) if c.converged => c,
                // Warm start failed; try the full multi-start search before
                // declaring the trap full.
                _ => match find_equilibrium(consts, field, bias, n_next, seed, opts) {
                    Ok(c) => c,
                    Err(Error::Unconfined(_)) => break,
                    Err(e) => return Err(e),
                },
            }
        };

        let mu = candidate.energy_j - current.energy_j;
        if mu > threshold {
            break;
        }
        steps.push(LoadStep { n: n_next, energy_j: candidate.energy_j, chemical_potential_j: mu });
        current = candidate;
    }

    Ok(LoadResult { configuration: current, steps, capped })
}
