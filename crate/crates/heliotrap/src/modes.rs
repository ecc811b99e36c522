//! Vibrational modes of an electron cluster and their resonator couplings.
//!
//! Around an equilibrium the cluster's motion linearizes to
//! ẍ = -M·x with M = (1/m_e)·∂²U/∂r∂r over the 2N interleaved coordinates
//! [x₀, y₀, x₁, y₁, ...]. Eigenvalues of M are squared angular mode
//! frequencies; eigenvectors are the dimensionless displacement patterns
//! that the resonator's in-plane microwave field projects onto.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::constants::{PhysicalConstants, UM};
use crate::equilibrium::ElectronConfiguration;
use crate::error::{Error, Result};
use crate::linalg::{eig_symmetric, SymmetricMatrix};
use crate::potential::{BiasConfig, PotentialField};

const TAU: f64 = std::f64::consts::TAU;

/// Default mode damping, an ordinary frequency in Hz.
pub const DEFAULT_GAMMA_OVER_2PI_HZ: f64 = 1.5e9;

/// Eigenfrequencies, displacement patterns, couplings, and damping of an
/// electron cluster. Serializes to the frequency-domain summary
/// {omega_over_2pi_hz, g_over_2pi_hz, gamma_over_2pi_hz, stable};
/// eigenvectors and raw eigenvalues stay in memory only.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    /// Mode angular frequencies, rad/s, ascending. Zero for unstable
    /// directions, whose true curvature is in `eigenvalues`.
    pub omegas: Vec<f64>,
    /// Raw eigenvalues of the dynamical matrix, rad²/s², ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal displacement patterns over 2N interleaved coordinates;
    /// `eigenvectors[n]` belongs to `omegas[n]`.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Mode-resonator couplings, rad/s. Zero until `couplings` fills them.
    pub couplings: Vec<f64>,
    /// Mode damping rates, rad/s.
    pub gammas: Vec<f64>,
    /// False when any eigenvalue is negative beyond numerical tolerance.
    pub stable: bool,
}

impl ModeSpectrum {
    /// Spectrum of an empty trap.
    pub fn empty() -> Self {
        ModeSpectrum {
            omegas: Vec::new(),
            eigenvalues: Vec::new(),
            eigenvectors: Vec::new(),
            couplings: Vec::new(),
            gammas: Vec::new(),
            stable: true,
        }
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Lowest mode frequency, rad/s.
    pub fn omega_min(&self) -> Option<f64> {
        self.omegas.first().copied()
    }
}

impl Serialize for ModeSpectrum {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let over_2pi = |v: &[f64]| v.iter().map(|x| x / TAU).collect::<Vec<f64>>();
        let mut st = serializer.serialize_struct("ModeSpectrum", 4)?;
        st.serialize_field("omega_over_2pi_hz", &over_2pi(&self.omegas))?;
        st.serialize_field("g_over_2pi_hz", &over_2pi(&self.couplings))?;
        st.serialize_field("gamma_over_2pi_hz", &over_2pi(&self.gammas))?;
        st.serialize_field("stable", &self.stable)?;
        st.end()
    }
}

/// Which combination of the two resonator arms drives the electrons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonatorModeKind {
    /// Arms swing in antiphase: ℰ = (∇α_a − ∇α_b)/2.
    Differential,
    /// Arms swing together: ℰ = (∇α_a + ∇α_b)/2.
    Common,
}

/// The resonator's in-plane field per volt at each electron position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonatorMode {
    pub kind: ResonatorModeKind,
    /// ℰ = [ℰ_x, ℰ_y] per electron, 1/μm.
    pub field_per_volt: Vec<[f64; 2]>,
}

impl ResonatorMode {
    /// Assemble the field from two named arm grids, evaluated at the given
    /// electron positions.
    pub fn from_arms(
        kind: ResonatorModeKind,
        field: &PotentialField,
        arm_a: &str,
        arm_b: &str,
        positions_um: &[[f64; 2]],
    ) -> Result<Self> {
        let ga = field
            .grid(arm_a)
            .ok_or_else(|| Error::Geometry(format!("field has no grid named '{arm_a}'")))?;
        let gb = field
            .grid(arm_b)
            .ok_or_else(|| Error::Geometry(format!("field has no grid named '{arm_b}'")))?;
        let sign = match kind {
            ResonatorModeKind::Differential => -1.0,
            ResonatorModeKind::Common => 1.0,
        };
        let mut per_electron = Vec::with_capacity(positions_um.len());
        for p in positions_um {
            let (_, grad_a, _) = ga.eval(p[0], p[1])?;
            let (_, grad_b, _) = gb.eval(p[0], p[1])?;
            per_electron.push([
                0.5 * (grad_a[0] + sign * grad_b[0]),
                0.5 * (grad_a[1] + sign * grad_b[1]),
            ]);
        }
        Ok(ResonatorMode { kind, field_per_volt: per_electron })
    }

    /// Differential mode of the canonical resonator arm pair.
    pub fn differential(field: &PotentialField, positions_um: &[[f64; 2]]) -> Result<Self> {
        Self::from_arms(
            ResonatorModeKind::Differential,
            field,
            "resonator_upper",
            "resonator_lower",
            positions_um,
        )
    }

    /// Common mode of the canonical resonator arm pair.
    pub fn common(field: &PotentialField, positions_um: &[[f64; 2]]) -> Result<Self> {
        Self::from_arms(
            ResonatorModeKind::Common,
            field,
            "resonator_upper",
            "resonator_lower",
            positions_um,
        )
    }

    /// The same field at every electron; the workhorse for closed-form
    /// studies where the real gate geometry is irrelevant.
    pub fn uniform(kind: ResonatorModeKind, e_per_um: [f64; 2], n: usize) -> Self {
        ResonatorMode { kind, field_per_volt: vec![e_per_um; n] }
    }
}

/// Dynamical matrix M = (1/m_e)·∂²U/∂r∂r at the configuration, over the 2N
/// interleaved coordinates, entries in rad²/s². The configuration must be
/// converged (or explicitly pinned); curvature away from an equilibrium
/// mixes into spurious mode shifts.
pub fn hessian_matrix(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    cfg: &ElectronConfiguration,
) -> Result<SymmetricMatrix> {
    if !cfg.converged {
        return Err(Error::InvalidParameter(
            "mode analysis needs a converged or pinned configuration".into(),
        ));
    }
    let n = cfg.n;
    if n == 0 {
        return Err(Error::InvalidParameter("no electrons to analyze".into()));
    }
    if cfg.positions_um.len() != n {
        return Err(Error::InvalidParameter(format!(
            "configuration claims {n} electrons but has {} positions",
            cfg.positions_um.len()
        )));
    }

    let mut m = SymmetricMatrix::zeros(2 * n);
    let add = |mat: &mut SymmetricMatrix, i: usize, j: usize, v: f64| {
        let cur = mat.get(i, j);
        mat.set(i, j, cur + v);
    };

    // Trap curvature: U = -e·φ, so ∂²U/∂r² = -e·φ'' converted from V/μm²
    // to SI and mass-scaled.
    let trap_factor = -consts.e / (consts.m_e * UM * UM);
    for (i, p) in cfg.positions_um.iter().enumerate() {
        let (_, _, hess) = field.phi_full(bias, p[0], p[1])?;
        add(&mut m, 2 * i, 2 * i, trap_factor * hess[0]);
        add(&mut m, 2 * i + 1, 2 * i, trap_factor * hess[1]);
        add(&mut m, 2 * i + 1, 2 * i + 1, trap_factor * hess[2]);
    }

    // Coulomb curvature: for V = k/d the same-electron block is
    // k·(3 Δr Δrᵀ/d⁵ − I/d³) and the cross-electron block is its negative.
    let k_c = consts.coulomb_factor();
    for i in 0..n {
        for j in i + 1..n {
            let dx = (cfg.positions_um[i][0] - cfg.positions_um[j][0]) * UM;
            let dy = (cfg.positions_um[i][1] - cfg.positions_um[j][1]) * UM;
            let d2 = dx * dx + dy * dy;
            let d = d2.sqrt();
            if d < 1e-3 * UM {
                return Err(Error::Singularity(d / UM));
            }
            let d3 = d2 * d;
            let d5 = d3 * d2;
            let b_xx = k_c * (3.0 * dx * dx / d5 - 1.0 / d3) / consts.m_e;
            let b_xy = k_c * (3.0 * dx * dy / d5) / consts.m_e;
            let b_yy = k_c * (3.0 * dy * dy / d5 - 1.0 / d3) / consts.m_e;

            add(&mut m, 2 * i, 2 * i, b_xx);
            add(&mut m, 2 * i + 1, 2 * i, b_xy);
            add(&mut m, 2 * i + 1, 2 * i + 1, b_yy);
            add(&mut m, 2 * j, 2 * j, b_xx);
            add(&mut m, 2 * j + 1, 2 * j, b_xy);
            add(&mut m, 2 * j + 1, 2 * j + 1, b_yy);
            add(&mut m, 2 * j, 2 * i, -b_xx);
            add(&mut m, 2 * j + 1, 2 * i, -b_xy);
            add(&mut m, 2 * j, 2 * i + 1, -b_xy);
            add(&mut m, 2 * j + 1, 2 * i + 1, -b_yy);
        }
    }
    Ok(m)
}

/// Diagonalize the dynamical matrix into a mode spectrum with couplings
/// left at zero. Negative eigenvalues beyond a 1e-9 relative floor mark
/// the spectrum unstable; their frequencies are reported as zero while the
/// signed curvature stays available in `eigenvalues`.
pub fn eigenmodes(
    consts: &PhysicalConstants,
    field: &PotentialField,
    bias: &BiasConfig,
    cfg: &ElectronConfiguration,
    gamma: f64,
) -> Result<ModeSpectrum> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mode damping must be positive, got {gamma} rad/s"
        )));
    }
    if cfg.n == 0 {
        return Ok(ModeSpectrum::empty());
    }
    let m = hessian_matrix(consts, field, bias, cfg)?;
    let eig = eig_symmetric(&m)?;

    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let stable = eig.values.iter().all(|&v| v >= -1e-9 * scale);
    let omegas: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let count = omegas.len();
    Ok(ModeSpectrum {
        omegas,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        couplings: vec![0.0; count],
        gammas: vec![gamma; count],
        stable,
    })
}

/// Single-electron coupling g_e = √2·e·ℰ_y/(2·√(m_e·γ·C)) in rad/s for a
/// field-per-volt given in 1/μm. The closed form every multi-electron
/// coupling reduces to in a uniform field.
pub fn single_electron_coupling(
    consts: &PhysicalConstants,
    e_y_per_um: f64,
    c_total_farad: f64,
    gamma_scale: f64,
) -> f64 {
    let e_si = e_y_per_um / UM;
    std::f64::consts::SQRT_2 * consts.e * e_si
        / (2.0 * (consts.m_e * gamma_scale * c_total_farad).sqrt())
}

/// Fill the spectrum's couplings: g_n = e·(ℰ·x_n)/(2·√(m_e·γ·C)), where ℰ
/// is the per-electron resonator field assembled with the √2 zero-point
/// voltage factor and x_n is the unit displacement pattern of mode n.
pub fn couplings(
    consts: &PhysicalConstants,
    spectrum: &ModeSpectrum,
    mode: &ResonatorMode,
    c_total_farad: f64,
    gamma_scale: f64,
) -> Result<ModeSpectrum> {
    if !(c_total_farad.is_finite() && c_total_farad > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "total capacitance must be positive, got {c_total_farad} F"
        )));
    }
    if !(gamma_scale.is_finite() && gamma_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "capacitance scale must be positive, got {gamma_scale}"
        )));
    }
    let dim = 2 * mode.field_per_volt.len();
    if spectrum.eigenvectors.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidParameter(format!(
            "resonator mode covers {} electrons but the spectrum has {}-component modes",
            mode.field_per_volt.len(),
            spectrum.eigenvectors.first().map_or(0, |v| v.len())
        )));
    }

    let prefactor = consts.e / (2.0 * (consts.m_e * gamma_scale * c_total_farad).sqrt());
    let assembled: Vec<[f64; 2]> = mode
        .field_per_volt
        .iter()
        .map(|e| {
            [
                std::f64::consts::SQRT_2 * e[0] / UM,
                std::f64::consts::SQRT_2 * e[1] / UM,
            ]
        })
        .collect();

    let mut out = spectrum.clone();
    for (g, vec) in out.couplings.iter_mut().zip(&spectrum.eigenvectors) {
        let mut dot = 0.0;
        for (i, e) in assembled.iter().enumerate() {
            dot += e[0] * vec[2 * i] + e[1] * vec[2 * i + 1];
        }
        *g = prefactor * dot;
    }
    Ok(out)
}
