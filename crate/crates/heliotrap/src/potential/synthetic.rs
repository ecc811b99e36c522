//! Constructed fields with known closed forms, plus a small reference gate
//! layout. The bowls and the double well are sampled from analytic
//! expressions, so solver-independent checks of equilibria, mode
//! frequencies, and couplings can compare against exact formulas.

use crate::constants::{PhysicalConstants, UM};
use crate::error::{Error, Result};

use super::laplace::{Electrode, ElectrodeGeometry2D};
use super::{BiasConfig, GridGeometry, PotentialField, UnitPotentialGrid};

/// Bias configuration carrying every canonical electrode, with the listed
/// overrides applied. Convenient for studies that only care about one or
/// two voltages.
pub fn bias_with(pairs: &[(&str, f64)]) -> Result<BiasConfig> {
    let mut all: Vec<(&str, f64)> = vec![
        ("bottom", 0.0),
        ("split_gate_upper", 0.0),
        ("split_gate_lower", 0.0),
        ("resonator", 0.0),
        ("unload", 0.0),
    ];
    for (k, v) in pairs {
        if let Some(slot) = all.iter_mut().find(|(n, _)| n == k) {
            slot.1 = *v;
        } else {
            all.push((k, *v));
        }
    }
    BiasConfig::from_pairs(&all)
}

/// Harmonic trap with chosen frequencies along x and y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowlSpec {
    /// Trap frequency along x as an ordinary frequency, Hz.
    pub f_x_hz: f64,
    /// Trap frequency along y, Hz.
    pub f_y_hz: f64,
    /// Trap center, micrometers.
    pub center: [f64; 2],
    /// Grid half extent around the center, micrometers.
    pub half_extent_um: f64,
    /// Grid spacing, micrometers.
    pub step_um: f64,
}

impl Default for BowlSpec {
    fn default() -> Self {
        BowlSpec {
            f_x_hz: 20e9,
            f_y_hz: 20e9,
            center: [0.0, 0.0],
            half_extent_um: 2.0,
            step_um: 0.1,
        }
    }
}

impl BowlSpec {
    fn validate(&self) -> Result<()> {
        if !(self.f_x_hz.is_finite() && self.f_x_hz > 0.0 && self.f_y_hz.is_finite() && self.f_y_hz > 0.0)
        {
            return Err(Error::InvalidParameter("bowl frequencies must be positive".into()));
        }
        if !(self.center[0].is_finite() && self.center[1].is_finite()) {
            return Err(Error::NonFinite("bowl center".into()));
        }
        if !(self.half_extent_um.is_finite() && self.half_extent_um > 0.0) {
            return Err(Error::InvalidParameter("bowl half extent must be positive".into()));
        }
        if !(self.step_um.is_finite() && self.step_um > 0.0) {
            return Err(Error::InvalidParameter("bowl step must be positive".into()));
        }
        if self.half_extent_um / self.step_um < 4.0 {
            return Err(Error::InvalidParameter(
                "bowl grid too coarse: need at least 8 cells across".into(),
            ));
        }
        Ok(())
    }
}

/// Curvature coefficient c = m (2π f)² / (2 e) converted to V/μm², so the
/// potential -c·r² confines an electron at frequency f.
fn curvature_volts_per_um2(consts: &PhysicalConstants, f_hz: f64) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * f_hz;
    consts.m_e * omega * omega / (2.0 * consts.e) * (UM * UM)
}

/// Sample a harmonic bowl onto a single-electrode field and return it with
/// a bias that realizes exactly the requested trap frequencies. The grid
/// values are quadratic in position, which bicubic interpolation
/// reproduces exactly, so downstream derivatives carry no sampling error.
pub fn harmonic_bowl(
    consts: &PhysicalConstants,
    spec: &BowlSpec,
) -> Result<(PotentialField, BiasConfig)> {
    spec.validate()?;
    let cx = curvature_volts_per_um2(consts, spec.f_x_hz);
    let cy = curvature_volts_per_um2(consts, spec.f_y_hz);
    let l = spec.half_extent_um;
    // Sized so alpha spans [0.05, 0.95] across the grid.
    let v_bowl = (cx + cy) * l * l / 0.9;

    let n = (2.0 * l / spec.step_um).round() as usize + 1;
    let geom = GridGeometry {
        nx: n,
        ny: n,
        x0: spec.center[0] - l,
        y0: spec.center[1] - l,
        dx: spec.step_um,
        dy: spec.step_um,
    };
    let mut values = Vec::with_capacity(n * n);
    for j in 0..n {
        let y = geom.node_y(j) - spec.center[1];
        for i in 0..n {
            let x = geom.node_x(i) - spec.center[0];
            values.push(0.95 - (cx * x * x + cy * y * y) / v_bowl);
        }
    }
    let field = PotentialField::new(vec![UnitPotentialGrid::new("bottom", geom, values)?])?;
    let bias = bias_with(&[("bottom", v_bowl)])?;
    Ok((field, bias))
}

/// Two-electrode field whose y confinement softens linearly with the
/// resonator voltage: the bottom gate contributes x², y², and y⁴ terms,
/// the resonator contributes an opposing y² term. The y-quadratic energy
/// coefficient crosses zero on a straight line in the (resonator, bottom)
/// voltage plane, beyond which the single well splits in two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWellSpec {
    /// Bottom-gate x² coefficient, V/μm².
    pub x_coeff: f64,
    /// Bottom-gate y² coefficient, V/μm².
    pub y_coeff: f64,
    /// Bottom-gate y⁴ coefficient, V/μm⁴.
    pub quartic_coeff: f64,
    /// Resonator y² coefficient (opposite sign in the energy), V/μm².
    pub split_coeff: f64,
    /// Grid half extent, micrometers.
    pub half_extent_um: f64,
    /// Grid spacing, micrometers.
    pub step_um: f64,
}

impl Default for DoubleWellSpec {
    fn default() -> Self {
        DoubleWellSpec {
            x_coeff: 0.02,
            y_coeff: 0.02,
            quartic_coeff: 0.01,
            split_coeff: 0.05,
            half_extent_um: 1.5,
            step_um: 0.025,
        }
    }
}

impl DoubleWellSpec {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("x_coeff", self.x_coeff),
            ("y_coeff", self.y_coeff),
            ("quartic_coeff", self.quartic_coeff),
            ("split_coeff", self.split_coeff),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "double well {name} must be positive"
                )));
            }
        }
        if !(self.half_extent_um > 0.0 && self.step_um > 0.0)
            || self.half_extent_um / self.step_um < 4.0
        {
            return Err(Error::InvalidParameter("double well grid too coarse".into()));
        }
        Ok(())
    }

    /// Quadratic energy coefficient c₂ in J/m² for an electron:
    /// U(y) ≈ c₂ y² + c₄ y⁴ near the axis.
    pub fn c2_energy(&self, consts: &PhysicalConstants, v_res: f64, v_bot: f64) -> f64 {
        consts.e * (v_bot * self.y_coeff - v_res * self.split_coeff) / (UM * UM)
    }

    /// Quartic energy coefficient c₄ in J/m⁴.
    pub fn c4_energy(&self, consts: &PhysicalConstants, v_bot: f64) -> f64 {
        consts.e * v_bot * self.quartic_coeff / (UM * UM * UM * UM)
    }

    /// Squared oscillation frequency along y at the well bottom, rad²/s²:
    /// 2c₂/m in the single well, -4c₂/m after it splits.
    pub fn omega_y_squared(&self, consts: &PhysicalConstants, v_res: f64, v_bot: f64) -> f64 {
        let c2 = self.c2_energy(consts, v_res, v_bot);
        if c2 >= 0.0 {
            2.0 * c2 / consts.m_e
        } else {
            -4.0 * c2 / consts.m_e
        }
    }

    /// Squared x frequency, independent of the resonator voltage.
    pub fn omega_x_squared(&self, consts: &PhysicalConstants, v_bot: f64) -> f64 {
        2.0 * consts.e * v_bot * self.x_coeff / (consts.m_e * UM * UM)
    }

    /// Well displacement |y*| in micrometers once the well has split,
    /// zero before.
    pub fn well_offset_um(&self, consts: &PhysicalConstants, v_res: f64, v_bot: f64) -> f64 {
        let c2 = self.c2_energy(consts, v_res, v_bot);
        if c2 >= 0.0 {
            return 0.0;
        }
        let c4 = self.c4_energy(consts, v_bot);
        (-c2 / (2.0 * c4)).sqrt() / UM
    }
}

/// Sample the double-well field. Electrodes are named `bottom` and
/// `resonator` so canonical bias configurations apply directly.
pub fn double_well(spec: &DoubleWellSpec) -> Result<PotentialField> {
    spec.validate()?;
    let l = spec.half_extent_um;
    let n = (2.0 * l / spec.step_um).round() as usize + 1;
    let geom = GridGeometry { nx: n, ny: n, x0: -l, y0: -l, dx: spec.step_um, dy: spec.step_um };

    let mut bottom = Vec::with_capacity(n * n);
    let mut resonator = Vec::with_capacity(n * n);
    for j in 0..n {
        let y = geom.node_y(j);
        let y2 = y * y;
        for i in 0..n {
            let x = geom.node_x(i);
            bottom.push(
                0.7 - spec.x_coeff * x * x
                    - spec.y_coeff * y2
                    - spec.quartic_coeff * y2 * y2,
            );
            resonator.push(0.05 + spec.split_coeff * y2);
        }
    }
    PotentialField::new(vec![
        UnitPotentialGrid::new("bottom", geom, bottom)?,
        UnitPotentialGrid::new("resonator", geom, resonator)?,
    ])
}

/// Reference gate layout: a biased channel whose end forms the trap, split
/// gates that pinch the channel into a reservoir side and a trap side,
/// two resonator arms flanking the trap, and an unload gate past the
/// channel end.
pub fn device_geometry() -> ElectrodeGeometry2D {
    ElectrodeGeometry2D {
        x0: -3.0,
        y0: -3.0,
        x1: 3.0,
        y1: 3.0,
        dx: 0.06,
        dy: 0.06,
        electrodes: vec![
            Electrode::rect("bottom", -2.9, -0.55, 0.6, 0.55),
            Electrode::rect("split_gate_upper", -1.7, 0.65, -0.9, 2.9),
            Electrode::rect("split_gate_lower", -1.7, -2.9, -0.9, -0.65),
            Electrode::rect("resonator_upper", -0.7, 0.75, 0.7, 2.0),
            Electrode::rect("resonator_lower", -0.7, -2.0, 0.7, -0.75),
            Electrode::rect("unload", 1.0, -1.6, 2.4, 1.6),
        ],
        surface_height_um: 0.55,
        tolerance: 1e-10,
        max_iterations: 1_000_000,
    }
}

/// Solve the reference layout, including the elevation to the electron
/// layer configured in the geometry.
pub fn device_field() -> Result<PotentialField> {
    super::laplace::solve_unit_potentials(&device_geometry())
}

/// Operating point used by examples and end-to-end studies: channel biased
/// to hold electrons, split gates pinched, resonator arms slightly
/// negative, unload parked negative.
pub fn device_reference_bias() -> BiasConfig {
    bias_with(&[
        ("bottom", 0.45),
        ("split_gate_upper", -0.12),
        ("split_gate_lower", -0.12),
        ("resonator", -0.05),
        ("unload", -0.1),
    ])
    .expect("reference bias is well formed")
}

/// Rectangle (xmin, xmax, ymin, ymax) in which the trap minimum is
/// searched, micrometers.
pub fn device_trap_box() -> (f64, f64, f64, f64) {
    (-0.8, 0.8, -0.8, 0.8)
}
