//! Gate-defined electrostatic potentials.
//!
//! Each electrode contributes a dimensionless unit potential α_k(x, y)
//! (its response at 1 V with every other conductor grounded); the trap
//! potential under a bias is the superposition φ = Σ_k V_k · α_k. Grids
//! store α on a shared uniform mesh; evaluation anywhere in the interior
//! goes through bicubic interpolation.

mod interp;
pub mod io;
pub mod laplace;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

pub use laplace::{elevate_field, solve_unit_potentials, Electrode, ElectrodeGeometry2D};

/// Electrode names every bias configuration must supply.
pub const REQUIRED_ELECTRODES: [&str; 5] =
    ["bottom", "split_gate_upper", "split_gate_lower", "resonator", "unload"];

/// Uniform grid layout shared by every unit potential in a field.
/// Coordinates are micrometers; rows run along x with y increasing by row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
}

impl GridGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::Geometry(format!(
                "grid must be at least 4x4, got {}x{}",
                self.nx, self.ny
            )));
        }
        for (name, v) in [("x0", self.x0), ("y0", self.y0), ("dx", self.dx), ("dy", self.dy)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("grid geometry field {name}")));
            }
        }
        if self.dx <= 0.0 || self.dy <= 0.0 {
            return Err(Error::Geometry("grid spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.nx - 1) as f64 * self.dx
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + (self.ny - 1) as f64 * self.dy
    }

    /// Rectangle where bicubic evaluation is allowed: two nodes in from
    /// every edge. (xmin, xmax, ymin, ymax), micrometers.
    pub fn interior(&self) -> (f64, f64, f64, f64) {
        (
            self.x0 + 2.0 * self.dx,
            self.x0 + (self.nx as f64 - 3.0) * self.dx,
            self.y0 + 2.0 * self.dy,
            self.y0 + (self.ny as f64 - 3.0) * self.dy,
        )
    }

    pub fn node_x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn node_y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }
}

/// One electrode's dimensionless unit potential sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPotentialGrid {
    electrode: String,
    geom: GridGeometry,
    values: Vec<f64>,
}

fn valid_electrode_name(name: &str) -> bool {
    !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl UnitPotentialGrid {
    /// Values must already lie in [0, 1] up to a 1e-9 numerical tolerance;
    /// within that tolerance they are clamped so the stored invariant is
    /// exact.
    pub fn new(electrode: impl Into<String>, geom: GridGeometry, values: Vec<f64>) -> Result<Self> {
        let electrode = electrode.into();
        if !valid_electrode_name(&electrode) {
            return Err(Error::Geometry(format!(
                "electrode name '{electrode}' must be non-empty [A-Za-z0-9_]"
            )));
        }
        geom.validate()?;
        if values.len() != geom.nx * geom.ny {
            return Err(Error::Geometry(format!(
                "grid for '{electrode}' has {} values, expected {}",
                values.len(),
                geom.nx * geom.ny
            )));
        }
        let mut stored = values;
        for v in &mut stored {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("unit potential for '{electrode}'")));
            }
            if *v < -1e-9 || *v > 1.0 + 1e-9 {
                return Err(Error::Geometry(format!(
                    "unit potential for '{electrode}' outside [0, 1]: {v}"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(UnitPotentialGrid { electrode, geom, values: stored })
    }

    pub fn electrode(&self) -> &str {
        &self.electrode
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.geom.nx + i]
    }

    /// Interpolated α with gradient (1/μm) and Hessian (1/μm²).
    pub fn eval(&self, x: f64, y: f64) -> Result<(f64, [f64; 2], [f64; 3])> {
        interp::eval_full(&self.geom, &self.values, x, y)
    }
}

/// A complete set of unit potentials on one shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    geom: GridGeometry,
    grids: BTreeMap<String, UnitPotentialGrid>,
}

impl PotentialField {
    pub fn new(grids: Vec<UnitPotentialGrid>) -> Result<Self> {
        let first = grids
            .first()
            .ok_or_else(|| Error::Geometry("a potential field needs at least one grid".into()))?;
        let geom = first.geom;
        let mut map = BTreeMap::new();
        for g in grids {
            if g.geom != geom {
                return Err(Error::GridMismatch(format!(
                    "grid '{}' disagrees with '{}' on geometry",
                    g.electrode,
                    first_name(&map)
                )));
            }
            if map.insert(g.electrode.clone(), g).is_some() {
                return Err(Error::Geometry("duplicate electrode grid".into()));
            }
        }

        let field = PotentialField { geom, grids: map };
        // Unit potentials of a passive conductor set can never superpose
        // above one anywhere.
        let n = geom.nx * geom.ny;
        for idx in 0..n {
            let total: f64 = field.grids.values().map(|g| g.values[idx]).sum();
            if total > 1.0 + 1e-6 {
                let i = idx % geom.nx;
                let j = idx / geom.nx;
                return Err(Error::Geometry(format!(
                    "unit potentials sum to {total} > 1 at node ({i}, {j})"
                )));
            }
        }
        Ok(field)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn electrodes(&self) -> impl Iterator<Item = &str> {
        self.grids.keys().map(|s| s.as_str())
    }

    pub fn grid(&self, electrode: &str) -> Option<&UnitPotentialGrid> {
        self.grids.get(electrode)
    }

    pub fn grids(&self) -> impl Iterator<Item = &UnitPotentialGrid> {
        self.grids.values()
    }

    fn resolved_voltages(&self, bias: &BiasConfig) -> Result<Vec<(&UnitPotentialGrid, f64)>> {
        self.grids
            .values()
            .map(|g| bias.voltage_for(&g.electrode).map(|v| (g, v)))
            .collect()
    }

    /// φ(x, y) in volts.
    pub fn phi_at(&self, bias: &BiasConfig, x: f64, y: f64) -> Result<f64> {
        let mut phi = 0.0;
        for (g, v) in self.resolved_voltages(bias)? {
            phi += v * g.eval(x, y)?.0;
        }
        Ok(phi)
    }

    /// ∇φ in V/μm.
    pub fn phi_gradient(&self, bias: &BiasConfig, x: f64, y: f64) -> Result<[f64; 2]> {
        let mut grad = [0.0; 2];
        for (g, v) in self.resolved_voltages(bias)? {
            let (_, gr, _) = g.eval(x, y)?;
            grad[0] += v * gr[0];
            grad[1] += v * gr[1];
        }
        Ok(grad)
    }

    /// (φ, ∇φ, [φ_xx, φ_xy, φ_yy]) in volts, V/μm, V/μm².
    pub fn phi_full(&self, bias: &BiasConfig, x: f64, y: f64) -> Result<(f64, [f64; 2], [f64; 3])> {
        let mut phi = 0.0;
        let mut grad = [0.0; 2];
        let mut hess = [0.0; 3];
        for (g, v) in self.resolved_voltages(bias)? {
            let (val, gr, h) = g.eval(x, y)?;
            phi += v * val;
            grad[0] += v * gr[0];
            grad[1] += v * gr[1];
            hess[0] += v * h[0];
            hess[1] += v * h[1];
            hess[2] += v * h[2];
        }
        Ok((phi, grad, hess))
    }
}

fn first_name(map: &BTreeMap<String, UnitPotentialGrid>) -> String {
    map.keys().next().cloned().unwrap_or_default()
}

/// DC electrode voltages plus the operating temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub voltages: BTreeMap<String, f64>,
    #[serde(default = "default_temperature")]
    pub temperature_k: f64,
}

fn default_temperature() -> f64 {
    1.1
}

impl BiasConfig {
    pub fn new(voltages: BTreeMap<String, f64>, temperature_k: f64) -> Result<Self> {
        let bias = BiasConfig { voltages, temperature_k };
        bias.validate()?;
        Ok(bias)
    }

    /// Convenience constructor from (name, volts) pairs at the default
    /// operating temperature.
    pub fn from_pairs(pairs: &[(&str, f64)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            map.insert((*k).to_string(), *v);
        }
        Self::new(map, default_temperature())
    }

    pub fn validate(&self) -> Result<()> {
        for name in REQUIRED_ELECTRODES {
            if !self.voltages.contains_key(name) {
                return Err(Error::MissingVoltage(name.to_string()));
            }
        }
        for (name, v) in &self.voltages {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("voltage for '{name}'")));
            }
        }
        if !self.temperature_k.is_finite() || self.temperature_k < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature_k
            )));
        }
        Ok(())
    }

    /// Voltage for a grid. Exact name match first; otherwise the longest
    /// configured name P such that the grid is named P_<suffix>, so a
    /// single `resonator` entry biases both `resonator_upper` and
    /// `resonator_lower` arms while still allowing per-arm overrides.
    pub fn voltage_for(&self, grid_name: &str) -> Result<f64> {
        if let Some(v) = self.voltages.get(grid_name) {
            return Ok(*v);
        }
        let mut best: Option<(&str, f64)> = None;
        for (name, v) in &self.voltages {
            if grid_name.len() > name.len()
                && grid_name.starts_with(name.as_str())
                && grid_name.as_bytes()[name.len()] == b'_'
            {
                if best.map_or(true, |(b, _)| name.len() > b.len()) {
                    best = Some((name, *v));
                }
            }
        }
        best.map(|(_, v)| v)
            .ok_or_else(|| Error::MissingVoltage(grid_name.to_string()))
    }

    /// Copy with one voltage replaced.
    pub fn with_voltage(&self, name: &str, volts: f64) -> Self {
        let mut v = self.clone();
        v.voltages.insert(name.to_string(), volts);
        v
    }
}

/// Areal electron density a reservoir holds above a biased channel of the
/// given depth: n_s = ε ε₀ V / (e d). Returns electrons per cm².
pub fn reservoir_density(
    consts: &PhysicalConstants,
    v_bottom: f64,
    depth_um: f64,
) -> Result<f64> {
    if !(depth_um.is_finite() && depth_um > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "channel depth must be positive, got {depth_um} um"
        )));
    }
    if !v_bottom.is_finite() {
        return Err(Error::NonFinite("reservoir bias".into()));
    }
    if v_bottom <= 0.0 {
        return Ok(0.0);
    }
    let depth_m = depth_um * crate::constants::UM;
    let per_m2 = consts.eps_he * consts.eps0 * v_bottom / (consts.e * depth_m);
    Ok(per_m2 * 1e-4)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn uniform_grid(name: &str, value: f64, geom: GridGeometry) -> UnitPotentialGrid {
        UnitPotentialGrid::new(name, geom, vec![value; geom.nx * geom.ny]).unwrap()
    }

    fn small_geom() -> GridGeometry {
        GridGeometry { nx: 8, ny: 8, x0: 0.0, y0: 0.0, dx: 0.5, dy: 0.5 }
    }

    fn full_bias(pairs: &[(&str, f64)]) -> BiasConfig {
        let mut all = vec![
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
        BiasConfig::from_pairs(&all).unwrap()
    }

    #[test]
    fn grid_rejects_out_of_range_alpha() {
        let geom = small_geom();
        let mut v = vec![0.5; 64];
        v[10] = 1.5;
        assert!(UnitPotentialGrid::new("bottom", geom, v).is_err());
        let mut v = vec![0.5; 64];
        v[3] = -0.2;
        assert!(UnitPotentialGrid::new("bottom", geom, v).is_err());
        let v = vec![f64::INFINITY; 64];
        assert!(UnitPotentialGrid::new("bottom", geom, v).is_err());
    }

    #[test]
    fn grid_clamps_tolerated_rounding() {
        let geom = small_geom();
        let mut v = vec![0.5; 64];
        v[0] = -1e-12;
        v[1] = 1.0 + 1e-12;
        let g = UnitPotentialGrid::new("bottom", geom, v).unwrap();
        assert_eq!(g.values()[0], 0.0);
        assert_eq!(g.values()[1], 1.0);
    }

    #[test]
    fn field_requires_matching_geometry() {
        let a = uniform_grid("bottom", 0.3, small_geom());
        let mut other = small_geom();
        other.dx = 0.25;
        let b = uniform_grid("unload", 0.3, other);
        assert!(matches!(
            PotentialField::new(vec![a, b]),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn field_rejects_superposition_above_one() {
        let a = uniform_grid("bottom", 0.6, small_geom());
        let b = uniform_grid("unload", 0.55, small_geom());
        assert!(PotentialField::new(vec![a, b]).is_err());
        let a = uniform_grid("bottom", 0.6, small_geom());
        let b = uniform_grid("unload", 0.4, small_geom());
        assert!(PotentialField::new(vec![a, b]).is_ok());
    }

    #[test]
    fn phi_is_linear_in_bias() {
        let field = PotentialField::new(vec![
            uniform_grid("bottom", 0.5, small_geom()),
            uniform_grid("unload", 0.25, small_geom()),
        ])
        .unwrap();
        let b1 = full_bias(&[("bottom", 1.0)]);
        let b2 = full_bias(&[("unload", 1.0)]);
        let b12 = full_bias(&[("bottom", 2.0), ("unload", -3.0)]);
        let p = (1.7, 1.9);
        let phi1 = field.phi_at(&b1, p.0, p.1).unwrap();
        let phi2 = field.phi_at(&b2, p.0, p.1).unwrap();
        let phi12 = field.phi_at(&b12, p.0, p.1).unwrap();
        assert!((phi12 - (2.0 * phi1 - 3.0 * phi2)).abs() < 1e-12);
        assert!((phi1 - 0.5).abs() < 1e-12);
        assert!((phi2 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn missing_voltage_is_an_evaluation_error() {
        let field = PotentialField::new(vec![uniform_grid("guard_ring", 0.5, small_geom())]).unwrap();
        let bias = full_bias(&[]);
        assert!(matches!(
            field.phi_at(&bias, 1.7, 1.7),
            Err(Error::MissingVoltage(name)) if name == "guard_ring"
        ));
    }

    #[test]
    fn bias_requires_canonical_electrodes() {
        let mut map = BTreeMap::new();
        map.insert("bottom".to_string(), 1.0);
        assert!(matches!(
            BiasConfig::new(map, 1.1),
            Err(Error::MissingVoltage(_))
        ));
    }

    #[test]
    fn arm_grids_fall_back_to_stem_voltage() {
        let bias = full_bias(&[("resonator", -0.3)]);
        assert_eq!(bias.voltage_for("resonator_upper").unwrap(), -0.3);
        assert_eq!(bias.voltage_for("resonator_lower").unwrap(), -0.3);
        // Explicit arm entry wins over the stem.
        let bias2 = bias.with_voltage("resonator_upper", -0.28);
        assert_eq!(bias2.voltage_for("resonator_upper").unwrap(), -0.28);
        assert_eq!(bias2.voltage_for("resonator_lower").unwrap(), -0.3);
        // No underscore boundary, no fallback.
        assert!(bias.voltage_for("resonatorx").is_err());
    }

    #[test]
    fn reservoir_density_matches_hand_value() {
        // 1.057 × 8.8541878128e-12 × 1.0 / (1.602176634e-19 × 0.7e-6)
        // = 8.3447e13 m⁻² = 8.34e9 cm⁻², computed by hand.
        let c = PhysicalConstants::default();
        let n = reservoir_density(&c, 1.0, 0.7).unwrap();
        assert!((n - 8.3447e9).abs() / 8.3447e9 < 1e-4, "n = {n:e}");
        assert_eq!(reservoir_density(&c, -0.5, 0.7).unwrap(), 0.0);
        assert!(reservoir_density(&c, 1.0, 0.0).is_err());
    }

    #[test]
    fn bias_serde_round_trip() {
        let bias = full_bias(&[("bottom", 0.5), ("resonator", -0.11)]);
        let json = serde_json::to_string(&bias).unwrap();
        let back: BiasConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(bias, back);
    }
}
