//! Physical constants shared by every stage of the simulation chain.
//!
//! All internal computation is SI. Positions cross the public API in
//! micrometers; the `UM` conversion factor is the single place where that
//! convention is encoded. Angular frequencies are always named `omega`
//! (rad/s) and ordinary frequencies `f` or `*_hz` (Hz) to keep factors of
//! 2π visible at call sites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meters per micrometer.
pub const UM: f64 = 1e-6;

/// Fundamental constants plus the helium dielectric constant used by the
/// reservoir density estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Elementary charge, C.
    pub e: f64,
    /// Electron mass, kg.
    pub m_e: f64,
    /// Vacuum permittivity, F/m.
    pub eps0: f64,
    /// Relative permittivity of liquid helium.
    pub eps_he: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            e: 1.602_176_634e-19,
            m_e: 9.109_383_701_5e-31,
            eps0: 8.854_187_812_8e-12,
            eps_he: 1.057,
            k_b: 1.380_649e-23,
            hbar: 1.054_571_817e-34,
        }
    }
}

impl PhysicalConstants {
    pub fn new(e: f64, m_e: f64, eps0: f64, eps_he: f64, k_b: f64, hbar: f64) -> Result<Self> {
        let c = PhysicalConstants { e, m_e, eps0, eps_he, k_b, hbar };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("e", self.e),
            ("m_e", self.m_e),
            ("eps0", self.eps0),
            ("eps_he", self.eps_he),
            ("k_b", self.k_b),
            ("hbar", self.hbar),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "constant {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// e²/(4πε₀), J·m. Pairwise repulsion is this divided by separation.
    pub fn coulomb_factor(&self) -> f64 {
        self.e * self.e / (4.0 * std::f64::consts::PI * self.eps0)
    }

    /// k_B·T / (ħω): > 1 means thermal motion dominates zero-point motion
    /// and the classical treatment of the cluster dynamics applies.
    pub fn classical_ratio(&self, temperature_k: f64, omega: f64) -> f64 {
        if omega <= 0.0 {
            return f64::INFINITY;
        }
        self.k_b * temperature_k / (self.hbar * omega)
    }
}
