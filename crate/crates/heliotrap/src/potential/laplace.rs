//! Finite-difference electrostatics for gate layouts.
//!
//! `solve_unit_potentials` computes each electrode's in-plane unit
//! potential: the discrete Laplace solution that is 1 on that electrode's
//! nodes, 0 on every other electrode and on the outer boundary, relaxed
//! with red-black SOR until the per-node residual is small.
//!
//! A potential that is harmonic in the plane obeys the maximum principle,
//! so it can have no interior extremum; a trap minimum only appears at a
//! finite height above the electrode plane. `elevate_field` performs that
//! upward continuation: it treats the solved plane (electrodes plus
//! harmonically interpolated gaps, grounded outside the domain) as the
//! boundary data of a half space and convolves with the half-space kernel
//! h / (2π (ρ² + h²)^{3/2}). The kernel is positive with unit integral, so
//! superposition, α ∈ [0, 1], and Σα ≤ 1 all survive elevation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{valid_electrode_name, GridGeometry, PotentialField, UnitPotentialGrid};

/// A named gate: a simple polygon in the electrode plane, micrometers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
}

impl Electrode {
    pub fn rect(name: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Electrode {
            name: name.to_string(),
            polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }
}

/// Gate layout plus the mesh it is solved on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeGeometry2D {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub dx: f64,
    pub dy: f64,
    pub electrodes: Vec<Electrode>,
    /// Height of the electron layer above the electrode plane, μm.
    /// Zero means the in-plane solution is used directly.
    #[serde(default)]
    pub surface_height_um: f64,
    /// Per-node fixed-point residual the relaxation must reach.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Sweep cap for the relaxation.
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_max_iterations() -> usize {
    1_000_000
}

impl ElectrodeGeometry2D {
    pub fn grid_geometry(&self) -> Result<GridGeometry> {
        let nx = dimension(self.x0, self.x1, self.dx, "x")?;
        let ny = dimension(self.y0, self.y1, self.dy, "y")?;
        let geom = GridGeometry { nx, ny, x0: self.x0, y0: self.y0, dx: self.dx, dy: self.dy };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        let geom = self.grid_geometry()?;
        if self.electrodes.is_empty() {
            return Err(Error::Geometry("layout has no electrodes".into()));
        }
        if !(self.surface_height_um.is_finite() && self.surface_height_um >= 0.0) {
            return Err(Error::Geometry(format!(
                "surface height must be finite and non-negative, got {}",
                self.surface_height_um
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &self.electrodes {
            if !valid_electrode_name(&e.name) {
                return Err(Error::Geometry(format!(
                    "electrode name '{}' must be non-empty [A-Za-z0-9_]",
                    e.name
                )));
            }
            if !names.insert(e.name.clone()) {
                return Err(Error::Geometry(format!("duplicate electrode name '{}'", e.name)));
            }
            if e.polygon.len() < 3 {
                return Err(Error::Geometry(format!(
                    "electrode '{}' polygon needs at least 3 vertices",
                    e.name
                )));
            }
            for p in &e.polygon {
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(Error::NonFinite(format!("polygon vertex of '{}'", e.name)));
                }
                if p[0] < self.x0 - 1e-9
                    || p[0] > self.x1 + 1e-9
                    || p[1] < self.y0 - 1e-9
                    || p[1] > self.y1 + 1e-9
                {
                    return Err(Error::Geometry(format!(
                        "electrode '{}' extends outside the domain",
                        e.name
                    )));
                }
            }
        }

        // Disjointness on the mesh the solver actually sees.
        let masks = self.rasterize(&geom);
        let mut owner: Vec<Option<usize>> = vec![None; geom.nx * geom.ny];
        for (k, mask) in masks.iter().enumerate() {
            for (idx, &inside) in mask.iter().enumerate() {
                if inside {
                    if let Some(prev) = owner[idx] {
                        return Err(Error::Geometry(format!(
                            "electrodes '{}' and '{}' overlap at node {}",
                            self.electrodes[prev].name, self.electrodes[k].name, idx
                        )));
                    }
                    owner[idx] = Some(k);
                }
            }
        }
        Ok(())
    }

    fn rasterize(&self, geom: &GridGeometry) -> Vec<Vec<bool>> {
        self.electrodes
            .iter()
            .map(|e| {
                let mut mask = vec![false; geom.nx * geom.ny];
                for j in 0..geom.ny {
                    let y = geom.node_y(j);
                    for i in 0..geom.nx {
                        let x = geom.node_x(i);
                        if point_in_polygon(x, y, &e.polygon) {
                            mask[j * geom.nx + i] = true;
                        }
                    }
                }
                mask
            })
            .collect()
    }
}

fn dimension(lo: f64, hi: f64, step: f64, axis: &str) -> Result<usize> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && hi > lo) {
        return Err(Error::Geometry(format!("bad {axis} extent [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step).round() as usize + 1;
    if ((n - 1) as f64 * step - (hi - lo)).abs() > 1e-9 * step {
        return Err(Error::Geometry(format!(
            "{axis} extent [{lo}, {hi}] is not a whole number of steps {step}"
        )));
    }
    Ok(n)
}

/// Even-odd rule with points on an edge counted inside, so electrode
/// boundaries land on Dirichlet nodes consistently across resolutions.
fn point_in_polygon(x: f64, y: f64, poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for k in 0..n {
        let [x1, y1] = poly[k];
        let [x2, y2] = poly[(k + 1) % n];
        if on_segment(x, y, x1, y1, x2, y2) {
            return true;
        }
        if (y1 > y) != (y2 > y) {
            let xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
            if x < xi {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(x: f64, y: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> bool {
    let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
    let scale = (x2 - x1).abs().max((y2 - y1).abs()).max(1.0);
    if cross.abs() > 1e-9 * scale {
        return false;
    }
    let dot = (x - x1) * (x - x2) + (y - y1) * (y - y2);
    dot <= 1e-12 * scale * scale
}

/// Solve every electrode's in-plane unit potential. Output grids are keyed
/// by electrode name and independent of the order electrodes are listed.
pub fn solve_unit_potentials(layout: &ElectrodeGeometry2D) -> Result<PotentialField> {
    layout.validate()?;
    let geom = layout.grid_geometry()?;
    let masks = layout.rasterize(&geom);

    // Fixed-value map per node: electrode index or outer boundary.
    let mut fixed: Vec<Option<usize>> = vec![None; geom.nx * geom.ny];
    for (k, mask) in masks.iter().enumerate() {
        for (idx, &inside) in mask.iter().enumerate() {
            if inside {
                fixed[idx] = Some(k);
            }
        }
    }

    let mut order: Vec<usize> = (0..layout.electrodes.len()).collect();
    order.sort_by(|&a, &b| layout.electrodes[a].name.cmp(&layout.electrodes[b].name));

    let mut grids = Vec::with_capacity(order.len());
    for &k in &order {
        let values = sor_solve(&geom, &fixed, k, layout.tolerance, layout.max_iterations)?;
        grids.push(UnitPotentialGrid::new(
            layout.electrodes[k].name.clone(),
            geom,
            values,
        )?);
    }

    let field = PotentialField::new(grids)?;
    if layout.surface_height_um > 0.0 {
        elevate_field(&field, layout.surface_height_um)
    } else {
        Ok(field)
    }
}

fn sor_solve(
    geom: &GridGeometry,
    fixed: &[Option<usize>],
    electrode: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    let (nx, ny) = (geom.nx, geom.ny);
    let mut u = vec![0.0f64; nx * ny];
    for idx in 0..nx * ny {
        if fixed[idx] == Some(electrode) {
            u[idx] = 1.0;
        }
    }

    let ax = 1.0 / (geom.dx * geom.dx);
    let ay = 1.0 / (geom.dy * geom.dy);
    let denom = 2.0 * (ax + ay);
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / nx.max(ny) as f64).sin());

    let mut residual = f64::INFINITY;
    for sweep in 0..max_sweeps {
        for color in 0..2usize {
            for j in 1..ny - 1 {
                let row = j * nx;
                for i in 1..nx - 1 {
                    if (i + j) % 2 != color || fixed[row + i].is_some() {
                        continue;
                    }
                    let gs = (ax * (u[row + i - 1] + u[row + i + 1])
                        + ay * (u[row + i - nx] + u[row + i + nx]))
                        / denom;
                    u[row + i] += omega * (gs - u[row + i]);
                }
            }
        }

        if sweep % 16 == 15 || sweep + 1 == max_sweeps {
            residual = 0.0f64;
            for j in 1..ny - 1 {
                let row = j * nx;
                for i in 1..nx - 1 {
                    if fixed[row + i].is_some() {
                        continue;
                    }
                    let gs = (ax * (u[row + i - 1] + u[row + i + 1])
                        + ay * (u[row + i - nx] + u[row + i + nx]))
                        / denom;
                    residual = residual.max((gs - u[row + i]).abs());
                }
            }
            if residual <= tol {
                // Relaxation overshoot can leave values a hair outside
                // [0, 1]; pull them back within the residual scale.
                for (idx, v) in u.iter_mut().enumerate() {
                    if fixed[idx].is_none() {
                        *v = v.clamp(0.0, 1.0);
                    }
                }
                return Ok(u);
            }
        }
    }

    Err(Error::Convergence {
        context: format!("SOR relaxation for electrode index {electrode}"),
        residual,
    })
}

/// Continue a solved in-plane field upward to the electron layer height.
pub fn elevate_field(field: &PotentialField, height_um: f64) -> Result<PotentialField> {
    if !(height_um.is_finite() && height_um > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "elevation height must be positive, got {height_um}"
        )));
    }
    let geom = *field.geometry();
    if height_um < geom.dx.max(geom.dy) {
        // The kernel is sampled at nodes; below one cell it aliases and the
        // discrete weights can sum above one.
        return Err(Error::InvalidParameter(format!(
            "elevation height {height_um} um is below the grid spacing"
        )));
    }
    let (nx, ny) = (geom.nx, geom.ny);

    // Half-space kernel sampled at node offsets, midpoint weights.
    let h2 = height_um * height_um;
    let cell = geom.dx * geom.dy;
    let mut kernel = vec![0.0f64; nx * ny];
    for dj in 0..ny {
        let ry = dj as f64 * geom.dy;
        for di in 0..nx {
            let rx = di as f64 * geom.dx;
            let r2 = rx * rx + ry * ry + h2;
            kernel[dj * nx + di] =
                height_um / (2.0 * std::f64::consts::PI * r2 * r2.sqrt()) * cell;
        }
    }

    let mut grids = Vec::new();
    for grid in field.grids() {
        let src = grid.values();
        let mut out = vec![0.0f64; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut acc = 0.0;
                for jj in 0..ny {
                    let krow = (jj as isize - j as isize).unsigned_abs() * nx;
                    let srow = jj * nx;
                    for ii in 0..nx {
                        let di = (ii as isize - i as isize).unsigned_abs();
                        acc += kernel[krow + di] * src[srow + ii];
                    }
                }
                out[j * nx + i] = acc.min(1.0);
            }
        }
        grids.push(UnitPotentialGrid::new(grid.electrode(), geom, out)?);
    }
    PotentialField::new(grids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip_layout(tol: f64) -> ElectrodeGeometry2D {
        // Two vertical plate electrodes spanning the domain in y. The domain
        // is much taller than the plate gap, so at the central row the
        // grounded top and bottom edges contribute only ~exp(-pi h/L) and
        // the profile between the plates is linear to well under 1e-6.
        ElectrodeGeometry2D {
            x0: 0.0,
            y0: 0.0,
            x1: 4.0,
            y1: 28.0,
            dx: 0.2,
            dy: 0.2,
            electrodes: vec![
                Electrode::rect("left_line", 0.6, 0.0, 0.8, 28.0),
                Electrode::rect("right_line", 3.2, 0.0, 3.4, 28.0),
            ],
            surface_height_um: 0.0,
            tolerance: tol,
            max_iterations: 1_000_000,
        }
    }

    #[test]
    fn parallel_lines_give_linear_profile() {
        let field = solve_unit_potentials(&strip_layout(1e-12)).unwrap();
        let grid = field.grid("left_line").unwrap();
        let geom = grid.geometry();
        // A linear function satisfies the 5-point stencil exactly, so the
        // only deviations are far-boundary leakage and solver tolerance.
        let mut max_dev = 0.0f64;
        let j = geom.ny / 2;
        for i in 0..geom.nx {
            let x = geom.node_x(i);
            if x < 0.8 - 1e-9 || x > 3.2 + 1e-9 {
                continue;
            }
            let expected = (3.2 - x) / (3.2 - 0.8);
            max_dev = max_dev.max((grid.node(i, j) - expected).abs());
        }
        assert!(max_dev <= 1e-6, "max deviation from linear: {max_dev:e}");
    }

    #[test]
    fn unit_value_on_own_electrode_zero_on_others() {
        let field = solve_unit_potentials(&strip_layout(1e-10)).unwrap();
        let left = field.grid("left_line").unwrap();
        let right = field.grid("right_line").unwrap();
        let geom = left.geometry();
        for j in 0..geom.ny {
            for i in 0..geom.nx {
                let x = geom.node_x(i);
                if (0.6..=0.8).contains(&x) {
                    assert_eq!(left.node(i, j), 1.0);
                    assert_eq!(right.node(i, j), 0.0);
                }
                if (3.2..=3.4).contains(&x) {
                    assert_eq!(left.node(i, j), 0.0);
                    assert_eq!(right.node(i, j), 1.0);
                }
            }
        }
    }

    #[test]
    fn edge_electrodes_cover_interior_exactly_once() {
        // Four electrodes tiling the outer boundary (sides shortened so the
        // corners belong to one electrode only). Every non-corner boundary
        // node carries 1 in exactly one solve, and corner nodes never enter
        // a 5-point stencil, so the unit potentials must sum to 1 at every
        // interior node up to solver tolerance.
        let h = 0.05;
        let layout = ElectrodeGeometry2D {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
            dx: h,
            dy: h,
            electrodes: vec![
                Electrode { name: "top".into(), polygon: vec![[0.0, 1.0], [1.0, 1.0], [0.5, 1.0]] },
                Electrode { name: "bot".into(), polygon: vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]] },
                Electrode {
                    name: "left".into(),
                    polygon: vec![[0.0, h], [0.0, 1.0 - h], [0.0, 0.5]],
                },
                Electrode {
                    name: "right".into(),
                    polygon: vec![[1.0, h], [1.0, 1.0 - h], [1.0, 0.5]],
                },
            ],
            surface_height_um: 0.0,
            tolerance: 1e-11,
            max_iterations: 1_000_000,
        };
        let field = solve_unit_potentials(&layout).unwrap();
        let geom = *field.geometry();
        for j in 1..geom.ny - 1 {
            for i in 1..geom.nx - 1 {
                let total: f64 = field.grids().map(|g| g.node(i, j)).sum();
                assert!(
                    (total - 1.0).abs() < 1e-7,
                    "partition of unity violated at ({i}, {j}): {total}"
                );
            }
        }
    }

    #[test]
    fn lid_potential_is_one_quarter_at_center() {
        // One full edge held at 1 on a square grid: summing the four
        // rotated copies of this problem gives 1 at every interior node,
        // and the rotations map the center node to itself, so its value is
        // exactly 1/4 at any resolution.
        let layout = ElectrodeGeometry2D {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
            dx: 0.05,
            dy: 0.05,
            electrodes: vec![Electrode {
                name: "lid".into(),
                polygon: vec![[0.0, 1.0], [1.0, 1.0], [0.5, 1.0]],
            }],
            surface_height_um: 0.0,
            tolerance: 1e-11,
            max_iterations: 1_000_000,
        };
        let field = solve_unit_potentials(&layout).unwrap();
        let g = field.grid("lid").unwrap();
        let center = g.node(10, 10);
        assert!((center - 0.25).abs() < 1e-8, "center value {center}");
    }

    #[test]
    fn interior_respects_maximum_principle() {
        let mut layout = strip_layout(1e-11);
        layout.electrodes = vec![
            Electrode::rect("pad", 1.5, 1.5, 2.5, 2.5),
            Electrode::rect("guard", 0.4, 0.4, 0.8, 3.6),
        ];
        let field = solve_unit_potentials(&layout).unwrap();
        let pad = field.grid("pad").unwrap();
        let geom = pad.geometry();
        for j in 1..geom.ny - 1 {
            for i in 1..geom.nx - 1 {
                let v = pad.node(i, j);
                assert!((0.0..=1.0).contains(&v), "alpha out of range: {v}");
            }
        }
        // Strictly between bounds along a line between pad and ground.
        let j = geom.ny / 2;
        for i in 0..geom.nx {
            let x = geom.node_x(i);
            if x > 2.6 && x < 3.9 {
                let v = pad.node(i, j);
                assert!(v > 0.0 && v < 1.0, "expected strict interior value, got {v} at x={x}");
            }
        }
    }

    #[test]
    fn solution_independent_of_electrode_order() {
        let layout = strip_layout(1e-10);
        let mut reversed = layout.clone();
        reversed.electrodes.reverse();
        let a = solve_unit_potentials(&layout).unwrap();
        let b = solve_unit_potentials(&reversed).unwrap();
        for grid_a in a.grids() {
            let grid_b = b.grid(grid_a.electrode()).unwrap();
            for (va, vb) in grid_a.values().iter().zip(grid_b.values()) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }

    /// Series solution for a unit square with the top edge held at 1 and
    /// the other edges grounded, evaluated with numerically stable sinh
    /// ratios.
    fn lid_series(x: f64, y: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let mut s = 0.0;
        for n in (1..400).step_by(2) {
            let nf = n as f64;
            let ratio = ((nf * pi * (y - 1.0)).exp() - (-nf * pi * (y + 1.0)).exp())
                / (1.0 - (-2.0 * nf * pi).exp());
            s += 4.0 / (nf * pi) * (nf * pi * x).sin() * ratio;
        }
        s
    }

    #[test]
    fn grid_refinement_is_second_order_against_analytic_solution() {
        // The lid problem has a closed-form continuum solution, so the
        // discretization error itself is measurable: halving the step must
        // shrink it fourfold. (Electrode corners in general layouts carry
        // an r^{2/3} field singularity that degrades the local order; this
        // smooth-solution case isolates the solver's own accuracy.)
        let probes = [(0.25, 0.5), (0.5, 0.75), (0.5, 0.25)];
        let mut errs: Vec<[f64; 3]> = Vec::new();
        for step in [0.05, 0.025, 0.0125] {
            let layout = ElectrodeGeometry2D {
                x0: 0.0,
                y0: 0.0,
                x1: 1.0,
                y1: 1.0,
                dx: step,
                dy: step,
                electrodes: vec![Electrode {
                    name: "lid".into(),
                    polygon: vec![[0.0, 1.0], [1.0, 1.0], [0.5, 1.0]],
                }],
                surface_height_um: 0.0,
                tolerance: 1e-13,
                max_iterations: 2_000_000,
            };
            let field = solve_unit_potentials(&layout).unwrap();
            let g = field.grid("lid").unwrap();
            let geom = *g.geometry();
            let mut row = [0.0; 3];
            for (k, (x, y)) in probes.iter().enumerate() {
                let i = ((x - geom.x0) / geom.dx).round() as usize;
                let j = ((y - geom.y0) / geom.dy).round() as usize;
                row[k] = (g.node(i, j) - lid_series(*x, *y)).abs();
            }
            errs.push(row);
        }
        for p in 0..3 {
            assert!(errs[2][p] < 1e-4, "probe {p}: finest error {:e}", errs[2][p]);
            let o1 = (errs[0][p] / errs[1][p]).log2();
            let o2 = (errs[1][p] / errs[2][p]).log2();
            assert!(
                (1.8..=2.2).contains(&o1) && (1.8..=2.2).contains(&o2),
                "probe {p}: observed orders {o1:.3}, {o2:.3} not ~2"
            );
        }
    }

    #[test]
    fn elevation_preserves_bounds_and_superposition() {
        let mut layout = strip_layout(1e-10);
        layout.surface_height_um = 0.5;
        let field = solve_unit_potentials(&layout).unwrap();
        let geom = *field.geometry();
        for grid in field.grids() {
            for &v in grid.values() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        for idx in 0..geom.nx * geom.ny {
            let total: f64 = field.grids().map(|g| g.values()[idx]).sum();
            assert!(total <= 1.0 + 1e-9, "superposition {total}");
        }
    }

    #[test]
    fn elevation_smooths_the_plane_solution() {
        // Directly above the middle of a wide electrode the elevated value
        // is large; far away it decays but stays positive.
        let layout = ElectrodeGeometry2D {
            x0: -3.0,
            y0: -3.0,
            x1: 3.0,
            y1: 3.0,
            dx: 0.1,
            dy: 0.1,
            electrodes: vec![Electrode::rect("pad", -1.5, -1.5, 1.5, 1.5)],
            surface_height_um: 0.0,
            tolerance: 1e-10,
            max_iterations: 1_000_000,
        };
        let plane = solve_unit_potentials(&layout).unwrap();
        let lifted = elevate_field(&plane, 0.5).unwrap();
        let g = lifted.grid("pad").unwrap();
        let center = g.eval(0.0, 0.0).unwrap().0;
        let far = g.eval(0.0, 2.6).unwrap().0;
        assert!(center > 0.6, "center {center}");
        assert!(far < center && far > 0.0, "far {far}");
        // The plane solution is exactly 1 at the pad center; elevation can
        // only pull it down (grounded plane far away takes mass).
        assert!(center < 1.0);
    }

    #[test]
    fn overlapping_electrodes_rejected() {
        let mut layout = strip_layout(1e-8);
        layout.electrodes = vec![
            Electrode::rect("a", 1.0, 1.0, 2.0, 2.0),
            Electrode::rect("b", 1.9, 1.9, 3.0, 3.0),
        ];
        assert!(matches!(solve_unit_potentials(&layout), Err(Error::Geometry(_))));
    }

    #[test]
    fn degenerate_layouts_rejected() {
        let mut layout = strip_layout(1e-8);
        layout.electrodes.clear();
        assert!(layout.validate().is_err());

        let mut layout = strip_layout(1e-8);
        layout.x1 = layout.x0;
        assert!(layout.validate().is_err());

        let mut layout = strip_layout(1e-8);
        layout.electrodes[0].polygon = vec![[0.0, 0.0], [1.0, 1.0]];
        assert!(layout.validate().is_err());

        let mut layout = strip_layout(1e-8);
        layout.electrodes[0].polygon = vec![[0.0, 0.0], [9.0, 1.0], [1.0, 1.0]];
        assert!(layout.validate().is_err(), "polygon outside the domain");
    }
}
