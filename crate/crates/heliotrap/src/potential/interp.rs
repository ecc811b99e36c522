//! Bicubic interpolation on uniform grids.
//!
//! Tensor-product cubic Hermite with centered-difference node slopes. The
//! scheme reproduces quadratics exactly, so harmonic test potentials keep
//! exact gradients and curvatures after sampling. The interpolant is C¹:
//! values and gradients are continuous everywhere, while second
//! derivatives are polynomial within each cell and may jump across cell
//! boundaries for non-quadratic data. Evaluation is refused within two
//! nodes of the grid edge: every stencil is fully interior and one-sided
//! differences never occur.

use crate::error::{Error, Result};

use super::GridGeometry;

/// Per-axis stencil location: cell index and local coordinate t ∈ [0, 1].
pub(crate) struct AxisLocation {
    pub cell: usize,
    pub t: f64,
}

pub(crate) fn locate(n: usize, origin: f64, step: f64, coord: f64) -> Option<AxisLocation> {
    let lo = origin + 2.0 * step;
    let hi = origin + (n as f64 - 3.0) * step;
    if !(coord >= lo && coord <= hi) {
        return None;
    }
    let s = (coord - origin) / step;
    let mut cell = s.floor() as isize;
    // Keep the 4-node stencil in range even when floating point puts the
    // cell one off at the margin boundary.
    cell = cell.clamp(1, n as isize - 3);
    Some(AxisLocation { cell: cell as usize, t: s - cell as f64 })
}

/// Node weights for value, first, and second derivative of the cubic
/// Hermite segment with centered-difference slopes. Derivatives are with
/// respect to t; divide by step (resp. step²) for physical units.
pub(crate) fn hermite_weights(t: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;

    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;

    let d00 = 6.0 * t2 - 6.0 * t;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = -6.0 * t2 + 6.0 * t;
    let d11 = 3.0 * t2 - 2.0 * t;

    let s00 = 12.0 * t - 6.0;
    let s10 = 6.0 * t - 4.0;
    let s01 = -12.0 * t + 6.0;
    let s11 = 6.0 * t - 2.0;

    // Slopes m0 = (f1 - f(-1))/2, m1 = (f2 - f0)/2 fold into node weights.
    let w = [
        -0.5 * h10,
        h00 - 0.5 * h11,
        h01 + 0.5 * h10,
        0.5 * h11,
    ];
    let dw = [
        -0.5 * d10,
        d00 - 0.5 * d11,
        d01 + 0.5 * d10,
        0.5 * d11,
    ];
    let ddw = [
        -0.5 * s10,
        s00 - 0.5 * s11,
        s01 + 0.5 * s10,
        0.5 * s11,
    ];
    (w, dw, ddw)
}

/// Value, gradient (per μm), and Hessian (per μm²) of one grid at (x, y).
/// `values` is row-major with x fastest, y increasing with row index.
pub(crate) fn eval_full(
    geom: &GridGeometry,
    values: &[f64],
    x: f64,
    y: f64,
) -> Result<(f64, [f64; 2], [f64; 3])> {
    let lx = locate(geom.nx, geom.x0, geom.dx, x).ok_or(Error::OutOfDomain(x, y))?;
    let ly = locate(geom.ny, geom.y0, geom.dy, y).ok_or(Error::OutOfDomain(x, y))?;
    let (wx, dwx, ddwx) = hermite_weights(lx.t);
    let (wy, dwy, ddwy) = hermite_weights(ly.t);

    let mut v = 0.0;
    let mut gx = 0.0;
    let mut gy = 0.0;
    let mut hxx = 0.0;
    let mut hxy = 0.0;
    let mut hyy = 0.0;
    for (jj, (&wyj, (&dwyj, &ddwyj))) in
        wy.iter().zip(dwy.iter().zip(ddwy.iter())).enumerate()
    {
        let j = ly.cell + jj - 1;
        let row = j * geom.nx + lx.cell - 1;
        let mut rv = 0.0;
        let mut rdx = 0.0;
        let mut rddx = 0.0;
        for ii in 0..4 {
            let f = values[row + ii];
            rv += wx[ii] * f;
            rdx += dwx[ii] * f;
            rddx += ddwx[ii] * f;
        }
        v += wyj * rv;
        gx += wyj * rdx;
        gy += dwyj * rv;
        hxx += wyj * rddx;
        hxy += dwyj * rdx;
        hyy += ddwyj * rv;
    }

    let inv_dx = 1.0 / geom.dx;
    let inv_dy = 1.0 / geom.dy;
    Ok((
        v,
        [gx * inv_dx, gy * inv_dy],
        [
            hxx * inv_dx * inv_dx,
            hxy * inv_dx * inv_dy,
            hyy * inv_dy * inv_dy,
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_grid(
        nx: usize,
        ny: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> (GridGeometry, Vec<f64>) {
        let geom = GridGeometry { nx, ny, x0: -1.0, y0: -2.0, dx: 0.25, dy: 0.2 };
        let mut v = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = geom.x0 + i as f64 * geom.dx;
                let y = geom.y0 + j as f64 * geom.dy;
                v[j * nx + i] = f(x, y);
            }
        }
        (geom, v)
    }

    #[test]
    fn reproduces_quadratics_exactly() {
        let f = |x: f64, y: f64| 0.3 + 0.5 * x - 0.25 * y + 0.75 * x * x - 0.4 * x * y + 0.6 * y * y;
        let (geom, v) = quad_grid(17, 21, f);
        for &(x, y) in &[(-0.1, -0.3), (0.73, 0.41), (-0.45, -1.1), (1.2, 0.9)] {
            let (val, g, h) = eval_full(&geom, &v, x, y).unwrap();
            assert!((val - f(x, y)).abs() < 1e-13, "value at ({x},{y})");
            assert!((g[0] - (0.5 + 1.5 * x - 0.4 * y)).abs() < 1e-12);
            assert!((g[1] - (-0.25 - 0.4 * x + 1.2 * y)).abs() < 1e-12);
            assert!((h[0] - 1.5).abs() < 1e-11);
            assert!((h[1] + 0.4).abs() < 1e-11);
            assert!((h[2] - 1.2).abs() < 1e-11);
        }
    }

    #[test]
    fn margin_is_enforced_on_all_sides() {
        let (geom, v) = quad_grid(9, 9, |x, y| x + y);
        // Valid interior coordinates for this 9x9 layout.
        let y_mid = geom.y0 + 4.0 * geom.dy;
        let x_mid = geom.x0 + 4.0 * geom.dx;
        let xlo = geom.x0 + 2.0 * geom.dx;
        let xhi = geom.x0 + (geom.nx as f64 - 3.0) * geom.dx;
        assert!(eval_full(&geom, &v, xlo, y_mid).is_ok());
        assert!(eval_full(&geom, &v, xhi, y_mid).is_ok());
        assert!(eval_full(&geom, &v, xlo - 1e-9, y_mid).is_err());
        assert!(eval_full(&geom, &v, xhi + 1e-9, y_mid).is_err());
        let ylo = geom.y0 + 2.0 * geom.dy;
        let yhi = geom.y0 + (geom.ny as f64 - 3.0) * geom.dy;
        assert!(eval_full(&geom, &v, x_mid, ylo - 1e-9).is_err());
        assert!(eval_full(&geom, &v, x_mid, yhi + 1e-9).is_err());
        assert!(eval_full(&geom, &v, x_mid, f64::NAN).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_of_values() {
        // Non-polynomial data: interpolant gradient must still equal the
        // finite-difference slope of the interpolant itself. Probes sit
        // mid-cell because second derivatives may jump at cell boundaries.
        let f = |x: f64, y: f64| (1.3 * x).sin() * (0.7 * y).cos() + 0.2 * x * y;
        let (geom, v) = quad_grid(25, 25, f);
        let h = 1e-4 * geom.dx;
        for &(x, y) in &[(0.31, -0.62), (0.9, 0.55), (-0.2, -1.33)] {
            let (_, g, hess) = eval_full(&geom, &v, x, y).unwrap();
            let vp = eval_full(&geom, &v, x + h, y).unwrap().0;
            let vm = eval_full(&geom, &v, x - h, y).unwrap().0;
            let fd = (vp - vm) / (2.0 * h);
            assert!(
                (g[0] - fd).abs() <= 1e-5 * g[0].abs().max(1e-3),
                "gx {0} vs fd {fd}",
                g[0]
            );
            let gp = eval_full(&geom, &v, x, y + h).unwrap().1[1];
            let gm = eval_full(&geom, &v, x, y - h).unwrap().1[1];
            let fd2 = (gp - gm) / (2.0 * h);
            assert!(
                (hess[2] - fd2).abs() <= 1e-4 * hess[2].abs().max(1e-2),
                "hyy {0} vs fd {fd2}",
                hess[2]
            );
        }
    }

    #[test]
    fn hessian_cross_terms_are_symmetric_by_construction() {
        let f = |x: f64, y: f64| (x * y).sin() + x * x * y;
        let (geom, v) = quad_grid(19, 19, f);
        let (_, _, h) = eval_full(&geom, &v, 0.4, -0.7).unwrap();
        // Single mixed-partial value is returned; symmetry is structural.
        assert_eq!(h.len(), 3);
        assert!(h[1].is_finite());
    }
}
