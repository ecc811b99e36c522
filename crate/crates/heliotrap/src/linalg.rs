//! Dense symmetric matrices and their eigendecomposition.
//!
//! The mode problems this crate produces are small (2N×2N for N electrons,
//! N of order tens), so the eigensolver is a cyclic Jacobi sweep: it is
//! simple, unconditionally stable for symmetric input, and delivers near
//! machine-precision orthonormal eigenvectors, which the coupling
//! projections downstream rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric matrix stored as the packed lower triangle, so symmetry is
/// exact by construction rather than a maintained invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    n: usize,
    // Row-packed lower triangle: element (i, j) with i >= j at i(i+1)/2 + j.
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        SymmetricMatrix { n, data: vec![0.0; n * (n + 1) / 2] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.data[i * (i + 1) / 2 + j] = f(i, j);
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        hi * (hi + 1) / 2 + lo
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index ({i}, {j}) out of range for order {}", self.n);
        self.data[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.n && j < self.n, "index ({i}, {j}) out of range for order {}", self.n);
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                s += v * v;
            }
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// y = M x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }
}

/// Eigendecomposition with eigenvalues ascending. `vectors[k]` is the unit
/// eigenvector for `values[k]`, sign-fixed so its largest-magnitude
/// component (first such index on ties) is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi diagonalization of a symmetric matrix.
pub fn eig_symmetric(m: &SymmetricMatrix) -> Result<Eigen> {
    let n = m.order();
    if n == 0 {
        return Err(Error::InvalidParameter("eigensolver needs order >= 1".into()));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("eigensolver input matrix".into()));
    }

    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let norm = m.frobenius_norm();
    let off_tol = 1e-15 * norm.max(f64::MIN_POSITIVE);
    let max_sweeps = 60;
    let mut converged = false;

    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if (2.0 * off).sqrt() <= off_tol {
            converged = true;
            break;
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                // Skip rotations that cannot change the diagonal at f64
                // resolution; required for termination on graded matrices.
                if apq.abs() <= 1e-300
                    || apq.abs() <= f64::EPSILON * 1e-3 * (a[p][p].abs() + a[q][q]).abs()
                {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let app = a[p][p];
                let aqq = a[q][q];
                a[p][p] = app - t * apq;
                a[q][q] = aqq + t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[r][p];
                        let arq = a[r][q];
                        a[r][p] = arp - s * (arq + tau * arp);
                        a[p][r] = a[r][p];
                        a[r][q] = arq + s * (arp - tau * arq);
                        a[q][r] = a[r][q];
                    }
                }
                for r in 0..n {
                    let vrp = v[r][p];
                    let vrq = v[r][q];
                    v[r][p] = vrp - s * (vrq + tau * vrp);
                    v[r][q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    if !converged {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        return Err(Error::Convergence {
            context: "jacobi eigensolver sweeps".into(),
            residual: (2.0 * off).sqrt(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &k in &order {
        values.push(a[k][k]);
        let mut vec_k: Vec<f64> = (0..n).map(|r| v[r][k]).collect();
        let mut imax = 0;
        for (i, comp) in vec_k.iter().enumerate() {
            if comp.abs() > vec_k[imax].abs() {
                imax = i;
            }
        }
        if vec_k[imax] < 0.0 {
            for comp in &mut vec_k {
                *comp = -*comp;
            }
        }
        vectors.push(vec_k);
    }

    Ok(Eigen { values, vectors })
}

/// Solve the dense system A·x = b by Gaussian elimination with partial
/// pivoting. A is row-major n×n and is consumed along with b. Sized for
/// the small normal-equation systems the fitter produces.
pub fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::InvalidParameter(format!(
            "matrix has {} entries, expected {} for {n} unknowns",
            a.len(),
            n * n
        )));
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        let p = a[pivot * n + col];
        if !p.is_finite() || p.abs() < f64::MIN_POSITIVE {
            return Err(Error::Singularity(p.abs()));
        }
        if pivot != col {
            for k in col..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Ok(x)
}
