//! Dense numerical kernels shared by the scoring and estimation modules.
//!
//! Everything here works on small matrices (tens of rows/columns for the
//! eigenproblems, a few hundred rows for least squares), so the algorithms
//! favour robustness over asymptotic speed.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e}")]
    AsymmetricInput { row: usize, col: usize, diff: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("objective is not finite at x = {x}")]
    NonFiniteEvaluation { x: f64 },
    #[error("invalid search interval [{lo}, {hi}] with {grid} grid points")]
    InvalidInterval { lo: f64, hi: f64, grid: usize },
    #[error("design is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Relative symmetry tolerance accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A square matrix that has been checked for symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, NumericsError> {
        if m.nrows() != m.ncols() {
            return Err(NumericsError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.amax();
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if diff > SYMMETRY_TOL * scale {
                    return Err(NumericsError::AsymmetricInput { row: i, col: j, diff });
                }
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    /// Index of the largest eigenvalue (the last one, values are ascending).
    pub fn max_index(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-15;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Each sweep visits every off-diagonal pair once and applies the plane
/// rotation that annihilates it. Iteration stops once the off-diagonal
/// Frobenius mass falls below `1e-15 * ||A||_F`.
pub fn eig_sym(m: &SymMatrix) -> SymEigen {
    let n = m.order();
    let mut a = m.as_matrix().clone();
    // symmetrize exactly so rotations see a consistent matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let frob = a.norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * frob || off == 0.0 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymEigen { values, vectors }
}

fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a scalar function on `[lo, hi]`.
///
/// A uniform grid of `grid` points is scanned first; golden-section search
/// then refines inside the two cells around the best grid point until the
/// bracket is narrower than `tol`. The result is never worse than the best
/// grid point.
pub fn maximize_1d<F>(f: F, lo: f64, hi: f64, grid: usize, tol: f64) -> Result<Maximum, NumericsError>
where
    F: Fn(f64) -> f64,
{
    if !(lo < hi) || grid < 2 || !lo.is_finite() || !hi.is_finite() {
        return Err(NumericsError::InvalidInterval { lo, hi, grid });
    }
    let eval = |x: f64| -> Result<f64, NumericsError> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(NumericsError::NonFiniteEvaluation { x })
        }
    };

    let step = (hi - lo) / (grid - 1) as f64;
    let point = |i: usize| if i == grid - 1 { hi } else { lo + step * i as f64 };
    let mut best = Maximum { x: lo, value: eval(lo)? };
    let mut best_idx = 0;
    for i in 1..grid {
        let x = point(i);
        let y = eval(x)?;
        if y > best.value {
            best = Maximum { x, value: y };
            best_idx = i;
        }
    }

    let mut a = point(best_idx.saturating_sub(1));
    let mut b = point((best_idx + 1).min(grid - 1));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let fm = eval(mid)?;
    for (x, y) in [(mid, fm), (c, fc), (d, fd)] {
        if y > best.value {
            best = Maximum { x, value: y };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

/// Columns whose Householder pivot falls below this fraction of the
/// column's own norm (or of the largest column norm) count as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Least squares by Householder QR.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares, NumericsError> {
    let (rows, cols) = x.shape();
    if y.len() != rows {
        return Err(NumericsError::DimensionMismatch(format!(
            "design has {rows} rows but response has {}",
            y.len()
        )));
    }
    if rows < cols {
        return Err(NumericsError::DimensionMismatch(format!(
            "{rows} rows cannot identify {cols} coefficients"
        )));
    }
    let col_norms: Vec<f64> = (0..cols).map(|j| x.column(j).norm()).collect();
    let max_norm = col_norms.iter().cloned().fold(0.0, f64::max);

    let mut r = x.clone();
    let mut qty = y.clone();
    for k in 0..cols {
        let alpha = {
            let col = r.view((k, k), (rows - k, 1));
            let norm = col.norm();
            if r[(k, k)] > 0.0 {
                -norm
            } else {
                norm
            }
        };
        if alpha.abs() <= RANK_TOL * col_norms[k] || alpha.abs() <= RANK_TOL * max_norm {
            return Err(NumericsError::RankDeficient { column: k });
        }
        let mut v: Vec<f64> = (k..rows).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|e| e * e).sum();
        if vnorm2 > 0.0 {
            for j in k..cols {
                let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * r[(k + i, j)]).sum();
                let scale = 2.0 * dot / vnorm2;
                for (i, vi) in v.iter().enumerate() {
                    r[(k + i, j)] -= scale * vi;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * qty[k + i]).sum();
            let scale = 2.0 * dot / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                qty[k + i] -= scale * vi;
            }
        }
    }

    let mut beta = DVector::<f64>::zeros(cols);
    for k in (0..cols).rev() {
        let mut acc = qty[k];
        for j in (k + 1)..cols {
            acc -= r[(k, j)] * beta[j];
        }
        beta[k] = acc / r[(k, k)];
    }
    let residuals = y - x * &beta;
    let rss = residuals.norm_squared();
    Ok(LeastSquares {
        coefficients: beta,
        residuals,
        rss,
    })
}
