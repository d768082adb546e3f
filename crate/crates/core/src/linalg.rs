//! Dense LU solve with a reciprocal-condition estimate.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use crate::error::FitError;

/// Factorizations whose estimated reciprocal 1-norm condition number falls
/// below this are rejected.
pub const RCOND_THRESHOLD: f64 = 1e-14;

pub(crate) struct LuSolver {
    lu: PartialPivLu<f64>,
    n: usize,
}

impl LuSolver {
    /// Factors the square matrix `a` (row-major, `n × n`) with partial pivoting.
    pub(crate) fn factor(a: &[f64], n: usize) -> Result<Self, FitError> {
        debug_assert_eq!(a.len(), n * n);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }
        let mat = Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
        let anorm = norm1(a, n);
        let lu = mat.partial_piv_lu();
        let u = lu.U();
        if let Some(column) = (0..n).find(|&k| u[(k, k)] == 0.0) {
            return Err(FitError::Singular { column });
        }
        let solver = LuSolver { lu, n };
        let inv_norm = solver.estimate_inverse_norm1();
        let rcond = if anorm == 0.0 || !inv_norm.is_finite() { 0.0 } else { 1.0 / (anorm * inv_norm) };
        if !(rcond >= RCOND_THRESHOLD) {
            return Err(FitError::IllConditioned { rcond, threshold: RCOND_THRESHOLD });
        }
        Ok(solver)
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    /// Hager/Higham estimate of `‖A⁻¹‖₁` from a handful of solves.
    fn estimate_inverse_norm1(&self) -> f64 {
        let n = self.n;
        if n == 1 {
            return self.solve(&[1.0])[0].abs();
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0f64;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.solve(&x);
            let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
            if !y_norm.is_finite() {
                return f64::INFINITY;
            }
            if iter > 0 && y_norm <= est {
                break;
            }
            est = y_norm;
            let signs: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&signs);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if iter > 0 && (zmax <= ztx || j == last_j) {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        // alternating test vector guards against the classic failure cases
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n - 1) as f64)
            })
            .collect();
        let alt_est = 2.0 * self.solve(&alt).iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n).map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max)
}
