//! Small dense linear algebra: cyclic Jacobi for symmetric matrices and
//! Cholesky solves for symmetric positive-definite systems.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Array2<f64>,
}

/// Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi rotations.
///
/// Iteration stops once the off-diagonal Frobenius norm drops below
/// `1e-12 * trace` (or `1e-12 * ||A||_F` when the trace is not positive).
pub fn sym_eigen(a: ArrayView2<'_, f64>) -> Result<SymEigen> {
    let (values, vectors) = jacobi(a, true)?;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let vecs = vectors.expect("vectors requested");
    let mut sorted_vals = Array1::zeros(n);
    let mut sorted_vecs = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        sorted_vals[dst] = values[src];
        for r in 0..n {
            sorted_vecs[[r, dst]] = vecs[r * n + src];
        }
    }
    Ok(SymEigen {
        values: sorted_vals,
        vectors: sorted_vecs,
    })
}

/// Eigenvalues only (descending); skips the rotation accumulation.
pub fn sym_eigenvalues(a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (mut values, _) = jacobi(a, false)?;
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

fn jacobi(a: ArrayView2<'_, f64>, want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let mut m: Vec<f64> = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            // symmetrize against round-off in the caller's construction
            m.push(0.5 * (a[[r, c]] + a[[c, r]]));
        }
    }
    let mut v = want_vectors.then(|| {
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        id
    });

    let trace: f64 = (0..n).map(|i| m[i * n + i]).sum();
    let scale = if trace > 0.0 {
        trace
    } else {
        m.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let threshold = JACOBI_REL_TOL * scale;

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m[p * n + q] * m[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    m[r * n + p] = new_rp;
                    m[p * n + r] = new_rp;
                    m[r * n + q] = new_rq;
                    m[q * n + r] = new_rq;
                }
                if let Some(v) = v.as_mut() {
                    for r in 0..n {
                        let vrp = v[r * n + p];
                        let vrq = v[r * n + q];
                        v[r * n + p] = c * vrp - s * vrq;
                        v[r * n + q] = s * vrp + c * vrq;
                    }
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps (n={n})"
        )));
    }
    let values = (0..n).map(|i| m[i * n + i]).collect();
    Ok((values, v))
}

/// Lower-triangular Cholesky factor of an SPD matrix, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "Cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[[i, j]];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::Numerical(format!(
                            "matrix not positive definite (pivot {i} = {sum:e})"
                        )));
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    /// Solve `A X = B` for every column of `B`.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.n;
        if b.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "right-hand side has {} rows, system has {n}",
                b.nrows()
            )));
        }
        let mut x = b.to_owned();
        let mut col = vec![0.0; n];
        for c in 0..b.ncols() {
            for i in 0..n {
                col[i] = x[[i, c]];
            }
            for i in 0..n {
                let mut s = col[i];
                for (k, v) in col.iter().enumerate().take(i) {
                    s -= self.l[i * n + k] * v;
                }
                col[i] = s / self.l[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for (k, v) in col.iter().enumerate().skip(i + 1) {
                    s -= self.l[k * n + i] * v;
                }
                col[i] = s / self.l[i * n + i];
            }
            for i in 0..n {
                x[[i, c]] = col[i];
            }
        }
        Ok(x)
    }
}

/// `A + alpha * I`.
pub fn add_ridge(a: ArrayView2<'_, f64>, alpha: f64) -> Array2<f64> {
    let mut out = a.to_owned();
    for i in 0..out.nrows() {
        out[[i, i]] += alpha;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn jacobi_diagonal_matrix_is_fixed_point() {
        let a = array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let e = sym_eigen(a.view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = array![
            [4.0, 1.0, -2.0, 0.5],
            [1.0, 3.0, 0.0, 1.0],
            [-2.0, 0.0, 5.0, -1.0],
            [0.5, 1.0, -1.0, 2.0]
        ];
        let e = sym_eigen(a.view()).unwrap();
        let lam = Array2::from_diag(&e.values);
        let rebuilt = e.vectors.dot(&lam).dot(&e.vectors.t());
        for (x, y) in rebuilt.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
        let gram = e.vectors.t().dot(&e.vectors);
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(gram[[i, j]], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        // eigenvalues of [[2,1],[1,2]] are 3 and 1
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let vals = sym_eigenvalues(a.view()).unwrap();
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_matrix_converges_immediately() {
        let a = Array2::<f64>::zeros((5, 5));
        assert_eq!(sym_eigenvalues(a.view()).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn non_square_rejected() {
        let a = Array2::<f64>::zeros((2, 3));
        assert!(matches!(sym_eigen(a.view()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]];
        let x = Cholesky::factor(a.view()).unwrap().solve(b.view()).unwrap();
        let back = a.dot(&x);
        for (u, v) in back.iter().zip(b.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(Cholesky::factor(a.view()), Err(Error::Numerical(_))));
    }
}
