//! Small dense linear algebra kernels for symmetric problems.
//!
//! Everything here operates on `ndarray` matrices of `f64`. The sizes in
//! this crate are tiny (at most 64x64 channel covariances), so the cyclic
//! Jacobi method is both fast enough and bitwise reproducible across
//! platforms, which matters for the golden-output tests downstream.

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Maximum relative asymmetry tolerated before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Checks that `a` is square and symmetric to within `SYMMETRY_TOL`
/// relative to its largest entry.
pub fn check_symmetric(a: &Array2<f64>) -> Result<(), LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let scale = a.iter().fold(0.0_f64, |m, &v| m.max(v.abs())).max(1e-300);
    let mut max_asym = 0.0_f64;
    for i in 0..rows {
        for j in (i + 1)..rows {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric { max_asym });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted in
/// descending order and eigenvectors as the corresponding *columns*.
/// The input is symmetrized (averaged with its transpose) before
/// iteration so tiny asymmetries from accumulated rounding do not bias
/// the rotations.
pub fn sym_eig(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>), LinalgError> {
    check_symmetric(a)?;
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
    let mut v = Array2::<f64>::eye(n);

    let max_sweeps = 64;
    for sweep in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        let scale = m.diag().iter().fold(0.0_f64, |s, &d| s + d * d) + 2.0 * off;
        if off <= 1e-30 * scale.max(1e-300) || off == 0.0 {
            return Ok(sorted_eigen(&m, &v));
        }
        let _ = sweep;

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                // Skip rotations that cannot change anything at f64 precision.
                if apq.abs() <= f64::EPSILON * 0.5 * (app.abs() + aqq.abs()) {
                    m[[p, q]] = 0.0;
                    m[[q, p]] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;

                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(LinalgError::NoConvergence { sweeps: max_sweeps })
}

fn sorted_eigen(m: &Array2<f64>, v: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the Jacobi output order for exact ties.
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let mut values = Array1::<f64>::zeros(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = m[[src, src]];
        for k in 0..n {
            vectors[[k, dst]] = v[[k, src]];
        }
    }
    (values, vectors)
}

/// Cholesky factorization `a = L L^T` of a symmetric positive definite
/// matrix, returning the lower-triangular factor.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>, LinalgError> {
    check_symmetric(a)?;
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(LinalgError::NotPositiveDefinite { pivot: sum, index: i });
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L` by forward substitution.
pub fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let t = l[[i, k]] * x[k];
            x[i] -= t;
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L` by back substitution.
pub fn solve_lower_transpose(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[[k, i]] * x[k];
            x[i] -= t;
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solves the SPD system `a x = b` via Cholesky factorization.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, LinalgError> {
    let l = cholesky(a)?;
    Ok(solve_lower_transpose(&l, &solve_lower(&l, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut b = Array2::<f64>::zeros((n, n));
        for v in b.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut spd = b.t().dot(&b);
        for i in 0..n {
            spd[[i, i]] += 0.1;
        }
        spd
    }

    #[test]
    fn eig_diagonal_matrix() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let (vals, vecs) = sym_eig(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!((vecs[[0, 0]].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 8, 16] {
            let a = random_spd(n, &mut rng);
            let (vals, vecs) = sym_eig(&a).unwrap();
            let lam = Array2::from_diag(&vals);
            let recon = vecs.dot(&lam).dot(&vecs.t());
            for (x, y) in a.iter().zip(recon.iter()) {
                assert!((x - y).abs() < 1e-9, "reconstruction error {} vs {}", x, y);
            }
            // Orthonormal eigenvectors.
            let vtv = vecs.t().dot(&vecs);
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((vtv[[i, j]] - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(sym_eig(&a), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn cholesky_roundtrip_and_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(6, &mut rng);
        let l = cholesky(&a).unwrap();
        let recon = l.dot(&l.t());
        for (x, y) in a.iter().zip(recon.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        let b = Array1::from_vec((0..6).map(|i| i as f64 - 2.5).collect());
        let x = solve_spd(&a, &b).unwrap();
        let bx = a.dot(&x);
        for (u, v) in b.iter().zip(bx.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            cholesky(&a),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }
}
