//! Small dense linear-algebra routines: Cholesky factorisation, triangular
//! solves, covariance, and a Jacobi eigensolver for symmetric matrices.
//! Everything here runs at latent-space scale (k up to a few dozen).

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// stored row-major as `k×k`.
pub fn cholesky(a: &[f64], k: usize) -> Result<Vec<f64>> {
    if a.len() != k * k {
        return Err(Error::Shape(format!(
            "cholesky: expected {}x{} matrix, got {} elements",
            k,
            k,
            a.len()
        )));
    }
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Stats(format!(
                        "matrix is not positive definite (pivot {s:.3e} at {i})"
                    )));
                }
                l[i * k + j] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Ok(l)
}

/// Solve `L w = b` by forward substitution, `L` lower-triangular row-major.
pub fn solve_lower(l: &[f64], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut w = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * k + j] * w[j];
        }
        w[i] = s / l[i * k + i];
    }
    w
}

/// Mean vector and population covariance (divisor `n`) of `n×k` row-major data.
pub fn mean_covariance(data: &[f64], n: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            mean[j] += data[i * k + j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; k * k];
    for i in 0..n {
        for a in 0..k {
            let da = data[i * k + a] - mean[a];
            for b in a..k {
                cov[a * k + b] += da * (data[i * k + b] - mean[b]);
            }
        }
    }
    for a in 0..k {
        for b in a..k {
            let v = cov[a * k + b] / n as f64;
            cov[a * k + b] = v;
            cov[b * k + a] = v;
        }
    }
    (mean, cov)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns), sorted descending.
pub fn symmetric_eigen(a: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != k * k {
        return Err(Error::Shape("symmetric_eigen: not a k×k matrix".into()));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                off += m[i * k + j] * m[i * k + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = m[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * k + p];
                let aqq = m[q * k + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let mip = m[i * k + p];
                    let miq = m[i * k + q];
                    m[i * k + p] = c * mip - s * miq;
                    m[i * k + q] = s * mip + c * miq;
                }
                for j in 0..k {
                    let mpj = m[p * k + j];
                    let mqj = m[q * k + j];
                    m[p * k + j] = c * mpj - s * mqj;
                    m[q * k + j] = s * mpj + c * mqj;
                }
                for i in 0..k {
                    let vip = v[i * k + p];
                    let viq = v[i * k + q];
                    v[i * k + p] = c * vip - s * viq;
                    v[i * k + q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| m[b * k + b].partial_cmp(&m[a * k + a]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| m[i * k + i]).collect();
    let mut eigvecs = vec![0.0; k * k];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..k {
            eigvecs[row * k + col] = v[row * k + src];
        }
    }
    Ok((eigvals, eigvecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_matrix() {
        // SPD matrix built as AᵀA + I.
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..3 {
                    s += l[i * 3 + p] * l[j * 3 + p];
                }
                assert!((s - a[i * 3 + j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&a, 2).is_err());
    }

    #[test]
    fn solve_lower_inverts_forward_product() {
        let l = [2.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.5, -1.0, 1.5];
        let w = [1.0, -2.0, 0.25];
        // b = L w
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += l[i * 3 + j] * w[j];
            }
        }
        let got = solve_lower(&l, &b);
        for (g, want) in got.iter().zip(w) {
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_of_identity_samples() {
        // Two anti-correlated columns.
        let data = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0];
        let (mean, cov) = mean_covariance(&data, 4, 2);
        assert!(mean.iter().all(|m| m.abs() < 1e-12));
        assert!((cov[0] - 1.0).abs() < 1e-12);
        assert!((cov[3] - 1.0).abs() < 1e-12);
        assert!((cov[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_eigen_diagonalises() {
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let (vals, vecs) = symmetric_eigen(&a, 3).unwrap();
        // A v = λ v for every eigenpair.
        for e in 0..3 {
            for i in 0..3 {
                let mut av = 0.0;
                for j in 0..3 {
                    av += a[i * 3 + j] * vecs[j * 3 + e];
                }
                assert!((av - vals[e] * vecs[i * 3 + e]).abs() < 1e-9);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }
}
