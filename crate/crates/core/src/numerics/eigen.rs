use crate::error::{Error, Result};

use super::matrix::{Matrix, SymmetricMatrix};

/// Off-diagonal Frobenius tolerance, relative to `max(1, ‖M‖_F)`.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Full spectrum of a symmetric matrix, eigenvalues ascending.
///
/// Column `t` of `eigenvectors` pairs with `eigenvalues[t]`. Each column is
/// unit length and its largest-magnitude component is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenResult {
    pub fn vector(&self, t: usize) -> Vec<f64> {
        (0..self.eigenvectors.rows())
            .map(|i| self.eigenvectors[(i, t)])
            .collect()
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn symmetric_eigh(m: &SymmetricMatrix) -> Result<EigenResult> {
    jacobi(m, JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS)
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

pub(crate) fn jacobi(m: &SymmetricMatrix, tol: f64, max_sweeps: usize) -> Result<EigenResult> {
    let n = m.order();
    if !m.as_matrix().is_finite() {
        return Err(Error::NonFinite("eigensolver input"));
    }
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let threshold = tol * m.frobenius_norm().max(1.0);

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= threshold {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence { sweeps, residual: off });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));

    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (t, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 1..n {
            if v[(i, src)].abs() > v[(pivot, src)].abs() {
                pivot = i;
            }
        }
        let sign = if v[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[(i, t)] = sign * v[(i, src)];
        }
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Annihilates `a[p][q]` with one Givens rotation, accumulating into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        1.0 / (2.0 * theta)
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = a.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(rows: &[Vec<f64>]) -> SymmetricMatrix {
        SymmetricMatrix::from_matrix(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
        SymmetricMatrix::from_upper(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn residuals(m: &SymmetricMatrix, e: &EigenResult) -> (f64, f64) {
        let n = m.order();
        let v = &e.eigenvectors;
        let mut d = Matrix::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = e.eigenvalues[i];
        }
        let recon = v.matmul(&d).unwrap().matmul(&v.transpose()).unwrap();
        let recon_err = recon.sub(m.as_matrix()).unwrap().frobenius_norm();
        let gram = v.transpose().matmul(v).unwrap();
        let ortho_err = gram.sub(&Matrix::identity(n)).unwrap().frobenius_norm();
        (recon_err, ortho_err)
    }

    #[test]
    fn identity_two_by_two() {
        let e = symmetric_eigh(&sym(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_sorted_with_axis_vectors() {
        let e = symmetric_eigh(&sym(&[vec![3.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 3.0]);
        assert_eq!(e.vector(0), vec![0.0, 1.0]);
        assert_eq!(e.vector(1), vec![1.0, 0.0]);
    }

    #[test]
    fn two_by_two_characteristic_polynomial() {
        // det([[2-l,1],[1,2-l]]) = (2-l)^2 - 1 => l in {1, 3}
        let e = symmetric_eigh(&sym(&[vec![2.0, 1.0], vec![1.0, 2.0]])).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vector(0);
        let v1 = e.vector(1);
        assert!((v0[0] - h).abs() < 1e-14 && (v0[1] + h).abs() < 1e-14);
        assert!((v1[0] - h).abs() < 1e-14 && (v1[1] - h).abs() < 1e-14);
    }

    #[test]
    fn random_matrices_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 5, 8, 17, 32, 64] {
            let m = random_symmetric(n, &mut rng);
            let e = symmetric_eigh(&m).unwrap();
            let (recon, ortho) = residuals(&m, &e);
            assert!(recon <= 1e-8 * m.frobenius_norm().max(1.0), "n={n} recon={recon}");
            assert!(ortho <= 1e-8, "n={n} ortho={ortho}");
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn sweep_cap_reports_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_symmetric(6, &mut rng);
        match jacobi(&m, JACOBI_TOLERANCE, 0) {
            Err(Error::NoConvergence { sweeps, residual }) => {
                assert_eq!(sweeps, 0);
                assert!(residual > 0.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_symmetric(12, &mut rng);
        assert_eq!(symmetric_eigh(&m).unwrap(), symmetric_eigh(&m).unwrap());
    }
}
