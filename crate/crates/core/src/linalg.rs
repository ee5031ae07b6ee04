//! Small dense helpers shared by the estimators and the MPO code.

use nalgebra::{DMatrix, SymmetricEigen};

/// Kronecker product of vectors, first factor most significant.
pub fn kron_vecs(factors: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for &a in &out {
            next.extend(f.iter().map(|&b| a * b));
        }
        out = next;
    }
    out
}

/// Writes the Kronecker product of `factors` into `out` (length Π len).
pub fn kron_into(factors: &[&[f64]], out: &mut [f64]) {
    let total: usize = factors.iter().map(|f| f.len()).product();
    debug_assert_eq!(out.len(), total);
    out[0] = 1.0;
    let mut len = 1;
    for f in factors {
        let k = f.len();
        // Expand in place from the back so earlier entries are not overwritten.
        for i in (0..len).rev() {
            let a = out[i];
            for (b, &v) in f.iter().enumerate().rev() {
                out[i * k + b] = a * v;
            }
        }
        len *= k;
    }
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn pow_usize(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Eigen-decomposition with eigenvalues in ascending order and matching columns.
pub fn sorted_eigen(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn symmetrize(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
}

pub fn spectral_norm(h: &DMatrix<f64>) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    let sym = (h - h.transpose()).amax() <= 1e-12 * h.amax().max(1.0);
    if sym {
        SymmetricEigen::new(h.clone()).eigenvalues.amax()
    } else {
        h.clone().singular_values().max()
    }
}

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * b;
    let s = m.singular_values();
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0);
    smin.acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_into_matches_kron_vecs() {
        let a = [1.0, 2.0];
        let b = [3.0, -1.0, 0.5];
        let c = [2.0, 7.0];
        let expected = kron_vecs(&[&a, &b, &c]);
        let mut out = vec![0.0; 12];
        kron_into(&[&a, &b, &c], &mut out);
        assert_eq!(out, expected);
        assert_eq!(expected[0], 6.0);
        assert_eq!(expected[1], 21.0);
        assert_eq!(expected[11], 2.0 * 0.5 * 7.0);
    }

    #[test]
    fn principal_angle_of_identical_spans_is_zero() {
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 0.0]);
        assert!(max_principal_angle(&a, &b) < 1e-12);
    }

    #[test]
    fn sorted_eigen_is_ascending() {
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (v, u) = sorted_eigen(&h);
        assert_eq!(v, vec![-1.0, 2.0, 3.0]);
        assert!((u[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
