//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Number of entries in the packed upper triangle of a `d x d` matrix.
pub const fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of entry `(i, j)` (any order) in row-major packed upper storage.
pub fn packed_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows 0..i hold d + (d-1) + ... + (d-i+1) entries
    i * (2 * d + 1 - i) / 2 + (j - i)
}

/// Packs the upper triangle of a symmetric matrix.
pub fn pack_upper(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(packed_len(d));
    for i in 0..d {
        for j in i..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Expands packed upper storage into a full symmetric matrix.
pub fn unpack_symmetric(d: usize, packed: &[f64]) -> DMatrix<f64> {
    debug_assert_eq!(packed.len(), packed_len(d));
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = packed[k];
            m[(j, i)] = packed[k];
            k += 1;
        }
    }
    m
}

pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

/// `ln det` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| num_traits::Float::ln(l[(i, i)])).sum::<f64>()
}

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for v in eig.eigenvalues.iter() {
        let a = num_traits::Float::abs(*v);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_layout_is_row_major_upper() {
        let d = 3;
        let expected = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        for (k, &(i, j)) in expected.iter().enumerate() {
            assert_eq!(packed_index(d, i, j), k);
            assert_eq!(packed_index(d, j, i), k);
        }
    }

    #[test]
    fn pack_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let p = pack_upper(&m);
        assert_eq!(p, [2.0, 0.5, 3.0]);
        assert_eq!(unpack_symmetric(2, &p), m);
    }
}
