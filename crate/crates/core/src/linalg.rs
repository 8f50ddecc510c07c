//! Small dense helpers on top of nalgebra.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::C64;

pub type CMatrix = DMatrix<C64>;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// ascending and eigenvectors as matching columns.
pub fn hermitian_eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Maximum deviation of `m` from Hermiticity.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// `max |U^dagger U - I|` over entries.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    libm::sqrt(norm_sqr(a))
}

/// Determinant of the `k x k` row-major matrix stored in `buf` by LU
/// decomposition with partial pivoting. The buffer is overwritten.
pub fn det_in_place(buf: &mut [C64], k: usize) -> C64 {
    debug_assert_eq!(buf.len(), k * k);
    let mut det = C64::new(1.0, 0.0);
    for col in 0..k {
        let mut pivot = col;
        let mut best = buf[col * k + col].norm_sqr();
        for row in col + 1..k {
            let v = buf[row * k + col].norm_sqr();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot != col {
            for c in 0..k {
                buf.swap(col * k + c, pivot * k + c);
            }
            det = -det;
        }
        let p = buf[col * k + col];
        det *= p;
        for row in col + 1..k {
            let factor = buf[row * k + col] / p;
            if factor == C64::new(0.0, 0.0) {
                continue;
            }
            for c in col + 1..k {
                let upper = buf[col * k + c];
                buf[row * k + c] -= factor * upper;
            }
        }
    }
    det
}
