//! Fock-space action of one-particle unitaries.
//!
//! A unitary `U` on the mode space induces `Gamma(U)` on Fock space with
//! `Gamma(U) c_i^dagger Gamma(U)^dagger = sum_j U_ji c_j^dagger`. `U` is
//! factored into nearest-neighbour Givens rotations and a diagonal phase, each
//! of which acts on occupation strings without Jordan-Wigner strings.

use alloc::vec::Vec;

use crate::linalg::CMatrix;
use crate::C64;

#[derive(Debug, Clone)]
pub struct OrbitalRotation {
    modes: usize,
    /// `(p, g)`: a rotation mixing modes `p` and `p + 1`, `g` row-major 2x2.
    givens: Vec<(usize, [C64; 4])>,
    phases: Vec<C64>,
}

impl OrbitalRotation {
    /// Factor `u`. The matrix must be unitary; this is not re-checked.
    pub fn new(u: &CMatrix) -> Self {
        let n = u.nrows();
        let mut a = u.clone();
        let mut eliminations = Vec::new();
        for col in 0..n {
            for row in (col + 1..n).rev() {
                let x = a[(row - 1, col)];
                let y = a[(row, col)];
                if y.norm() == 0.0 {
                    continue;
                }
                let r = libm::sqrt(x.norm_sqr() + y.norm_sqr());
                let g = [x.conj() / r, y.conj() / r, -y / r, x / r];
                for c in 0..n {
                    let (top, bottom) = (a[(row - 1, c)], a[(row, c)]);
                    a[(row - 1, c)] = g[0] * top + g[1] * bottom;
                    a[(row, c)] = g[2] * top + g[3] * bottom;
                }
                eliminations.push((row - 1, g));
            }
        }
        let phases = (0..n).map(|i| a[(i, i)]).collect();
        // R_K ... R_1 U = D, so U = R_1^dagger ... R_K^dagger D.
        let givens = eliminations
            .into_iter()
            .rev()
            .map(|(p, g)| (p, [g[0].conj(), g[2].conj(), g[1].conj(), g[3].conj()]))
            .collect();
        Self { modes: n, givens, phases }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Apply `Gamma(U)` in place.
    pub fn apply(&self, psi: &mut [C64]) {
        debug_assert_eq!(psi.len(), 1usize << self.modes);
        for (b, amp) in psi.iter_mut().enumerate() {
            let mut f = C64::new(1.0, 0.0);
            let mut bits = b;
            while bits != 0 {
                f *= self.phases[bits.trailing_zeros() as usize];
                bits &= bits - 1;
            }
            *amp *= f;
        }
        // givens is stored as R_K^dagger, ..., R_1^dagger: apply in that order.
        for &(p, g) in &self.givens {
            apply_adjacent(psi, p, &g);
        }
    }

    /// Apply `Gamma(U)^dagger = Gamma(U^dagger)` in place.
    pub fn apply_adjoint(&self, psi: &mut [C64]) {
        for &(p, g) in self.givens.iter().rev() {
            let adj = [g[0].conj(), g[2].conj(), g[1].conj(), g[3].conj()];
            apply_adjacent(psi, p, &adj);
        }
        for (b, amp) in psi.iter_mut().enumerate() {
            let mut f = C64::new(1.0, 0.0);
            let mut bits = b;
            while bits != 0 {
                f *= self.phases[bits.trailing_zeros() as usize].conj();
                bits &= bits - 1;
            }
            *amp *= f;
        }
    }
}

fn apply_adjacent(psi: &mut [C64], p: usize, g: &[C64; 4]) {
    let lo = 1usize << p;
    let hi = lo << 1;
    let det = g[0] * g[3] - g[1] * g[2];
    for b in 0..psi.len() {
        if b & (lo | hi) != 0 {
            continue;
        }
        let (ip, iq, both) = (b | lo, b | hi, b | lo | hi);
        let (x, y) = (psi[ip], psi[iq]);
        psi[ip] = g[0] * x + g[1] * y;
        psi[iq] = g[2] * x + g[3] * y;
        psi[both] *= det;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{det_in_place, hermitian_eigh};
    use alloc::vec;

    fn random_unitary(n: usize, seed: f64) -> CMatrix {
        let h = CMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (i.min(j) as f64, i.max(j) as f64);
            let re = libm::sin(seed + 1.7 * a + 0.3 * b);
            let im = if i == j { 0.0 } else { libm::cos(seed * 0.5 + a * b) };
            C64::new(re, if i < j { im } else { -im })
        });
        let (e, v) = hermitian_eigh(&h);
        let phase = CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(0.0, e[i] * 2.0).exp() } else { C64::new(0.0, 0.0) });
        &v * phase * v.adjoint()
    }

    /// Independent route: amplitude of Gamma(U)|b> on b' is det U[b', b].
    fn determinant_oracle(u: &CMatrix, psi: &[C64]) -> Vec<C64> {
        let n = u.nrows();
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        for (b, &amp) in psi.iter().enumerate() {
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            let cols: Vec<usize> = (0..n).filter(|&i| b >> i & 1 == 1).collect();
            for (bp, slot) in out.iter_mut().enumerate() {
                if bp.count_ones() as usize != cols.len() {
                    continue;
                }
                let rows: Vec<usize> = (0..n).filter(|&i| bp >> i & 1 == 1).collect();
                let k = rows.len();
                let mut buf: Vec<C64> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).map(|(r, c)| u[(r, c)]).collect();
                *slot += amp * det_in_place(&mut buf, k);
            }
        }
        out
    }

    #[test]
    fn matches_determinant_formula() {
        for n in [1, 2, 3, 5] {
            let u = random_unitary(n, 0.4 + n as f64);
            let rot = OrbitalRotation::new(&u);
            let psi: Vec<C64> = (0..1usize << n).map(|b| C64::new(libm::sin(b as f64 + 0.1), libm::cos(2.0 * b as f64))).collect();
            let expected = determinant_oracle(&u, &psi);
            let mut got = psi.clone();
            rot.apply(&mut got);
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).norm() < 1e-12, "n={n}: {g} vs {e}");
            }
            rot.apply_adjoint(&mut got);
            for (g, e) in got.iter().zip(&psi) {
                assert!((g - e).norm() < 1e-12);
            }
        }
    }
}
