//! Reference implementations written from scratch for the tests: dense
//! matrices, explicit Jordan-Wigner signs and Slater determinants. Nothing
//! here calls into the Fock or measure code under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C;

pub type M = DMatrix<C>;
pub type V = DVector<C>;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// `-i alpha (psi(x+1) - psi(x-1)) / 2a + beta m` on a periodic chain, modes
/// ordered `site * d + spin`.
pub fn h1_chain(n: usize, a: f64, m: f64, d: usize) -> M {
    let (alpha, beta) = if d == 2 {
        (
            M::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            M::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
        )
    } else {
        // alpha_1 = [[0, sigma_x], [sigma_x, 0]]
        let mut al = M::zeros(4, 4);
        al[(0, 3)] = c(1., 0.);
        al[(1, 2)] = c(1., 0.);
        al[(2, 1)] = c(1., 0.);
        al[(3, 0)] = c(1., 0.);
        let be = M::from_diagonal(&V::from_vec(vec![c(1., 0.), c(1., 0.), c(-1., 0.), c(-1., 0.)]));
        (al, be)
    };
    let mut h = M::zeros(n * d, n * d);
    let hop = c(0.0, -1.0 / (2.0 * a));
    for x in 0..n {
        let (f, b) = ((x + 1) % n, (x + n - 1) % n);
        for s in 0..d {
            for t in 0..d {
                h[(x * d + s, x * d + t)] += beta[(s, t)] * m;
                h[(x * d + s, f * d + t)] += hop * alpha[(s, t)];
                h[(x * d + s, b * d + t)] -= hop * alpha[(s, t)];
            }
        }
    }
    h
}

/// Eigenvalues ascending with matching eigenvector columns.
pub fn eigh(h: &M) -> (Vec<f64>, M) {
    let e = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = M::from_columns(&order.iter().map(|&i| e.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

pub fn spectral_norm(m: &M) -> f64 {
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// `c_i |b>` as `(string, sign)`.
pub fn annihilate(b: usize, i: usize) -> Option<(usize, f64)> {
    if b >> i & 1 == 0 {
        return None;
    }
    let sign = if (b & ((1 << i) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((b ^ (1 << i), sign))
}

pub fn create(b: usize, i: usize) -> Option<(usize, f64)> {
    if b >> i & 1 == 1 {
        return None;
    }
    let sign = if (b & ((1 << i) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((b | (1 << i), sign))
}

/// Dense `sum_ij A_ij c_i^dagger c_j` on the listed strings.
pub fn second_quantize(a: &M, strings: &[usize]) -> M {
    let pos: std::collections::HashMap<usize, usize> = strings.iter().enumerate().map(|(k, &b)| (b, k)).collect();
    let n = a.nrows();
    let mut out = M::zeros(strings.len(), strings.len());
    for (col, &b) in strings.iter().enumerate() {
        for j in 0..n {
            let Some((b1, s1)) = annihilate(b, j) else { continue };
            for i in 0..n {
                if a[(i, j)] == c(0., 0.) {
                    continue;
                }
                let Some((b2, s2)) = create(b1, i) else { continue };
                if let Some(&row) = pos.get(&b2) {
                    out[(row, col)] += a[(i, j)] * (s1 * s2);
                }
            }
        }
    }
    out
}

/// Strings of `n` bits with `k` set, ascending.
pub fn sector(n: usize, k: usize) -> Vec<usize> {
    (0..1usize << n).filter(|b| b.count_ones() as usize == k).collect()
}

pub fn full(n: usize) -> Vec<usize> {
    (0..1usize << n).collect()
}

/// Charge per site of a string: `d/2 - occupation`.
pub fn charges(b: usize, sites: usize, d: usize) -> Vec<i32> {
    (0..sites).map(|x| (d / 2) as i32 - (b >> (x * d) & ((1 << d) - 1)).count_ones() as i32).collect()
}

pub fn charge_key(q: &[i32]) -> Vec<i8> {
    q.iter().map(|&v| v as i8).collect()
}

/// Sea amplitudes `<b|Omega> = det V[b, :]` over the half-filled strings,
/// with `V` the negative-energy eigenvectors of `h1`.
pub fn sea_amplitudes(h1: &M) -> Vec<C> {
    let n = h1.nrows();
    let (vals, vecs) = eigh(h1);
    let neg: Vec<usize> = (0..n).filter(|&i| vals[i] < 0.0).collect();
    let mut amps = vec![c(0., 0.); 1 << n];
    for b in sector(n, neg.len()) {
        let rows: Vec<usize> = (0..n).filter(|i| b >> i & 1 == 1).collect();
        let sub = M::from_fn(rows.len(), neg.len(), |r, k| vecs[(rows[r], neg[k])]);
        amps[b] = sub.determinant();
    }
    amps
}

/// `exp(-i H t)` applied to `psi` through an eigendecomposition of `H`.
pub struct DenseEvolution {
    vals: Vec<f64>,
    vecs: M,
}

impl DenseEvolution {
    pub fn new(h: &M) -> Self {
        let (vals, vecs) = eigh(h);
        Self { vals, vecs }
    }

    pub fn apply(&self, psi: &V, t: f64) -> V {
        let mut coeff = self.vecs.adjoint() * psi;
        for (k, z) in coeff.iter_mut().enumerate() {
            *z *= C::from_polar(1.0, -self.vals[k] * t);
        }
        &self.vecs * coeff
    }
}

pub fn tv(p: &std::collections::BTreeMap<Vec<i8>, f64>, q: &std::collections::BTreeMap<Vec<i8>, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&Vec<i8>> = p.keys().chain(q.keys()).collect();
    0.5 * keys.into_iter().map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Uniform complex entries in the unit square, normalized.
pub fn random_state(rng: &mut impl rand_core::RngCore, len: usize) -> Vec<C> {
    let mut u = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
    let v: Vec<C> = (0..len).map(|_| c(u(), u())).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Dense matrix of a linear map given by its action on basis vectors.
pub fn dense_of(dim: usize, mut f: impl FnMut(&[C]) -> Vec<C>) -> M {
    let mut m = M::zeros(dim, dim);
    let mut e = vec![c(0., 0.); dim];
    for j in 0..dim {
        e[j] = c(1., 0.);
        let col = f(&e);
        for (i, z) in col.into_iter().enumerate() {
            m[(i, j)] = z;
        }
        e[j] = c(0., 0.);
    }
    m
}
