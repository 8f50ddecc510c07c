//! Periodic lattice, the central-difference Dirac operator and its spectral
//! data.
//!
//! Sites are indexed lexicographically in their coordinates (last axis
//! fastest) and the one-particle mode of spin component `s` at site `x` is
//! `x * spin_dim + s`. The hopping term uses the symmetric difference
//! `(psi(x + a e_j) - psi(x - a e_j)) / 2a`, which keeps the operator
//! Hermitian; the resulting doubler modes at the zone boundary are kept.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::C64;

/// Spectral gap tolerance: every one-particle energy must satisfy
/// `|E| >= mass - GAP_TOL`.
pub const GAP_TOL: f64 = 1e-9;
/// Energies closer than this are treated as one degenerate eigenspace.
pub const DEGENERACY_TOL: f64 = 1e-9;
const CONJUGATION_TOL: f64 = 1e-10;

/// Parameters of the lattice model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    /// Spatial dimension, 1 to 3.
    pub dim: usize,
    /// Sites per side.
    pub n_per_side: usize,
    /// Box length; the lattice spacing is `box_length / n_per_side`.
    pub box_length: f64,
    pub mass: f64,
    /// Spinor components: 4 (Dirac) or 2 (one-dimensional reduction).
    pub spin_dim: usize,
}

impl LatticeSpec {
    pub fn new(dim: usize, n_per_side: usize, box_length: f64, mass: f64, spin_dim: usize) -> Result<Self> {
        let spec = Self { dim, n_per_side, box_length, mass, spin_dim };
        spec.validate()?;
        Ok(spec)
    }

    /// One-dimensional two-component model with unit lattice spacing.
    pub fn chain(n_per_side: usize, mass: f64) -> Self {
        Self { dim: 1, n_per_side, box_length: n_per_side as f64, mass, spin_dim: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidSpec(format!("dim must be 1, 2 or 3, got {}", self.dim)));
        }
        if self.n_per_side < 2 {
            return Err(Error::InvalidSpec(format!("n_per_side must be >= 2, got {}", self.n_per_side)));
        }
        if !(self.box_length > 0.0 && self.box_length.is_finite()) {
            return Err(Error::InvalidSpec(format!("box_length must be positive, got {}", self.box_length)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidSpec(format!("mass must be positive, got {}", self.mass)));
        }
        match (self.spin_dim, self.dim) {
            (4, _) | (2, 1) => Ok(()),
            (2, d) => Err(Error::InvalidSpec(format!("spin_dim 2 is only defined for dim 1, got dim {d}"))),
            (s, _) => Err(Error::InvalidSpec(format!("spin_dim must be 2 or 4, got {s}"))),
        }
    }

    pub fn sites(&self) -> usize {
        self.n_per_side.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n_per_side as f64
    }

    /// Number of one-particle (position-spin) modes.
    pub fn modes(&self) -> usize {
        self.sites() * self.spin_dim
    }

    /// Pre-particles per site in the level configuration.
    pub fn half_spin(&self) -> usize {
        self.spin_dim / 2
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        let mut rest = site;
        for axis in (0..self.dim).rev() {
            c[axis] = rest % self.n_per_side;
            rest /= self.n_per_side;
        }
        c
    }

    pub fn site_index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.n_per_side + c % self.n_per_side)
    }

    /// Site reached from `site` by `step` (+1 or -1) along `axis`, periodically.
    pub fn neighbor(&self, site: usize, axis: usize, forward: bool) -> usize {
        let mut c = self.coords(site);
        let n = self.n_per_side;
        c[axis] = if forward { (c[axis] + 1) % n } else { (c[axis] + n - 1) % n };
        self.site_index(&c)
    }

    /// Euclidean distance between two sites on the periodic lattice.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        let n = self.n_per_side;
        let sq: usize = ca
            .iter()
            .zip(&cb)
            .map(|(&x, &y)| {
                let d = x.abs_diff(y);
                let d = d.min(n - d);
                d * d
            })
            .sum();
        libm::sqrt(sq as f64) * self.spacing()
    }

    /// Lattice momentum vector for a momentum index (same encoding as sites).
    pub fn momentum(&self, index: usize) -> Vec<f64> {
        self.coords(index)
            .into_iter()
            .map(|n| 2.0 * PI * n as f64 / self.box_length)
            .collect()
    }

    /// Positive branch of the central-difference dispersion,
    /// `sqrt(m^2 + sum_j sin^2(k_j a) / a^2)`.
    pub fn dispersion(&self, k: &[f64]) -> f64 {
        let a = self.spacing();
        let s: f64 = k.iter().map(|&kj| libm::pow(libm::sin(kj * a) / a, 2.0)).sum();
        libm::sqrt(self.mass * self.mass + s)
    }

    /// Largest group velocity `|dE/dk|` along a lattice axis, sampled on a
    /// fine grid of the Brillouin zone.
    pub fn max_group_velocity(&self) -> f64 {
        let a = self.spacing();
        let samples = 4096;
        (0..samples)
            .map(|i| {
                let k = PI / a * i as f64 / samples as f64;
                let e = self.dispersion(&[k]);
                (libm::sin(k * a) * libm::cos(k * a) / a / e).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Dirac matrices `(alphas, beta)` in the representation used for `spin_dim`.
pub fn dirac_matrices(spin_dim: usize, dim: usize) -> (Vec<CMatrix>, CMatrix) {
    let c = |re: f64, im: f64| C64::new(re, im);
    let sx = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
    let sy = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
    let sz = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
    if spin_dim == 2 {
        return (vec![sx], sz);
    }
    let block_off = |s: &CMatrix| {
        let mut m = CMatrix::zeros(4, 4);
        m.view_mut((0, 2), (2, 2)).copy_from(s);
        m.view_mut((2, 0), (2, 2)).copy_from(s);
        m
    };
    let alphas = [sx, sy, sz].iter().take(dim).map(block_off).collect();
    let beta = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1., 0.), c(1., 0.), c(-1., 0.), c(-1., 0.)]));
    (alphas, beta)
}

/// Assemble `h1 = -i alpha . nabla + beta m` with the central difference and
/// periodic boundaries.
pub fn assemble_h1(spec: &LatticeSpec) -> CMatrix {
    let d = spec.spin_dim;
    let n = spec.modes();
    let a = spec.spacing();
    let (alphas, beta) = dirac_matrices(d, spec.dim);
    let mut h = CMatrix::zeros(n, n);
    for x in 0..spec.sites() {
        for s in 0..d {
            for t in 0..d {
                h[(x * d + s, x * d + t)] += beta[(s, t)] * spec.mass;
            }
        }
        for (axis, alpha) in alphas.iter().enumerate() {
            let fwd = spec.neighbor(x, axis, true);
            let bwd = spec.neighbor(x, axis, false);
            // -i alpha (psi(x+a) - psi(x-a)) / 2a
            let coeff = C64::new(0.0, -1.0 / (2.0 * a));
            for s in 0..d {
                for t in 0..d {
                    h[(x * d + s, fwd * d + t)] += coeff * alpha[(s, t)];
                    h[(x * d + s, bwd * d + t)] -= coeff * alpha[(s, t)];
                }
            }
        }
    }
    h
}

/// Unitary one-site shift along `axis`: `(S psi)(x) = psi(x - e_axis)`.
pub fn shift_operator(spec: &LatticeSpec, axis: usize) -> CMatrix {
    let d = spec.spin_dim;
    let n = spec.modes();
    let mut s = CMatrix::zeros(n, n);
    for x in 0..spec.sites() {
        let from = spec.neighbor(x, axis, false);
        for c in 0..d {
            s[(x * d + c, from * d + c)] = C64::new(1.0, 0.0);
        }
    }
    s
}

/// On-site anti-unitary charge conjugation `C psi = U conj(psi)` applied
/// componentwise at every site.
#[derive(Debug, Clone, PartialEq)]
pub struct Conjugation {
    /// The `spin_dim x spin_dim` unitary `U`.
    pub matrix: CMatrix,
    /// Human-readable name of the candidate that passed verification.
    pub label: String,
    /// `C^2 = sign * I`.
    pub square_sign: i8,
    /// Measured `max |C h1 C^-1 + h1|`.
    pub defect: f64,
}

impl Conjugation {
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let d = self.matrix.nrows();
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (site_out, site_in) in out.chunks_mut(d).zip(v.chunks(d)) {
            for (s, z) in site_out.iter_mut().enumerate() {
                *z = (0..d).map(|t| self.matrix[(s, t)] * site_in[t].conj()).sum();
            }
        }
        out
    }

    /// `C^-1 v = conj(U^dagger v)`.
    pub fn apply_inverse(&self, v: &[C64]) -> Vec<C64> {
        let d = self.matrix.nrows();
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (site_out, site_in) in out.chunks_mut(d).zip(v.chunks(d)) {
            for (s, out_s) in site_out.iter_mut().enumerate() {
                let z: C64 = (0..d).map(|t| self.matrix[(t, s)].conj() * site_in[t]).sum();
                *out_s = z.conj();
            }
        }
        out
    }

    fn lifted(&self, sites: usize) -> CMatrix {
        let d = self.matrix.nrows();
        let mut m = CMatrix::zeros(d * sites, d * sites);
        for x in 0..sites {
            m.view_mut((x * d, x * d), (d, d)).copy_from(&self.matrix);
        }
        m
    }
}

fn conjugation_candidates(spin_dim: usize) -> Vec<(String, CMatrix)> {
    let i = C64::new(0.0, 1.0);
    let (alphas4, beta4) = dirac_matrices(4, 3);
    let (alphas2, beta2) = dirac_matrices(2, 1);
    if spin_dim == 4 {
        let a2 = &alphas4[1];
        let g5 = {
            let mut m = CMatrix::zeros(4, 4);
            for k in 0..2 {
                m[(k, k + 2)] = C64::new(1.0, 0.0);
                m[(k + 2, k)] = C64::new(1.0, 0.0);
            }
            m
        };
        vec![
            (String::from("i*alpha2"), a2 * i),
            (String::from("i*beta*alpha2"), &beta4 * a2 * i),
            (String::from("i*alpha2*gamma5"), a2 * &g5 * i),
            (String::from("i*beta*alpha2*gamma5"), &beta4 * a2 * &g5 * i),
        ]
    } else {
        let sx = alphas2[0].clone();
        let sz = beta2;
        let sy = &sz * &sx * i;
        vec![
            (String::from("sigma_y"), sy),
            (String::from("sigma_x"), sx),
            (String::from("sigma_z"), sz),
        ]
    }
}

/// Search the candidate list for an on-site conjugation with
/// `C h1 C^-1 = -h1` and freeze the first that verifies.
pub fn find_conjugation(spec: &LatticeSpec, h1: &CMatrix) -> Result<Conjugation> {
    let mut best = f64::INFINITY;
    for (label, u) in conjugation_candidates(spec.spin_dim) {
        let mut c = Conjugation { matrix: u, label, square_sign: 0, defect: 0.0 };
        let lifted = c.lifted(spec.sites());
        // C h1 C^-1 acting on psi: U conj(h1 conj(U^dagger psi)) = U conj(h1) U^dagger psi.
        let transformed = &lifted * h1.map(|z| z.conj()) * lifted.adjoint();
        let defect = linalg::max_abs(&(transformed + h1));
        best = best.min(defect);
        if defect < CONJUGATION_TOL {
            let sq = &c.matrix * c.matrix.map(|z| z.conj());
            let d = spec.spin_dim;
            let plus = linalg::max_abs(&(&sq - CMatrix::identity(d, d)));
            let minus = linalg::max_abs(&(&sq + CMatrix::identity(d, d)));
            c.square_sign = if plus < 1e-12 {
                1
            } else if minus < 1e-12 {
                -1
            } else {
                continue;
            };
            c.defect = defect;
            return Ok(c);
        }
    }
    Err(Error::ConjugationMismatch { deviation: best })
}

/// The one-particle Dirac operator with its spectral split.
#[derive(Debug, Clone)]
pub struct OneParticleSystem {
    pub spec: LatticeSpec,
    pub h1: CMatrix,
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors in the order of `eigenvalues`.
    pub eigenvectors: CMatrix,
    pub neg_modes: Vec<usize>,
    pub pos_modes: Vec<usize>,
    pub conjugation: Conjugation,
}

/// Assemble, diagonalize and split the one-particle operator.
pub fn build_one_particle(spec: &LatticeSpec) -> Result<OneParticleSystem> {
    spec.validate()?;
    let h1 = assemble_h1(spec);
    let scale = linalg::max_abs(&h1).max(1.0);
    let defect = linalg::hermiticity_defect(&h1);
    if defect > 1e-12 * scale {
        return Err(Error::NonHermitian { deviation: defect });
    }
    let (eigenvalues, eigenvectors) = linalg::hermitian_eigh(&h1);
    if let Some(&e) = eigenvalues.iter().find(|e| e.abs() < 1e-9) {
        return Err(Error::ZeroMode { energy: e });
    }
    debug_assert!(eigenvalues.iter().all(|e| e.abs() >= spec.mass - GAP_TOL));
    let neg_modes: Vec<usize> = (0..eigenvalues.len()).filter(|&i| eigenvalues[i] < 0.0).collect();
    let pos_modes: Vec<usize> = (0..eigenvalues.len()).filter(|&i| eigenvalues[i] > 0.0).collect();
    if neg_modes.len() != pos_modes.len() {
        return Err(Error::ModeCountMismatch { neg: neg_modes.len(), pos: pos_modes.len() });
    }
    let conjugation = find_conjugation(spec, &h1)?;
    Ok(OneParticleSystem { spec: *spec, h1, eigenvalues, eigenvectors, neg_modes, pos_modes, conjugation })
}

impl OneParticleSystem {
    pub fn modes(&self) -> usize {
        self.spec.modes()
    }

    /// Sum of the negative energies (energy of the filled sea).
    pub fn sea_energy(&self) -> f64 {
        self.neg_modes.iter().map(|&i| self.eigenvalues[i]).sum()
    }

    /// Orthogonal projector onto the positive spectral subspace.
    pub fn positive_projector(&self) -> CMatrix {
        let n = self.modes();
        let v = self.eigenvectors.columns_range(n / 2..);
        v * v.adjoint()
    }

    pub fn negative_projector(&self) -> CMatrix {
        let n = self.modes();
        let v = self.eigenvectors.columns_range(..n / 2);
        v * v.adjoint()
    }
}

/// Eigenbasis in which every vector is a plane wave in one lattice momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEigenbasis {
    pub energies: Vec<f64>,
    /// Columns are the eigenvectors, ordered by (energy, momentum, branch).
    pub vectors: CMatrix,
    /// Momentum multi-index encoded like a site index.
    pub momentum_index: Vec<usize>,
    /// Position of the vector within its (energy, momentum) block.
    pub spin_branch: Vec<usize>,
}

impl LabeledEigenbasis {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn column(&self, i: usize) -> Vec<C64> {
        self.vectors.column(i).iter().copied().collect()
    }

    pub fn negative(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.energies[i] < 0.0)
    }

    pub fn positive(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.energies[i] > 0.0)
    }
}

/// Re-orthonormalize every degenerate eigenspace so that each vector lives in
/// a single lattice momentum.
///
/// For an eigenspace with projector `P` and momentum `k`, the plane-wave
/// block `M = Phi_k^dagger P Phi_k` is a projector on spinor space; its
/// range is spanned by pivoted Gram-Schmidt on its columns. The output is a
/// function of the spectral projectors only, so it is independent of the
/// phases of the input eigenvectors.
pub fn momentum_eigenbasis(sys: &OneParticleSystem) -> Result<LabeledEigenbasis> {
    momentum_basis_from(&sys.spec, &sys.eigenvalues, &sys.eigenvectors)
}

/// Same as [`momentum_eigenbasis`] starting from an already labeled basis.
pub fn relabel(spec: &LatticeSpec, basis: &LabeledEigenbasis) -> Result<LabeledEigenbasis> {
    momentum_basis_from(spec, &basis.energies, &basis.vectors)
}

fn momentum_basis_from(spec: &LatticeSpec, energies: &[f64], vectors: &CMatrix) -> Result<LabeledEigenbasis> {
    let n = energies.len();
    let d = spec.spin_dim;
    let sites = spec.sites();
    let norm = 1.0 / libm::sqrt(sites as f64);
    // Plane-wave phases e^{i k.x} / sqrt(sites) for every (momentum, site).
    let phase: Vec<Vec<C64>> = (0..sites)
        .map(|kappa| {
            let k = spec.momentum(kappa);
            (0..sites)
                .map(|x| {
                    let pos: Vec<f64> = spec.coords(x).iter().map(|&c| c as f64 * spec.spacing()).collect();
                    let arg: f64 = k.iter().zip(&pos).map(|(a, b)| a * b).sum();
                    C64::new(libm::cos(arg), libm::sin(arg)) * norm
                })
                .collect()
        })
        .collect();

    let mut out_energy = Vec::with_capacity(n);
    let mut out_vecs: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut out_k = Vec::with_capacity(n);
    let mut out_branch = Vec::with_capacity(n);

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && energies[end] - energies[end - 1] < DEGENERACY_TOL {
            end += 1;
        }
        let cluster = end - start;
        let energy = energies[start..end].iter().sum::<f64>() / cluster as f64;
        let mut found = 0;
        for (kappa, ph) in phase.iter().enumerate() {
            // B = Phi_k^dagger V_c, a d x cluster matrix.
            let mut b = CMatrix::zeros(d, cluster);
            for s in 0..d {
                for c in 0..cluster {
                    b[(s, c)] = (0..sites).map(|x| ph[x].conj() * vectors[(x * d + s, start + c)]).sum();
                }
            }
            let m = &b * b.adjoint();
            if linalg::max_abs(&(&m * &m - &m)) > 1e-8 {
                return Err(Error::DegeneracyResolutionFailed { energy });
            }
            for (branch, u) in pivoted_gram_schmidt(&m).into_iter().enumerate() {
                let mut v = vec![C64::new(0.0, 0.0); n];
                for x in 0..sites {
                    for s in 0..d {
                        v[x * d + s] = ph[x] * u[s];
                    }
                }
                out_energy.push(energy);
                out_vecs.push(v);
                out_k.push(kappa);
                out_branch.push(branch);
                found += 1;
            }
        }
        if found != cluster {
            return Err(Error::DegeneracyResolutionFailed { energy });
        }
        start = end;
    }
    let vectors = CMatrix::from_fn(n, n, |r, c| out_vecs[c][r]);
    Ok(LabeledEigenbasis { energies: out_energy, vectors, momentum_index: out_k, spin_branch: out_branch })
}

/// Orthonormal basis of the range of a Hermitian projector `m`, choosing at
/// each step the column with the largest residual (lowest index on ties).
fn pivoted_gram_schmidt(m: &CMatrix) -> Vec<Vec<C64>> {
    let d = m.nrows();
    let mut residual: Vec<Vec<C64>> = (0..d).map(|j| m.column(j).iter().copied().collect()).collect();
    let mut basis: Vec<Vec<C64>> = Vec::new();
    let mut used = vec![false; d];
    loop {
        let norms: Vec<f64> = residual.iter().map(|r| linalg::norm(r)).collect();
        let max = (0..d).filter(|&j| !used[j]).map(|j| norms[j]).fold(0.0, f64::max);
        if max < 1e-6 {
            break;
        }
        let pick = (0..d).find(|&j| !used[j] && norms[j] >= max * (1.0 - 1e-8)).unwrap();
        used[pick] = true;
        let u: Vec<C64> = residual[pick].iter().map(|z| z / norms[pick]).collect();
        for (j, r) in residual.iter_mut().enumerate() {
            if used[j] {
                continue;
            }
            let overlap = linalg::inner(&u, r);
            for (ri, ui) in r.iter_mut().zip(&u) {
                *ri -= overlap * ui;
            }
        }
        basis.push(u);
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize, d: usize, len: f64) -> LatticeSpec {
        LatticeSpec::new(1, n, len, 1.0, d).unwrap()
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(LatticeSpec::new(0, 4, 4.0, 1.0, 2).is_err());
        assert!(LatticeSpec::new(1, 1, 4.0, 1.0, 2).is_err());
        assert!(LatticeSpec::new(1, 4, 4.0, 0.0, 2).is_err());
        assert!(LatticeSpec::new(1, 4, -1.0, 1.0, 2).is_err());
        assert!(LatticeSpec::new(1, 4, 4.0, 1.0, 3).is_err());
        assert!(LatticeSpec::new(2, 4, 4.0, 1.0, 2).is_err());
        assert!(LatticeSpec::new(3, 2, 2.0, 1.0, 4).is_ok());
    }

    #[test]
    fn two_site_chain_pairs_energies() {
        let sys = build_one_particle(&chain(2, 2, 2.0)).unwrap();
        assert_eq!(sys.h1.nrows(), 4);
        let e = &sys.eigenvalues;
        for i in 0..e.len() {
            assert!((e[i] + e[e.len() - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn four_site_chain_matches_dispersion() {
        let sys = build_one_particle(&chain(4, 2, 4.0)).unwrap();
        // k a in {0, pi/2, pi, 3pi/2}, a = 1: E = +-sqrt(1 + sin^2)
        let mut expected: Vec<f64> = [0.0f64, 0.5, 1.0, 1.5]
            .iter()
            .flat_map(|&f| {
                let e = libm::sqrt(1.0 + libm::pow(libm::sin(f * PI), 2.0));
                [e, -e]
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        for (got, want) in sys.eigenvalues.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn dirac_four_components_in_one_dimension() {
        let sys = build_one_particle(&chain(3, 4, 3.0)).unwrap();
        assert_eq!(sys.h1.nrows(), 12);
        assert_eq!(sys.neg_modes.len(), 6);
        assert_eq!(sys.conjugation.label, "i*beta*alpha2");
    }

    #[test]
    fn two_component_conjugation_is_sigma_x() {
        let sys = build_one_particle(&chain(6, 2, 6.0)).unwrap();
        assert_eq!(sys.conjugation.label, "sigma_x");
        assert_eq!(sys.conjugation.square_sign, 1);
    }

    #[test]
    fn spectral_invariants() {
        for spec in [chain(4, 2, 4.0), chain(5, 2, 2.5), chain(3, 4, 3.0), LatticeSpec::new(2, 3, 3.0, 0.7, 4).unwrap()] {
            let sys = build_one_particle(&spec).unwrap();
            let e = &sys.eigenvalues;
            let n = e.len();
            for i in 0..n {
                assert!((e[i] + e[n - 1 - i]).abs() < 1e-10);
                assert!(e[i].abs() >= spec.mass - GAP_TOL);
            }
            assert!(linalg::unitarity_defect(&sys.eigenvectors) < 1e-12);
            for axis in 0..spec.dim {
                let s = shift_operator(&spec, axis);
                assert!(linalg::max_abs(&(&s * &sys.h1 * s.adjoint() - &sys.h1)) < 1e-12);
            }
            assert!(sys.conjugation.defect < 1e-10);
            // C maps the negative subspace onto the positive one.
            let pplus = sys.positive_projector();
            for &i in &sys.neg_modes {
                let v: Vec<C64> = sys.eigenvectors.column(i).iter().copied().collect();
                let cv = sys.conjugation.apply(&v);
                let proj = &pplus * nalgebra::DVector::from_vec(cv.clone());
                let diff: f64 = proj.iter().zip(&cv).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(diff < 1e-10);
            }
        }
    }

    #[test]
    fn conjugation_inverse_round_trips() {
        let sys = build_one_particle(&chain(3, 4, 3.0)).unwrap();
        let v: Vec<C64> = (0..12).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect();
        let back = sys.conjugation.apply_inverse(&sys.conjugation.apply(&v));
        assert!(v.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn momentum_basis_single_momentum_support() {
        for spec in [chain(4, 2, 4.0), chain(6, 2, 3.0), chain(3, 4, 3.0), LatticeSpec::new(2, 2, 2.0, 1.0, 4).unwrap()] {
            let sys = build_one_particle(&spec).unwrap();
            let basis = momentum_eigenbasis(&sys).unwrap();
            assert_eq!(basis.len(), spec.modes());
            assert!(linalg::unitarity_defect(&basis.vectors) < 1e-12);
            let d = spec.spin_dim;
            for c in 0..basis.len() {
                let v = basis.column(c);
                // eigenvector
                let hv = &sys.h1 * nalgebra::DVector::from_vec(v.clone());
                for (a, b) in hv.iter().zip(&v) {
                    assert!((a - b * basis.energies[c]).norm() < 1e-10);
                }
                // plane wave: v(x, s) = e^{ik.x} u(s) / sqrt(sites)
                let k = spec.momentum(basis.momentum_index[c]);
                for x in 0..spec.sites() {
                    let pos: Vec<f64> = spec.coords(x).iter().map(|&q| q as f64 * spec.spacing()).collect();
                    let arg: f64 = k.iter().zip(&pos).map(|(a, b)| a * b).sum();
                    let ph = C64::new(libm::cos(arg), libm::sin(arg));
                    for s in 0..d {
                        assert!((v[x * d + s] - v[s] * ph).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn momentum_basis_is_deterministic_and_idempotent() {
        let sys = build_one_particle(&chain(4, 2, 4.0)).unwrap();
        let first = momentum_eigenbasis(&sys).unwrap();
        let second = momentum_eigenbasis(&sys).unwrap();
        assert_eq!(first, second);
        // k and -k at equal energy are distinct outputs.
        let e = first.energies[0];
        let same: Vec<usize> = (0..first.len()).filter(|&i| (first.energies[i] - e).abs() < 1e-9).collect();
        let mut ks: Vec<usize> = same.iter().map(|&i| first.momentum_index[i]).collect();
        ks.dedup();
        assert_eq!(ks.len(), same.len());
        let again = relabel(&sys.spec, &first).unwrap();
        assert_eq!(again.momentum_index, first.momentum_index);
        assert_eq!(again.spin_branch, first.spin_branch);
        assert!(linalg::max_abs(&(&again.vectors - &first.vectors)) < 1e-12);
    }

    #[test]
    fn group_velocity_of_unit_chain() {
        // max_k |sin k cos k| / sqrt(1 + sin^2 k) at m = a = 1
        let spec = chain(8, 2, 8.0);
        let brute = (0..200_000)
            .map(|i| {
                let k = PI * i as f64 / 200_000.0;
                (libm::sin(2.0 * k) / 2.0 / libm::sqrt(1.0 + libm::pow(libm::sin(k), 2.0))).abs()
            })
            .fold(0.0, f64::max);
        assert!((spec.max_group_velocity() - brute).abs() < 1e-5);
    }

    #[test]
    fn periodic_distance() {
        let spec = chain(6, 2, 3.0);
        assert!((spec.distance(0, 5) - 0.5).abs() < 1e-15);
        assert!((spec.distance(1, 4) - 1.5).abs() < 1e-15);
    }
}
