//! Fermionic Fock space over the position-spin modes.
//!
//! Basis strings are integers whose bit `i` is the occupation of mode `i`
//! (mode `i` = site `i / spin_dim`, spin `i % spin_dim`). The basis state of
//! a string with occupied modes `i_1 < ... < i_k` is
//! `c_{i_1}^dagger ... c_{i_k}^dagger |bottom>`, so `c_i^dagger` and `c_i`
//! carry the sign `(-1)^(occupied modes below i)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::{momentum_eigenbasis, LabeledEigenbasis, OneParticleSystem};
use crate::linalg::{self, det_in_place};
use crate::C64;

/// Hard upper bound on the number of modes (2^26 amplitudes, 1 GiB).
pub const MAX_MODES: usize = 26;

const ZERO: C64 = C64::new(0.0, 0.0);

#[inline]
pub(crate) fn jw_sign(b: usize, mode: usize) -> f64 {
    if (b & ((1usize << mode) - 1)).count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// All `k`-subsets of `n` modes as bitstrings, ascending.
pub fn strings_with_popcount(n: usize, k: usize) -> impl Iterator<Item = usize> {
    let limit = 1usize << n;
    let mut next = if k == 0 { Some(0) } else if k > n { None } else { Some((1usize << k) - 1) };
    core::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            // Gosper's hack
            let c = cur & cur.wrapping_neg();
            let r = cur + c;
            let n = (((r ^ cur) >> 2) / c) | r;
            if n < limit {
                Some(n)
            } else {
                None
            }
        };
        Some(cur)
    })
}

/// The Fock space together with the one-particle data it was built from.
#[derive(Debug, Clone)]
pub struct FockSpace {
    pub sys: OneParticleSystem,
    /// Momentum-labeled eigenbasis; fixes the sea-state phase.
    pub basis: LabeledEigenbasis,
    modes: usize,
}

impl FockSpace {
    pub fn new(sys: OneParticleSystem) -> Result<Self> {
        let modes = sys.modes();
        if modes > MAX_MODES {
            return Err(Error::TooLarge { modes, limit: MAX_MODES });
        }
        let basis = momentum_eigenbasis(&sys)?;
        Ok(Self { sys, basis, modes })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        1usize << self.modes
    }

    pub fn sites(&self) -> usize {
        self.sys.spec.sites()
    }

    pub fn spin_dim(&self) -> usize {
        self.sys.spec.spin_dim
    }

    /// Version tag of the mode ordering, stored in exported state files.
    pub const MODE_ORDER_VERSION: u32 = 1;

    pub fn mode(&self, site: usize, spin: usize) -> usize {
        site * self.spin_dim() + spin
    }

    /// Bit mask of the modes belonging to `site`.
    pub fn site_mask(&self, site: usize) -> usize {
        let d = self.spin_dim();
        ((1usize << d) - 1) << (site * d)
    }

    /// Number of pre-particles at `site` in string `b`.
    #[inline]
    pub fn occupation(&self, b: usize, site: usize) -> usize {
        (b & self.site_mask(site)).count_ones() as usize
    }

    pub fn occupations(&self, b: usize) -> Vec<usize> {
        (0..self.sites()).map(|x| self.occupation(b, x)).collect()
    }

    pub fn zero_vector(&self) -> Vec<C64> {
        vec![ZERO; self.dim()]
    }
}

/// Amplitudes over the occupation basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
    pub label: String,
    /// False for intermediate results such as `c_i psi`.
    pub normalized: bool,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>, label: impl Into<String>) -> Self {
        Self { amplitudes, label: label.into(), normalized: false }
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.amplitudes)
    }

    /// Rescale to unit norm; a zero vector is left untouched.
    pub fn normalize(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|z| *z /= n);
            self.normalized = true;
        }
        self
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        linalg::inner(&self.amplitudes, &other.amplitudes)
    }

    /// Checks `| ||psi|| - 1 | <= tol`.
    pub fn require_normalized(&self, tol: f64) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > tol {
            return Err(Error::NotNormalized { norm: n });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

fn check_len(space: &FockSpace, psi: &StateVector) {
    assert_eq!(psi.len(), space.dim(), "state does not belong to this Fock space");
}

/// `c_mode^dagger psi`.
pub fn create(space: &FockSpace, mode: usize, psi: &StateVector) -> StateVector {
    check_len(space, psi);
    assert!(mode < space.modes());
    let bit = 1usize << mode;
    let mut out = space.zero_vector();
    for (b, &amp) in psi.amplitudes.iter().enumerate() {
        if b & bit == 0 && amp != ZERO {
            out[b | bit] = amp * jw_sign(b, mode);
        }
    }
    StateVector::new(out, psi.label.clone())
}

/// `c_mode psi`.
pub fn annihilate(space: &FockSpace, mode: usize, psi: &StateVector) -> StateVector {
    check_len(space, psi);
    assert!(mode < space.modes());
    let bit = 1usize << mode;
    let mut out = space.zero_vector();
    for (b, &amp) in psi.amplitudes.iter().enumerate() {
        if b & bit != 0 && amp != ZERO {
            out[b ^ bit] = amp * jw_sign(b, mode);
        }
    }
    StateVector::new(out, psi.label.clone())
}

/// `Psi(f) psi = sum_i conj(f_i) c_i psi`, or `Psi^dagger(f) psi = sum_i f_i c_i^dagger psi`.
pub fn field_operator(space: &FockSpace, f: &[C64], dagger: bool, psi: &StateVector) -> Result<StateVector> {
    if f.len() != space.modes() {
        return Err(Error::DimensionMismatch { expected: space.modes(), found: f.len() });
    }
    check_len(space, psi);
    let mut out = space.zero_vector();
    for (b, &amp) in psi.amplitudes.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        for (i, &fi) in f.iter().enumerate() {
            if fi == ZERO {
                continue;
            }
            let bit = 1usize << i;
            let occupied = b & bit != 0;
            if dagger && !occupied {
                out[b | bit] += fi * amp * jw_sign(b, i);
            } else if !dagger && occupied {
                out[b ^ bit] += fi.conj() * amp * jw_sign(b, i);
            }
        }
    }
    Ok(StateVector::new(out, psi.label.clone()))
}

/// Second quantization `sum_ij A_ij c_i^dagger c_j + shift` of a one-particle
/// matrix, stored as its nonzero entries grouped by column.
#[derive(Debug, Clone)]
pub struct OneBodyOperator {
    modes: usize,
    /// `by_column[j]` lists `(i, A_ij)`.
    by_column: Vec<Vec<(usize, C64)>>,
    pub shift: f64,
}

impl OneBodyOperator {
    pub fn from_matrix(a: &linalg::CMatrix, shift: f64) -> Self {
        let n = a.nrows();
        let by_column = (0..n)
            .map(|j| (0..n).filter(|&i| a[(i, j)].norm() > 1e-15).map(|i| (i, a[(i, j)])).collect())
            .collect();
        Self { modes: n, by_column, shift }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Calls `f(b_out, value)` for every nonzero `<b_out| A |b>`, excluding the
    /// constant shift.
    #[inline]
    pub fn for_each_element(&self, b: usize, mut f: impl FnMut(usize, C64)) {
        let mut bits = b;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let sj = jw_sign(b, j);
            let removed = b ^ (1usize << j);
            for &(i, a) in &self.by_column[j] {
                if i == j {
                    f(b, a);
                } else if removed & (1usize << i) == 0 {
                    f(removed | (1usize << i), a * (sj * jw_sign(removed, i)));
                }
            }
        }
    }

    pub fn apply_into(&self, psi: &[C64], out: &mut [C64]) {
        debug_assert_eq!(psi.len(), 1usize << self.modes);
        out.iter_mut().zip(psi).for_each(|(o, p)| *o = p * self.shift);
        for (b, &amp) in psi.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            self.for_each_element(b, |bo, v| out[bo] += v * amp);
        }
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let mut out = vec![ZERO; psi.len()];
        self.apply_into(&psi.amplitudes, &mut out);
        StateVector::new(out, psi.label.clone())
    }

    /// `<phi| A |psi>`.
    pub fn expectation(&self, psi: &StateVector) -> C64 {
        psi.inner(&self.apply(psi))
    }
}

/// `H = sum_ij (h1)_ij c_i^dagger c_j - E_sea`, so that the sea state has
/// energy zero.
pub fn second_quantized_hamiltonian(space: &FockSpace) -> OneBodyOperator {
    OneBodyOperator::from_matrix(&space.sys.h1, -space.sys.sea_energy())
}

/// Total pre-particle number `sum_i c_i^dagger c_i`.
pub fn number_operator(space: &FockSpace) -> OneBodyOperator {
    let n = space.modes();
    OneBodyOperator::from_matrix(&linalg::CMatrix::identity(n, n), 0.0)
}

/// Orthonormal one-particle vectors to be wedged together, in order.
#[derive(Debug, Clone)]
pub struct SlaterState {
    pub mode_vectors: Vec<Vec<C64>>,
    pub phase_convention: String,
}

impl SlaterState {
    pub fn new(mode_vectors: Vec<Vec<C64>>, phase_convention: impl Into<String>) -> Self {
        Self { mode_vectors, phase_convention: phase_convention.into() }
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.mode_vectors.len();
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                let g = linalg::inner(&self.mode_vectors[a], &self.mode_vectors[b]);
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }
}

/// `phi_1 ^ ... ^ phi_k = Psi^dagger(phi_1) ... Psi^dagger(phi_k) |bottom>`.
///
/// The amplitude on a string with occupied modes `i_1 < ... < i_k` is
/// `det [phi_m(i_l)]`.
pub fn slater_amplitudes(space: &FockSpace, slater: &SlaterState) -> Result<StateVector> {
    let k = slater.mode_vectors.len();
    let n = space.modes();
    if k > n {
        return Err(Error::DimensionMismatch { expected: n, found: k });
    }
    if let Some(v) = slater.mode_vectors.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: v.len() });
    }
    let defect = slater.orthonormality_defect();
    if defect > 1e-12 {
        return Err(Error::NotOrthonormal { deviation: defect });
    }
    let mut out = space.zero_vector();
    let mut buf = vec![ZERO; k * k];
    let mut rows = Vec::with_capacity(k);
    for b in strings_with_popcount(n, k) {
        rows.clear();
        rows.extend((0..n).filter(|&i| b >> i & 1 == 1));
        for (l, &mode) in rows.iter().enumerate() {
            for (m, v) in slater.mode_vectors.iter().enumerate() {
                buf[l * k + m] = v[mode];
            }
        }
        out[b] = det_in_place(&mut buf, k);
    }
    let state = StateVector::new(out, slater.phase_convention.clone());
    Ok(state.normalize())
}

/// The state with no pre-particles.
pub fn bottom_state(space: &FockSpace) -> StateVector {
    let mut amps = space.zero_vector();
    amps[0] = C64::new(1.0, 0.0);
    StateVector { amplitudes: amps, label: String::from("bottom"), normalized: true }
}

/// Negative-energy eigenvectors in labeled order (energy, momentum, branch).
pub fn sea_orbitals(space: &FockSpace) -> SlaterState {
    let vectors = space.basis.negative().map(|i| space.basis.column(i)).collect();
    SlaterState::new(vectors, "sea")
}

/// The filled Dirac sea, the ground state of [`second_quantized_hamiltonian`].
pub fn sea_state(space: &FockSpace) -> Result<StateVector> {
    slater_amplitudes(space, &sea_orbitals(space))
}

/// Project a one-particle vector onto the positive spectral subspace and
/// normalize it.
pub fn positive_part(space: &FockSpace, f: &[C64]) -> Vec<C64> {
    let basis = &space.basis;
    let mut out = vec![ZERO; f.len()];
    for i in basis.positive() {
        let v = basis.column(i);
        let c = linalg::inner(&v, f);
        out.iter_mut().zip(&v).for_each(|(o, vi)| *o += c * vi);
    }
    let n = linalg::norm(&out);
    out.iter_mut().for_each(|z| *z /= n);
    out
}

/// Gaussian packet of spin component `spin` centred at `center` (in sites)
/// with width `width` (in sites) and momentum `k0`, projected onto the
/// positive-energy subspace.
pub fn electron_packet(space: &FockSpace, center: f64, width: f64, k0: f64, spin: usize) -> Vec<C64> {
    let spec = &space.sys.spec;
    let d = spec.spin_dim;
    let n = spec.n_per_side as f64;
    let mut f = vec![ZERO; space.modes()];
    for x in 0..spec.sites() {
        let c = spec.coords(x)[0] as f64;
        let mut dx = c - center;
        dx -= n * libm::round(dx / n);
        let amp = libm::exp(-dx * dx / (2.0 * width * width));
        let phase = k0 * dx * spec.spacing();
        f[x * d + spin] = C64::new(amp * libm::cos(phase), amp * libm::sin(phase));
    }
    positive_part(space, &f)
}

/// `Psi^dagger(g) psi` for a normalized positive-energy `g`, labeled.
pub fn add_electron(space: &FockSpace, g: &[C64], psi: &StateVector, label: &str) -> Result<StateVector> {
    let mut out = field_operator(space, g, true, psi)?.normalize();
    out.label = String::from(label);
    Ok(out)
}
