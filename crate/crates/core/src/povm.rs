//! Charge operators and the position measures built from them.
//!
//! Charges follow the convention "electron negative": a site holding
//! `occupation` pre-particles carries charge `d/2 - occupation`. The natural
//! measure `P_nat` is diagonal in the occupation basis. The obvious measure
//! `P_obv` is diagonal in a quasi-particle basis of localized positive-energy
//! (electron) and conjugated negative-energy (positron) modes.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fock::{self, FockSpace, OneBodyOperator, StateVector};
use crate::lattice::LatticeSpec;
use crate::linalg::{self, CMatrix};
use crate::rotation::OrbitalRotation;
use crate::C64;

/// Born weights below this are dropped from tables; the dropped mass is kept.
pub const DROP_THRESHOLD: f64 = 1e-14;
/// Allowed deviation of `|psi|` from one.
pub const NORM_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);

/// A set of lattice sites, sorted and without repetitions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    sites: Vec<usize>,
}

impl Region {
    pub fn new(sites: impl IntoIterator<Item = usize>, n_sites: usize) -> Result<Self> {
        let mut sites: Vec<usize> = sites.into_iter().collect();
        sites.sort_unstable();
        sites.dedup();
        if let Some(&x) = sites.iter().find(|&&x| x >= n_sites) {
            return Err(Error::InvalidRegion(alloc::format!("site {x} outside 0..{n_sites}")));
        }
        Ok(Self { sites })
    }

    pub fn empty() -> Self {
        Self { sites: Vec::new() }
    }

    pub fn full(n_sites: usize) -> Self {
        Self { sites: (0..n_sites).collect() }
    }

    /// Sites within periodic distance `radius` of `center`.
    pub fn ball(spec: &LatticeSpec, center: usize, radius: f64) -> Self {
        Self { sites: (0..spec.sites()).filter(|&y| spec.distance(center, y) <= radius + 1e-12).collect() }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn complement(&self, n_sites: usize) -> Self {
        Self { sites: (0..n_sites).filter(|x| !self.contains(*x)).collect() }
    }

    /// Sites within distance `r` of the region.
    pub fn grown(&self, spec: &LatticeSpec, r: f64) -> Self {
        let sites = (0..spec.sites())
            .filter(|&y| self.sites.iter().any(|&x| spec.distance(x, y) <= r + 1e-12))
            .collect();
        Self { sites }
    }

    /// Sites of the region farther than `r` from every site outside it.
    pub fn shrunk(&self, spec: &LatticeSpec, r: f64) -> Self {
        let outside = self.complement(spec.sites());
        let sites = self
            .sites
            .iter()
            .copied()
            .filter(|&x| outside.sites.iter().all(|&y| spec.distance(x, y) > r + 1e-12))
            .collect();
        Self { sites }
    }
}

/// Charge per site, each in `-d/2..=d/2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChargeConfiguration {
    pub charges: Vec<i8>,
}

impl ChargeConfiguration {
    pub fn new(charges: Vec<i8>, spin_dim: usize) -> Result<Self> {
        let h = (spin_dim / 2) as i32;
        for (site, &q) in charges.iter().enumerate() {
            if (q as i32).abs() > h {
                return Err(Error::ChargeOutOfRange { site, charge: q as i32 });
            }
        }
        Ok(Self { charges })
    }

    /// The empty configuration: charge zero everywhere.
    pub fn empty(sites: usize) -> Self {
        Self { charges: vec![0; sites] }
    }

    pub fn from_occupations(occupations: &[usize], spin_dim: usize) -> Self {
        let h = (spin_dim / 2) as i8;
        Self { charges: occupations.iter().map(|&o| h - o as i8).collect() }
    }

    /// From electron and positron site multisets.
    pub fn from_species(sites: usize, electrons: &[usize], positrons: &[usize], spin_dim: usize) -> Result<Self> {
        let mut charges = vec![0i32; sites];
        for &x in electrons {
            if positrons.contains(&x) {
                return Err(Error::SitesNotDistinct);
            }
        }
        for (&x, delta) in electrons.iter().map(|x| (x, -1)).chain(positrons.iter().map(|x| (x, 1))) {
            if x >= sites {
                return Err(Error::InvalidRegion(alloc::format!("site {x} outside 0..{sites}")));
            }
            charges[x] += delta;
        }
        let h = (spin_dim / 2) as i32;
        if let Some((site, &q)) = charges.iter().enumerate().find(|(_, q)| q.abs() > h) {
            return Err(Error::ChargeOutOfRange { site, charge: q });
        }
        Ok(Self { charges: charges.into_iter().map(|q| q as i8).collect() })
    }

    pub fn sites(&self) -> usize {
        self.charges.len()
    }

    pub fn occupations(&self, spin_dim: usize) -> Vec<usize> {
        let h = (spin_dim / 2) as i32;
        self.charges.iter().map(|&q| (h - q as i32) as usize).collect()
    }

    pub fn n_el(&self) -> usize {
        self.charges.iter().filter(|&&q| q < 0).map(|&q| (-q) as usize).sum()
    }

    pub fn n_pos(&self) -> usize {
        self.charges.iter().filter(|&&q| q > 0).map(|&q| q as usize).sum()
    }

    pub fn total_charge(&self) -> i32 {
        self.charges.iter().map(|&q| q as i32).sum()
    }

    /// Electron sites with multiplicity, ascending.
    pub fn electrons(&self) -> Vec<usize> {
        self.charges.iter().enumerate().flat_map(|(x, &q)| core::iter::repeat_n(x, (-q).max(0) as usize)).collect()
    }

    /// Positron sites with multiplicity, ascending.
    pub fn positrons(&self) -> Vec<usize> {
        self.charges.iter().enumerate().flat_map(|(x, &q)| core::iter::repeat_n(x, q.max(0) as usize)).collect()
    }

    pub fn nonzero_sites(&self) -> usize {
        self.charges.iter().filter(|&&q| q != 0).count()
    }

    /// Base-`(d+1)` number whose digit at site `x` (least significant first)
    /// is the occupation deficit `d - occupation(x)`.
    pub fn config_id(&self, spin_dim: usize) -> u64 {
        let base = spin_dim as u64 + 1;
        let h = (spin_dim / 2) as i64;
        self.charges.iter().rev().fold(0u64, |acc, &q| acc * base + (h + q as i64) as u64)
    }

    pub fn from_config_id(mut id: u64, sites: usize, spin_dim: usize) -> Self {
        let base = spin_dim as u64 + 1;
        let h = (spin_dim / 2) as i64;
        let charges = (0..sites)
            .map(|_| {
                let digit = (id % base) as i64;
                id /= base;
                (digit - h) as i8
            })
            .collect();
        Self { charges }
    }
}

/// Direction of a charge map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeDirection {
    /// Add an electron at `x`, or remove the positron there.
    Lower,
    /// Remove an electron at `x`, or add a positron there.
    Raise,
}

/// The charge lowering map `l_x` and raising map `r_x`.
///
/// `Psi_s(x)` maps the range of `p_nat(q)` into that of `p_nat(r_x(q))` and
/// `Psi_s(x)^dagger` into that of `p_nat(l_x(q))`.
pub fn charge_map(q: &ChargeConfiguration, x: usize, direction: ChargeDirection, spin_dim: usize) -> Result<ChargeConfiguration> {
    if x >= q.sites() {
        return Err(Error::InvalidRegion(alloc::format!("site {x} outside 0..{}", q.sites())));
    }
    let h = (spin_dim / 2) as i32;
    let new = q.charges[x] as i32 + if direction == ChargeDirection::Raise { 1 } else { -1 };
    if new.abs() > h {
        return Err(Error::ChargeOutOfRange { site: x, charge: new });
    }
    let mut out = q.clone();
    out.charges[x] = new as i8;
    Ok(out)
}

/// An integer-valued operator diagonal in the occupation basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalOperator {
    pub values: Vec<i32>,
}

impl DiagonalOperator {
    pub fn from_fn(dim: usize, f: impl Fn(usize) -> i32) -> Self {
        Self { values: (0..dim).map(f).collect() }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let amps = psi.amplitudes.iter().zip(&self.values).map(|(a, &v)| a * v as f64).collect();
        StateVector::new(amps, psi.label.clone())
    }

    pub fn expectation(&self, psi: &StateVector) -> f64 {
        psi.amplitudes.iter().zip(&self.values).map(|(a, &v)| a.norm_sqr() * v as f64).sum()
    }

    pub fn sub(&self, other: &DiagonalOperator) -> DiagonalOperator {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &DiagonalOperator) -> DiagonalOperator {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }
}

/// A 0/1 diagonal operator over the occupation basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalProjector {
    mask: Vec<bool>,
}

impl DiagonalProjector {
    pub fn from_predicate(dim: usize, f: impl Fn(usize) -> bool) -> Self {
        Self { mask: (0..dim).map(f).collect() }
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn rank(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn contains(&self, b: usize) -> bool {
        self.mask[b]
    }

    pub fn apply_in_place(&self, amps: &mut [C64]) {
        amps.iter_mut().zip(&self.mask).filter(|(_, &m)| !m).for_each(|(a, _)| *a = ZERO);
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let mut out = psi.amplitudes.clone();
        self.apply_in_place(&mut out);
        StateVector::new(out, psi.label.clone())
    }

    /// `<psi| P |psi>`.
    pub fn probability(&self, psi: &StateVector) -> f64 {
        psi.amplitudes.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(a, _)| a.norm_sqr()).sum()
    }

    pub fn product(&self, other: &DiagonalProjector) -> DiagonalProjector {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect() }
    }

    pub fn complement(&self) -> DiagonalProjector {
        Self { mask: self.mask.iter().map(|m| !m).collect() }
    }
}

/// `Q(A)`, with eigenvalue `sum_{x in A} (d/2 - occupation(x))` on every string.
pub fn charge_operator(space: &FockSpace, region: &Region) -> DiagonalOperator {
    let h = (space.spin_dim() / 2) as i32;
    DiagonalOperator::from_fn(space.dim(), |b| region.sites().iter().map(|&x| h - space.occupation(b, x) as i32).sum())
}

/// `(N_el(A), N_pos(A))` for the natural measure.
pub fn number_operators(space: &FockSpace, region: &Region) -> (DiagonalOperator, DiagonalOperator) {
    let h = (space.spin_dim() / 2) as i32;
    let el = DiagonalOperator::from_fn(space.dim(), |b| {
        region.sites().iter().map(|&x| (space.occupation(b, x) as i32 - h).max(0)).sum()
    });
    let pos = DiagonalOperator::from_fn(space.dim(), |b| {
        region.sites().iter().map(|&x| (h - space.occupation(b, x) as i32).max(0)).sum()
    });
    (el, pos)
}

/// Projector onto the strings with the given pre-particle count at every site.
pub fn p_pre(space: &FockSpace, pattern: &[usize]) -> Result<DiagonalProjector> {
    if pattern.len() != space.sites() {
        return Err(Error::DimensionMismatch { expected: space.sites(), found: pattern.len() });
    }
    let d = space.spin_dim();
    if let Some((site, &o)) = pattern.iter().enumerate().find(|(_, &o)| o > d) {
        return Err(Error::ChargeOutOfRange { site, charge: (d / 2) as i32 - o as i32 });
    }
    Ok(DiagonalProjector::from_predicate(space.dim(), |b| {
        pattern.iter().enumerate().all(|(x, &o)| space.occupation(b, x) == o)
    }))
}

/// `P_nat(q) = P_pre(d/2 - q)`.
pub fn p_nat(space: &FockSpace, q: &ChargeConfiguration) -> Result<DiagonalProjector> {
    if q.sites() != space.sites() {
        return Err(Error::DimensionMismatch { expected: space.sites(), found: q.sites() });
    }
    let q = ChargeConfiguration::new(q.charges.clone(), space.spin_dim())?;
    p_pre(space, &q.occupations(space.spin_dim()))
}

/// `P_nat` of the event "the charges on `region` are `charges`", which
/// constrains nothing outside the region.
pub fn p_nat_local(space: &FockSpace, region: &Region, charges: &[i8]) -> Result<DiagonalProjector> {
    if charges.len() != region.len() {
        return Err(Error::DimensionMismatch { expected: region.len(), found: charges.len() });
    }
    let h = (space.spin_dim() / 2) as i32;
    if let Some((i, &q)) = charges.iter().enumerate().find(|(_, &q)| (q as i32).abs() > h) {
        return Err(Error::ChargeOutOfRange { site: region.sites()[i], charge: q as i32 });
    }
    Ok(DiagonalProjector::from_predicate(space.dim(), |b| {
        region.sites().iter().zip(charges).all(|(&x, &q)| h - space.occupation(b, x) as i32 == q as i32)
    }))
}

/// Projectors onto fixed total charge, ascending in the charge.
pub fn charge_sectors(space: &FockSpace) -> Vec<(i32, DiagonalProjector)> {
    let half = (space.modes() / 2) as i32;
    (0..=space.modes())
        .rev()
        .map(|n| {
            let z = half - n as i32;
            (z, DiagonalProjector::from_predicate(space.dim(), |b| b.count_ones() as usize == n))
        })
        .collect()
}

/// Occupation counts of a quasi-particle string: electrons and positrons per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObvConfiguration {
    pub electrons: Vec<u8>,
    pub positrons: Vec<u8>,
}

impl ObvConfiguration {
    pub fn empty(sites: usize) -> Self {
        Self { electrons: vec![0; sites], positrons: vec![0; sites] }
    }

    pub fn n_el(&self) -> usize {
        self.electrons.iter().map(|&n| n as usize).sum()
    }

    pub fn n_pos(&self) -> usize {
        self.positrons.iter().map(|&n| n as usize).sum()
    }

    pub fn total_charge(&self) -> i32 {
        self.n_pos() as i32 - self.n_el() as i32
    }

    /// Base-`(d/2+1)^2` number with digit `el*(d/2+1) + pos` at each site,
    /// least significant site first.
    pub fn config_id(&self, spin_dim: usize) -> u64 {
        let h1 = (spin_dim / 2) as u64 + 1;
        self.electrons
            .iter()
            .zip(&self.positrons)
            .rev()
            .fold(0u64, |acc, (&e, &p)| acc * h1 * h1 + e as u64 * h1 + p as u64)
    }
}

/// Localized electron modes (Wannier functions of the positive band) and
/// positron modes (their conjugates, spanning the negative band), together
/// with the Fock-space rotation into that basis.
///
/// Quasi-particle mode `x*(d/2) + b` is the electron mode `w_{x,b}`; mode
/// `sites*(d/2) + x*(d/2) + b` is the positron mode `v_{x,b} = C^-1 w_{x,b}`,
/// which counts a positron when empty.
#[derive(Debug, Clone)]
pub struct QuasiParticleBasis {
    /// Columns: electron modes, then positron modes.
    pub modes: CMatrix,
    rotation: OrbitalRotation,
    sites: usize,
    half_spin: usize,
    /// Quasi-particle string of the sea state.
    sea_string: usize,
}

impl QuasiParticleBasis {
    pub fn new(space: &FockSpace) -> Result<Self> {
        let spec = &space.sys.spec;
        let (sites, d, h) = (spec.sites(), spec.spin_dim, spec.half_spin());
        let n = space.modes();
        let basis = &space.basis;
        let scale = 1.0 / libm::sqrt(sites as f64);

        // Bloch spinors u(kappa, b) of the positive band.
        let mut bloch: Vec<Vec<Vec<C64>>> = vec![Vec::new(); sites];
        for i in basis.positive() {
            let kappa = basis.momentum_index[i];
            let k = spec.momentum(kappa);
            let v = basis.column(i);
            let mut u = vec![ZERO; d];
            for x in 0..sites {
                let phase = plane_wave(spec, &k, x).conj();
                for (s, us) in u.iter_mut().enumerate() {
                    *us += phase * v[x * d + s] * scale;
                }
            }
            let peak = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let s = u.iter().position(|z| z.norm() >= peak * (1.0 - 1e-9)).unwrap_or(0);
            let gauge = u[s].conj() / u[s].norm();
            u.iter_mut().for_each(|z| *z *= gauge);
            bloch[kappa].push(u);
        }
        if let Some(kappa) = bloch.iter().position(|b| b.len() != h) {
            return Err(Error::ModeCountMismatch { neg: bloch[kappa].len(), pos: h });
        }

        let mut modes = CMatrix::zeros(n, n);
        for x in 0..sites {
            for b in 0..h {
                let mut w = vec![ZERO; n];
                for (kappa, us) in bloch.iter().enumerate() {
                    let k = spec.momentum(kappa);
                    let u = &us[b];
                    let phase = plane_wave(spec, &k, x).conj() * scale * scale;
                    for y in 0..sites {
                        let c = phase * plane_wave(spec, &k, y);
                        for s in 0..d {
                            w[y * d + s] += c * u[s];
                        }
                    }
                }
                let v = space.sys.conjugation.apply_inverse(&w);
                for r in 0..n {
                    modes[(r, x * h + b)] = w[r];
                    modes[(r, n / 2 + x * h + b)] = v[r];
                }
            }
        }
        let defect = linalg::unitarity_defect(&modes);
        if defect > 1e-10 {
            return Err(Error::NotOrthonormal { deviation: defect });
        }
        let sea_string = ((1usize << (n / 2)) - 1) << (n / 2);
        Ok(Self { rotation: OrbitalRotation::new(&modes), modes, sites, half_spin: h, sea_string })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn electron_mode(&self, site: usize, branch: usize) -> usize {
        site * self.half_spin + branch
    }

    pub fn positron_mode(&self, site: usize, branch: usize) -> usize {
        self.sites * self.half_spin + site * self.half_spin + branch
    }

    /// Quasi-particle string of the sea state (all positron modes filled).
    pub fn sea_string(&self) -> usize {
        self.sea_string
    }

    /// Amplitudes of `psi` in the quasi-particle occupation basis.
    pub fn to_quasi(&self, amps: &[C64]) -> Vec<C64> {
        let mut out = amps.to_vec();
        self.rotation.apply_adjoint(&mut out);
        out
    }

    pub fn from_quasi(&self, amps: &[C64]) -> Vec<C64> {
        let mut out = amps.to_vec();
        self.rotation.apply(&mut out);
        out
    }

    /// Electron and positron counts per site of a quasi-particle string.
    pub fn configuration(&self, b: usize) -> ObvConfiguration {
        let h = self.half_spin;
        let mask = (1usize << h) - 1;
        let offset = self.sites * h;
        let electrons = (0..self.sites).map(|x| (b >> (x * h) & mask).count_ones() as u8).collect();
        let positrons = (0..self.sites).map(|x| h as u8 - (b >> (offset + x * h) & mask).count_ones() as u8).collect();
        ObvConfiguration { electrons, positrons }
    }

    /// `P_obv(q)`: projector onto the quasi-particle strings with pattern `q`.
    pub fn projector(&self, q: &ObvConfiguration) -> ObvProjector<'_> {
        let dim = 1usize << (2 * self.sites * self.half_spin);
        let mask = DiagonalProjector::from_predicate(dim, |b| self.configuration(b) == *q);
        ObvProjector { basis: self, mask }
    }

    /// `(N_obv,el(A), N_obv,pos(A))` as second-quantized one-body operators.
    pub fn number_operators(&self, region: &Region) -> (OneBodyOperator, OneBodyOperator) {
        let n = self.modes.nrows();
        let mut el = CMatrix::zeros(n, n);
        let mut pos = CMatrix::zeros(n, n);
        for &x in region.sites() {
            for b in 0..self.half_spin {
                let w = self.modes.column(self.electron_mode(x, b));
                el += w * w.adjoint();
                let v = self.modes.column(self.positron_mode(x, b));
                pos -= v * v.adjoint();
            }
        }
        let holes = (region.len() * self.half_spin) as f64;
        (OneBodyOperator::from_matrix(&el, 0.0), OneBodyOperator::from_matrix(&pos, holes))
    }
}

fn plane_wave(spec: &LatticeSpec, k: &[f64], site: usize) -> C64 {
    let a = spec.spacing();
    let phase: f64 = spec.coords(site).iter().zip(k).map(|(&c, &kj)| c as f64 * a * kj).sum();
    C64::new(libm::cos(phase), libm::sin(phase))
}

/// `Gamma(W) M Gamma(W)^dagger` for a diagonal quasi-particle mask `M`.
#[derive(Debug, Clone)]
pub struct ObvProjector<'a> {
    basis: &'a QuasiParticleBasis,
    mask: DiagonalProjector,
}

impl ObvProjector<'_> {
    pub fn rank(&self) -> usize {
        self.mask.rank()
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let mut q = self.basis.to_quasi(&psi.amplitudes);
        self.mask.apply_in_place(&mut q);
        StateVector::new(self.basis.from_quasi(&q), psi.label.clone())
    }

    pub fn probability(&self, psi: &StateVector) -> f64 {
        let q = self.basis.to_quasi(&psi.amplitudes);
        q.iter().enumerate().filter(|(b, _)| self.mask.contains(*b)).map(|(_, a)| a.norm_sqr()).sum()
    }
}

/// `P_obv(q)` with `q` given as electron and positron counts per site.
pub fn p_obv<'a>(basis: &'a QuasiParticleBasis, electrons: &[u8], positrons: &[u8]) -> ObvProjector<'a> {
    basis.projector(&ObvConfiguration { electrons: electrons.to_vec(), positrons: positrons.to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    /// Natural PVM: charge per site.
    Nat,
    /// Pre-particle PVM: occupation per site. Same partition as `Nat`.
    Pre,
    /// Quasi-particle PVM: electron and positron counts per site.
    Obv,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Nat => "nat",
            Measure::Pre => "pre",
            Measure::Obv => "obv",
        }
    }
}

impl core::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nat" => Ok(Measure::Nat),
            "pre" => Ok(Measure::Pre),
            "obv" => Ok(Measure::Obv),
            other => Err(Error::InvalidSpec(alloc::format!("unknown measure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BornEntry {
    pub config_id: u64,
    pub electrons: Vec<u8>,
    pub positrons: Vec<u8>,
    pub weight: f64,
}

impl BornEntry {
    /// Charge per site, `positrons - electrons`.
    pub fn charges(&self) -> Vec<i8> {
        self.electrons.iter().zip(&self.positrons).map(|(&e, &p)| p as i8 - e as i8).collect()
    }

    pub fn n_el(&self) -> usize {
        self.electrons.iter().map(|&n| n as usize).sum()
    }

    pub fn n_pos(&self) -> usize {
        self.positrons.iter().map(|&n| n as usize).sum()
    }

    pub fn total_charge(&self) -> i32 {
        self.n_pos() as i32 - self.n_el() as i32
    }
}

/// Sparse Born distribution, sorted by `config_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct BornTable {
    pub measure: Measure,
    pub spin_dim: usize,
    pub sites: usize,
    pub entries: Vec<BornEntry>,
    /// Total weight of the entries dropped below [`DROP_THRESHOLD`].
    pub dropped: f64,
}

impl BornTable {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum::<f64>() + self.dropped
    }

    pub fn weight(&self, config_id: u64) -> f64 {
        self.entries.binary_search_by_key(&config_id, |e| e.config_id).map_or(0.0, |i| self.entries[i].weight)
    }

    /// Weight of the empty configuration.
    pub fn vacuum_probability(&self) -> f64 {
        let empty = match self.measure {
            Measure::Obv => ObvConfiguration::empty(self.sites).config_id(self.spin_dim),
            _ => ChargeConfiguration::empty(self.sites).config_id(self.spin_dim),
        };
        self.weight(empty)
    }

    pub fn expectation(&self, f: impl Fn(&BornEntry) -> f64) -> f64 {
        self.entries.iter().map(|e| e.weight * f(e)).sum()
    }

    /// Inverse-CDF sample for `u` in `[0, 1)`. Dropped mass is redistributed
    /// proportionally.
    pub fn sample(&self, u: f64) -> &BornEntry {
        let kept: f64 = self.entries.iter().map(|e| e.weight).sum();
        let target = u * kept;
        let mut acc = 0.0;
        for e in &self.entries {
            acc += e.weight;
            if target < acc {
                return e;
            }
        }
        self.entries.last().expect("Born table is never empty")
    }
}

/// Exact Born distribution of `psi` under `measure`.
pub fn born_distribution(space: &FockSpace, psi: &StateVector, measure: Measure) -> Result<BornTable> {
    match measure {
        Measure::Obv => born_obv(&QuasiParticleBasis::new(space)?, psi, space.spin_dim()),
        _ => born_natural(space, psi, measure),
    }
}

fn check_norm(space: &FockSpace, psi: &StateVector) -> Result<()> {
    if psi.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: psi.len() });
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

fn born_natural(space: &FockSpace, psi: &StateVector, measure: Measure) -> Result<BornTable> {
    check_norm(space, psi)?;
    let (d, sites) = (space.spin_dim(), space.sites());
    let base = d as u64 + 1;
    let mut bins: BTreeMap<u64, f64> = BTreeMap::new();
    for (b, a) in psi.amplitudes.iter().enumerate() {
        let w = a.norm_sqr();
        if w == 0.0 {
            continue;
        }
        let id = (0..sites).rev().fold(0u64, |acc, x| acc * base + (d - space.occupation(b, x)) as u64);
        *bins.entry(id).or_insert(0.0) += w;
    }
    Ok(finish_table(measure, d, sites, bins, |id| {
        let q = ChargeConfiguration::from_config_id(id, sites, d);
        let el = q.charges.iter().map(|&c| (-c).max(0) as u8).collect();
        let pos = q.charges.iter().map(|&c| c.max(0) as u8).collect();
        (el, pos)
    }))
}

/// Born distribution under `P_obv` for a prebuilt quasi-particle basis.
pub fn born_obv(basis: &QuasiParticleBasis, psi: &StateVector, spin_dim: usize) -> Result<BornTable> {
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm });
    }
    let q = basis.to_quasi(&psi.amplitudes);
    let mut bins: BTreeMap<u64, (ObvConfiguration, f64)> = BTreeMap::new();
    for (b, a) in q.iter().enumerate() {
        let w = a.norm_sqr();
        if w == 0.0 {
            continue;
        }
        let c = basis.configuration(b);
        bins.entry(c.config_id(spin_dim)).or_insert((c, 0.0)).1 += w;
    }
    let mut dropped = 0.0;
    let mut entries = Vec::new();
    for (id, (c, w)) in bins {
        if w < DROP_THRESHOLD {
            dropped += w;
        } else {
            entries.push(BornEntry { config_id: id, electrons: c.electrons, positrons: c.positrons, weight: w });
        }
    }
    Ok(BornTable { measure: Measure::Obv, spin_dim, sites: basis.sites(), entries, dropped })
}

fn finish_table(
    measure: Measure,
    spin_dim: usize,
    sites: usize,
    bins: BTreeMap<u64, f64>,
    species: impl Fn(u64) -> (Vec<u8>, Vec<u8>),
) -> BornTable {
    let mut dropped = 0.0;
    let mut entries = Vec::new();
    for (id, w) in bins {
        if w < DROP_THRESHOLD {
            dropped += w;
        } else {
            let (electrons, positrons) = species(id);
            entries.push(BornEntry { config_id: id, electrons, positrons, weight: w });
        }
    }
    BornTable { measure, spin_dim, sites, entries, dropped }
}

/// Both sides of the field-operator formula for the natural density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoNatCheck {
    /// Born weight of the configuration.
    pub lhs: f64,
    /// `sum_spins |P_nat(empty) Psi^dagger(xbar...) Psi(x...) psi|^2`.
    pub sandwich: f64,
    pub n_el: usize,
    pub n_pos: usize,
}

impl RhoNatCheck {
    pub fn rhs(&self, constant: f64) -> f64 {
        constant * self.sandwich
    }

    /// `1/(d/2 + 1)^(n + nbar)`: each removed electron or added positron can
    /// be reached from `d/2 + 1` spin states.
    pub fn lattice_constant(spin_dim: usize, n_el: usize, n_pos: usize) -> f64 {
        1.0 / libm::pow((spin_dim / 2 + 1) as f64, (n_el + n_pos) as f64)
    }
}

/// Least-squares constant `c` minimizing `sum (lhs - c*sandwich)^2`.
pub fn fit_rho_constant(checks: &[RhoNatCheck]) -> f64 {
    let num: f64 = checks.iter().map(|c| c.lhs * c.sandwich).sum();
    let den: f64 = checks.iter().map(|c| c.sandwich * c.sandwich).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn rho_nat_formula_check(
    space: &FockSpace,
    psi: &StateVector,
    electron_sites: &[usize],
    positron_sites: &[usize],
) -> Result<RhoNatCheck> {
    check_norm(space, psi)?;
    let all: Vec<usize> = electron_sites.iter().chain(positron_sites).copied().collect();
    for (i, x) in all.iter().enumerate() {
        if all[..i].contains(x) {
            return Err(Error::SitesNotDistinct);
        }
    }
    let (d, sites) = (space.spin_dim(), space.sites());
    let q = ChargeConfiguration::from_species(sites, electron_sites, positron_sites, d)?;
    let lhs = p_nat(space, &q)?.probability(psi);
    let empty = p_nat(space, &ChargeConfiguration::empty(sites))?;

    // Apply Psi(x_1) ... then Psi^dagger(xbar_1) ... over every spin choice.
    let steps: Vec<(usize, bool)> =
        electron_sites.iter().map(|&x| (x, false)).chain(positron_sites.iter().map(|&x| (x, true))).collect();
    let mut sandwich = 0.0;
    let combos = d.pow(steps.len() as u32);
    for mut combo in 0..combos {
        let mut phi = psi.clone();
        for &(x, dagger) in &steps {
            let mode = space.mode(x, combo % d);
            combo /= d;
            phi = if dagger { fock::create(space, mode, &phi) } else { fock::annihilate(space, mode, &phi) };
        }
        sandwich += empty.probability(&phi);
    }
    Ok(RhoNatCheck { lhs, sandwich, n_el: electron_sites.len(), n_pos: positron_sites.len() })
}
