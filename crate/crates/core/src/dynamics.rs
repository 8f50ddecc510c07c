//! Time evolution and the jump process over charge configurations.
//!
//! The process jumps from `q` to `q'` at rate
//! `sigma(q -> q') = 2 max(Im <psi|P(q') H P(q)|psi>, 0) / <psi|P(q)|psi>`,
//! which makes the natural Born distribution of `psi_t` its marginal at every
//! time.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::fock::{self, strings_with_popcount, FockSpace, OneBodyOperator, StateVector};
use crate::linalg::{self, hermitian_eigh, CMatrix};
use crate::povm::{self, ChargeConfiguration, DiagonalOperator, DiagonalProjector, Measure, QuasiParticleBasis, Region};
use crate::rotation::OrbitalRotation;
use crate::C64;

/// Largest Fock dimension for [`EvolutionMethod::EigenDecomposition`].
pub const SPECTRAL_LIMIT: usize = 1 << 16;
/// Largest Fock dimension for [`EvolutionMethod::DenseExponential`].
pub const DENSE_LIMIT: usize = 1 << 12;
/// Below this, `<psi|P(q)|psi>` is treated as zero and rates out of `q` are undefined.
pub const PROBABILITY_FLOOR: f64 = 1e-14;
/// `|Im J|` below this is rounding noise and yields a zero rate.
pub const FLUX_FLOOR: f64 = 1e-13;
/// Every step must satisfy `sigma_tot * dt` below this.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;
/// Maximum number of halvings of a process step.
pub const MAX_REFINEMENT: u32 = 16;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvolutionMethod {
    /// Per-particle-number dense diagonalization of `H`.
    DenseExponential,
    /// Lift of the one-particle propagator to Fock space.
    EigenDecomposition,
    /// Lanczos with adaptive step halving.
    SparseKrylov,
}

impl core::str::FromStr for EvolutionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" | "dense-exponential" => Ok(Self::DenseExponential),
            "eigen" | "eigen-decomposition" => Ok(Self::EigenDecomposition),
            "krylov" | "sparse-krylov" => Ok(Self::SparseKrylov),
            other => Err(Error::InvalidPlan(alloc::format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionPlan {
    pub method: EvolutionMethod,
    pub dt: f64,
    pub t_max: f64,
    pub tolerance: f64,
}

impl EvolutionPlan {
    pub fn new(method: EvolutionMethod, dt: f64, t_max: f64, tolerance: f64) -> Result<Self> {
        let plan = Self { method, dt, t_max, tolerance };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_max > 0.0 && self.tolerance > 0.0) {
            return Err(Error::InvalidPlan(alloc::format!("dt, t_max and tolerance must be positive: {self:?}")));
        }
        if self.dt > self.t_max {
            return Err(Error::InvalidPlan(alloc::format!("dt {} exceeds t_max {}", self.dt, self.t_max)));
        }
        Ok(())
    }

    /// Grid `0, dt, 2dt, ...` up to `t_max` inclusive (up to rounding).
    pub fn grid(&self) -> Vec<f64> {
        let steps = libm::round(self.t_max / self.dt) as usize;
        (0..=steps).map(|k| k as f64 * self.dt).collect()
    }
}

/// `e^{-iHt}` for the second-quantized Hamiltonian of one space.
pub struct Propagator<'a> {
    space: &'a FockSpace,
    h: OneBodyOperator,
    tolerance: f64,
    kind: Kind,
}

enum Kind {
    Spectral,
    Dense(Vec<Sector>),
    Krylov,
}

struct Sector {
    strings: Vec<usize>,
    energies: Vec<f64>,
    vectors: CMatrix,
}

impl<'a> Propagator<'a> {
    pub fn new(space: &'a FockSpace, plan: &EvolutionPlan) -> Result<Self> {
        plan.validate()?;
        let h = fock::second_quantized_hamiltonian(space);
        let kind = match plan.method {
            EvolutionMethod::EigenDecomposition => {
                if space.dim() > SPECTRAL_LIMIT {
                    return Err(Error::TooLarge { modes: space.modes(), limit: 16 });
                }
                Kind::Spectral
            }
            EvolutionMethod::DenseExponential => {
                if space.dim() > DENSE_LIMIT {
                    return Err(Error::TooLarge { modes: space.modes(), limit: 12 });
                }
                Kind::Dense(dense_sectors(space, &h))
            }
            EvolutionMethod::SparseKrylov => Kind::Krylov,
        };
        Ok(Self { space, h, tolerance: plan.tolerance, kind })
    }

    pub fn hamiltonian(&self) -> &OneBodyOperator {
        &self.h
    }

    pub fn propagate(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if psi.len() != self.space.dim() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: psi.len() });
        }
        let amplitudes = match &self.kind {
            Kind::Spectral => self.spectral(&psi.amplitudes, t),
            Kind::Dense(sectors) => dense(sectors, &psi.amplitudes, t),
            Kind::Krylov => krylov(&self.h, &psi.amplitudes, t, self.tolerance)?,
        };
        Ok(StateVector { amplitudes, label: psi.label.clone(), normalized: psi.normalized })
    }

    fn spectral(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let sys = &self.space.sys;
        let n = sys.modes();
        let phases = CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(0.0, -sys.eigenvalues[i] * t).exp() } else { ZERO });
        let u = &sys.eigenvectors * phases * sys.eigenvectors.adjoint();
        let mut out = psi.to_vec();
        OrbitalRotation::new(&u).apply(&mut out);
        let global = C64::new(0.0, -self.h.shift * t).exp();
        out.iter_mut().for_each(|z| *z *= global);
        out
    }
}

fn dense_sectors(space: &FockSpace, h: &OneBodyOperator) -> Vec<Sector> {
    let n = space.modes();
    let mut position = vec![0usize; space.dim()];
    (0..=n)
        .map(|k| {
            let strings: Vec<usize> = strings_with_popcount(n, k).collect();
            strings.iter().enumerate().for_each(|(i, &b)| position[b] = i);
            let s = strings.len();
            let mut m = CMatrix::zeros(s, s);
            for (j, &b) in strings.iter().enumerate() {
                m[(j, j)] += C64::new(h.shift, 0.0);
                h.for_each_element(b, |bo, v| m[(position[bo], j)] += v);
            }
            let (energies, vectors) = hermitian_eigh(&m);
            Sector { strings, energies, vectors }
        })
        .collect()
}

fn dense(sectors: &[Sector], psi: &[C64], t: f64) -> Vec<C64> {
    let mut out = vec![ZERO; psi.len()];
    for sector in sectors {
        let s = sector.strings.len();
        let coeffs: Vec<C64> = (0..s)
            .map(|j| {
                let c: C64 = sector.strings.iter().enumerate().map(|(i, &b)| sector.vectors[(i, j)].conj() * psi[b]).sum();
                c * C64::new(0.0, -sector.energies[j] * t).exp()
            })
            .collect();
        for (i, &b) in sector.strings.iter().enumerate() {
            out[b] = (0..s).map(|j| sector.vectors[(i, j)] * coeffs[j]).sum();
        }
    }
    out
}

const KRYLOV_DIM: usize = 40;

/// Adaptive Lanczos propagation; each accepted substep has an a-posteriori
/// error below `tolerance * tau / |t|`.
fn krylov(h: &OneBodyOperator, psi: &[C64], t: f64, tolerance: f64) -> Result<Vec<C64>> {
    let mut state = psi.to_vec();
    let total = t.abs();
    if total == 0.0 {
        return Ok(state);
    }
    let sign = t.signum();
    let mut done = 0.0;
    let mut tau = total;
    let min_tau = total / f64::from(1u32 << 20);
    while done < total {
        tau = tau.min(total - done);
        let (next, err) = lanczos_step(h, &state, sign * tau);
        if err <= tolerance * tau / total {
            state = next;
            done += tau;
            tau *= 2.0;
        } else if tau <= min_tau {
            return Err(Error::ConvergenceFailure { estimate: err });
        } else {
            tau *= 0.5;
        }
    }
    Ok(state)
}

fn lanczos_step(h: &OneBodyOperator, psi: &[C64], t: f64) -> (Vec<C64>, f64) {
    let beta0 = linalg::norm(psi);
    if beta0 == 0.0 {
        return (psi.to_vec(), 0.0);
    }
    let m_max = KRYLOV_DIM.min(psi.len());
    let mut basis: Vec<Vec<C64>> = vec![psi.iter().map(|z| z / beta0).collect()];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut w = vec![ZERO; psi.len()];
    let mut residual = 0.0;
    for j in 0..m_max {
        h.apply_into(&basis[j], &mut w);
        alpha.push(linalg::inner(&basis[j], &w).re);
        // full reorthogonalization keeps the small basis exactly orthonormal
        for _ in 0..2 {
            for v in &basis {
                let c = linalg::inner(v, &w);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let b = linalg::norm(&w);
        residual = b;
        if b < 1e-13 || j + 1 == m_max {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|z| z / b).collect());
    }
    let m = alpha.len();
    let tri = CMatrix::from_fn(m, m, |i, j| {
        if i == j {
            C64::new(alpha[i], 0.0)
        } else if i + 1 == j {
            C64::new(beta[i], 0.0)
        } else if j + 1 == i {
            C64::new(beta[j], 0.0)
        } else {
            ZERO
        }
    });
    let (e, v) = hermitian_eigh(&tri);
    let coeffs: Vec<C64> = (0..m)
        .map(|i| (0..m).map(|k| v[(i, k)] * C64::new(0.0, -e[k] * t).exp() * v[(0, k)].conj()).sum())
        .collect();
    let mut out = vec![ZERO; psi.len()];
    for (c, vec_) in coeffs.iter().zip(&basis) {
        out.iter_mut().zip(vec_).for_each(|(o, x)| *o += c * x * beta0);
    }
    let err = if residual < 1e-13 { 0.0 } else { residual * coeffs[m - 1].norm() * beta0 };
    (out, err)
}

/// `e^{-iHt} psi` with a freshly built propagator.
pub fn evolve(space: &FockSpace, psi: &StateVector, t: f64, plan: &EvolutionPlan) -> Result<StateVector> {
    psi.require_normalized(povm::NORM_TOL)?;
    Propagator::new(space, plan)?.propagate(psi, t)
}

/// Natural configurations indexed densely, with the string-to-configuration map.
#[derive(Debug, Clone)]
pub struct ConfigIndex {
    /// Sorted by `config_id`.
    pub configs: Vec<ChargeConfiguration>,
    ids: Vec<u64>,
    of_string: Vec<u32>,
    members: Vec<Vec<u32>>,
    spin_dim: usize,
}

impl ConfigIndex {
    pub fn new(space: &FockSpace) -> Self {
        let d = space.spin_dim();
        let ids: Vec<u64> = (0..space.dim())
            .map(|b| ChargeConfiguration::from_occupations(&space.occupations(b), d).config_id(d))
            .collect();
        let distinct: BTreeSet<u64> = ids.iter().copied().collect();
        let sorted: Vec<u64> = distinct.into_iter().collect();
        let of_string: Vec<u32> = ids.iter().map(|id| sorted.binary_search(id).unwrap() as u32).collect();
        let mut members = vec![Vec::new(); sorted.len()];
        of_string.iter().enumerate().for_each(|(b, &c)| members[c as usize].push(b as u32));
        let configs = sorted.iter().map(|&id| ChargeConfiguration::from_config_id(id, space.sites(), d)).collect();
        Self { configs, ids: sorted, of_string, members, spin_dim: d }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn of_string(&self, b: usize) -> usize {
        self.of_string[b] as usize
    }

    pub fn find(&self, q: &ChargeConfiguration) -> Option<usize> {
        self.ids.binary_search(&q.config_id(self.spin_dim)).ok()
    }

    pub fn probabilities(&self, psi: &StateVector) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        psi.amplitudes.iter().zip(&self.of_string).for_each(|(a, &c)| p[c as usize] += a.norm_sqr());
        p
    }
}

/// `J(q -> q') = <psi|P(q') H P(q)|psi>` for every pair of distinct
/// configurations connected by `H`.
#[derive(Debug, Clone)]
pub struct FluxTable {
    pub probabilities: Vec<f64>,
    /// `(from, to, J)`, sorted by `(from, to)`.
    pub fluxes: Vec<(u32, u32, C64)>,
}

impl FluxTable {
    pub fn new(index: &ConfigIndex, h: &OneBodyOperator, psi: &StateVector) -> Self {
        let mut map: BTreeMap<(u32, u32), C64> = BTreeMap::new();
        for (b, &amp) in psi.amplitudes.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let from = index.of_string[b];
            h.for_each_element(b, |bo, v| {
                let to = index.of_string[bo];
                if to != from {
                    *map.entry((from, to)).or_insert(ZERO) += psi.amplitudes[bo].conj() * v * amp;
                }
            });
        }
        Self { probabilities: index.probabilities(psi), fluxes: map.into_iter().map(|((f, t), j)| (f, t, j)).collect() }
    }

    /// Outgoing `(to, rate)` from configuration `from`; `None` if it has no probability.
    pub fn rates_from(&self, from: usize) -> Option<Vec<(usize, f64)>> {
        let p = self.probabilities[from];
        if p < PROBABILITY_FLOOR {
            return None;
        }
        let start = self.fluxes.partition_point(|e| (e.0 as usize) < from);
        let rates = self.fluxes[start..]
            .iter()
            .take_while(|e| e.0 as usize == from)
            .map(|&(_, to, j)| (to as usize, rate_from_flux(j, p)))
            .filter(|&(_, r)| r > 0.0)
            .collect();
        Some(rates)
    }

    /// `dP(q)/dt` predicted by the rates: inflow minus outflow.
    pub fn master_rhs(&self, q: usize) -> f64 {
        let mut total = 0.0;
        for &(f, t, j) in &self.fluxes {
            if f as usize == q {
                total -= rate_from_flux(j, self.probabilities[q]) * self.probabilities[q];
            } else if t as usize == q {
                total += rate_from_flux(j, self.probabilities[f as usize]) * self.probabilities[f as usize];
            }
        }
        total
    }

    /// Largest total outgoing rate over configurations with probability at
    /// least `min_probability`.
    pub fn max_total_rate(&self, min_probability: f64) -> f64 {
        let mut totals = vec![0.0; self.probabilities.len()];
        for &(f, _, j) in &self.fluxes {
            let p = self.probabilities[f as usize];
            if p >= min_probability.max(PROBABILITY_FLOOR) {
                totals[f as usize] += rate_from_flux(j, p);
            }
        }
        totals.into_iter().fold(0.0, f64::max)
    }
}

fn rate_from_flux(j: C64, probability: f64) -> f64 {
    if j.im <= FLUX_FLOOR || probability < PROBABILITY_FLOOR {
        0.0
    } else {
        2.0 * j.im / probability
    }
}

/// Jump rates out of `q` in state `psi`.
pub fn jump_rates(space: &FockSpace, psi: &StateVector, q: &ChargeConfiguration) -> Result<Vec<(ChargeConfiguration, f64)>> {
    let p = povm::p_nat(space, q)?;
    let prob = p.probability(psi);
    if prob < PROBABILITY_FLOOR {
        return Err(Error::ZeroProbabilityConfiguration { probability: prob });
    }
    let h = fock::second_quantized_hamiltonian(space);
    let d = space.spin_dim();
    let mut fluxes: BTreeMap<u64, C64> = BTreeMap::new();
    for (b, &amp) in psi.amplitudes.iter().enumerate() {
        if amp == ZERO || !p.contains(b) {
            continue;
        }
        h.for_each_element(b, |bo, v| {
            if !p.contains(bo) {
                let id = ChargeConfiguration::from_occupations(&space.occupations(bo), d).config_id(d);
                *fluxes.entry(id).or_insert(ZERO) += psi.amplitudes[bo].conj() * v * amp;
            }
        });
    }
    Ok(fluxes
        .into_iter()
        .map(|(id, j)| (ChargeConfiguration::from_config_id(id, space.sites(), d), rate_from_flux(j, prob)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpKind {
    ElectronHop,
    PositronHop,
    PairCreation,
    PairAnnihilation,
}

impl JumpKind {
    pub fn name(self) -> &'static str {
        match self {
            JumpKind::ElectronHop => "electron_hop",
            JumpKind::PositronHop => "positron_hop",
            JumpKind::PairCreation => "pair_creation",
            JumpKind::PairAnnihilation => "pair_annihilation",
        }
    }
}

/// Classify `q -> q'` as one pre-particle moving between neighbouring sites.
/// `None` if the pair is not such a move.
pub fn classify_jump(space: &FockSpace, q: &ChargeConfiguration, q2: &ChargeConfiguration) -> Option<JumpKind> {
    let changed: Vec<usize> = (0..q.sites()).filter(|&x| q.charges[x] != q2.charges[x]).collect();
    let &[a, b] = changed.as_slice() else { return None };
    // the pre-particle leaves `from` (charge rises) and arrives at `to` (charge falls)
    let (from, to) = if q2.charges[a] == q.charges[a] + 1 && q2.charges[b] == q.charges[b] - 1 {
        (a, b)
    } else if q2.charges[b] == q.charges[b] + 1 && q2.charges[a] == q.charges[a] - 1 {
        (b, a)
    } else {
        return None;
    };
    let spec = &space.sys.spec;
    let adjacent = (0..spec.dim).any(|axis| spec.neighbor(from, axis, true) == to || spec.neighbor(from, axis, false) == to);
    if !adjacent {
        return None;
    }
    let electron_left = q.charges[from] < 0;
    let positron_left = q.charges[to] > 0;
    Some(match (electron_left, positron_left) {
        (true, false) => JumpKind::ElectronHop,
        (false, true) => JumpKind::PositronHop,
        (false, false) => JumpKind::PairCreation,
        (true, true) => JumpKind::PairAnnihilation,
    })
}

/// One realization of the process.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTrajectory {
    pub traj_id: u64,
    pub seed: u64,
    pub initial: ChargeConfiguration,
    /// `(time, configuration after the jump)`, strictly increasing in time.
    pub events: Vec<(f64, ChargeConfiguration)>,
}

impl JumpTrajectory {
    pub fn config_at(&self, t: f64) -> &ChargeConfiguration {
        let k = self.events.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            &self.initial
        } else {
            &self.events[k - 1].1
        }
    }

    pub fn conserves_charge(&self) -> bool {
        let z = self.initial.total_charge();
        self.events.iter().all(|(_, q)| q.total_charge() == z)
    }
}

/// Evolved states and flux tables on the plan grid, shared read-only by all
/// trajectories.
pub struct ProcessCache<'a> {
    pub space: &'a FockSpace,
    pub propagator: Propagator<'a>,
    pub index: ConfigIndex,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub tables: Vec<FluxTable>,
    pub initial: povm::BornTable,
}

impl<'a> ProcessCache<'a> {
    pub fn new(space: &'a FockSpace, psi0: &StateVector, plan: &EvolutionPlan) -> Result<Self> {
        psi0.require_normalized(povm::NORM_TOL)?;
        let propagator = Propagator::new(space, plan)?;
        let index = ConfigIndex::new(space);
        let times = plan.grid();
        let mut states = Vec::with_capacity(times.len());
        let mut tables = Vec::with_capacity(times.len());
        let mut psi = psi0.clone();
        for (k, &t) in times.iter().enumerate() {
            if k > 0 {
                psi = propagator.propagate(&psi, t - times[k - 1])?;
            }
            tables.push(FluxTable::new(&index, propagator.hamiltonian(), &psi));
            states.push(psi.clone());
        }
        let initial = povm::born_distribution(space, psi0, Measure::Nat)?;
        Ok(Self { space, propagator, index, times, states, tables, initial })
    }

    /// Total and per-target rates out of `q` at grid point `k` plus `offset`.
    fn rates(&self, k: usize, offset: f64, q: usize) -> Result<Vec<(usize, f64)>> {
        let rates = if offset == 0.0 {
            self.tables[k].rates_from(q)
        } else {
            let psi = self.propagator.propagate(&self.states[k], offset)?;
            self.rates_direct(&psi, q)
        };
        rates.ok_or(Error::ZeroProbabilityConfiguration { probability: self.tables[k].probabilities[q] })
    }

    fn rates_direct(&self, psi: &StateVector, q: usize) -> Option<Vec<(usize, f64)>> {
        let members = &self.index.members[q];
        let prob: f64 = members.iter().map(|&b| psi.amplitudes[b as usize].norm_sqr()).sum();
        if prob < PROBABILITY_FLOOR {
            return None;
        }
        let mut fluxes: BTreeMap<usize, C64> = BTreeMap::new();
        for &b in members {
            let amp = psi.amplitudes[b as usize];
            self.propagator.hamiltonian().for_each_element(b as usize, |bo, v| {
                let to = self.index.of_string(bo);
                if to != q {
                    *fluxes.entry(to).or_insert(ZERO) += psi.amplitudes[bo].conj() * v * amp;
                }
            });
        }
        Some(fluxes.into_iter().map(|(to, j)| (to, rate_from_flux(j, prob))).filter(|&(_, r)| r > 0.0).collect())
    }

    /// Sample trajectory `traj_id` from the master `seed`.
    pub fn sample(&self, seed: u64, traj_id: u64) -> Result<JumpTrajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(traj_id);
        let start = self.initial.sample(uniform(&mut rng));
        let q0 = ChargeConfiguration { charges: start.charges() };
        let mut q = self.index.find(&q0).expect("Born table entries are valid configurations");
        let mut events = Vec::new();
        for k in 0..self.times.len() - 1 {
            let h = self.times[k + 1] - self.times[k];
            q = self.advance(k, 0.0, h, 0, q, &mut rng, &mut events)?;
        }
        Ok(JumpTrajectory { traj_id, seed, initial: q0, events })
    }

    #[allow(clippy::too_many_arguments)]
    fn advance(
        &self,
        k: usize,
        offset: f64,
        h: f64,
        depth: u32,
        q: usize,
        rng: &mut ChaCha8Rng,
        events: &mut Vec<(f64, ChargeConfiguration)>,
    ) -> Result<usize> {
        let rates = self.rates(k, offset, q)?;
        let total: f64 = rates.iter().map(|r| r.1).sum();
        if total * h >= MAX_JUMP_PROBABILITY {
            if depth >= MAX_REFINEMENT {
                return Err(Error::StepTooCoarse { product: total * h });
            }
            let q = self.advance(k, offset, h / 2.0, depth + 1, q, rng, events)?;
            return self.advance(k, offset + h / 2.0, h / 2.0, depth + 1, q, rng, events);
        }
        // Draw both numbers unconditionally so streams stay aligned.
        let u_jump = uniform(rng);
        let u_pick = uniform(rng);
        let p_jump = -libm::expm1(-total * h);
        if total == 0.0 || u_jump >= p_jump {
            return Ok(q);
        }
        // jump time from the exponential law conditioned on landing in the step
        let tau = -libm::log1p(-u_jump) / total;
        let mut acc = 0.0;
        let mut target = rates[rates.len() - 1].0;
        for &(to, r) in &rates {
            acc += r;
            if u_pick * total < acc {
                target = to;
                break;
            }
        }
        let t = self.times[k] + offset + tau.min(h * (1.0 - 1e-12));
        if let Some((last, _)) = events.last() {
            debug_assert!(t > *last);
        }
        events.push((t, self.index.configs[target].clone()));
        Ok(target)
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sample `n_traj` trajectories sequentially.
pub fn sample_process(
    space: &FockSpace,
    psi0: &StateVector,
    plan: &EvolutionPlan,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<JumpTrajectory>> {
    let cache = ProcessCache::new(space, psi0, plan)?;
    (0..n_traj as u64).map(|id| cache.sample(seed, id)).collect()
}

/// Finite-difference `dP(q)/dt` against the rate prediction at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterEquationCheck {
    pub probability: f64,
    pub finite_difference: f64,
    pub predicted: f64,
}

impl MasterEquationCheck {
    pub fn residual(&self) -> f64 {
        (self.finite_difference - self.predicted).abs()
    }
}

/// Compare `(P_{t+dt}(q) - P_{t-dt}(q)) / 2dt` with the master equation at `psi`.
pub fn master_equation_check(
    propagator: &Propagator<'_>,
    index: &ConfigIndex,
    psi: &StateVector,
    q: usize,
    dt: f64,
) -> Result<MasterEquationCheck> {
    let table = FluxTable::new(index, propagator.hamiltonian(), psi);
    let fwd = index.probabilities(&propagator.propagate(psi, dt)?)[q];
    let back = index.probabilities(&propagator.propagate(psi, -dt)?)[q];
    Ok(MasterEquationCheck {
        probability: table.probabilities[q],
        finite_difference: (fwd - back) / (2.0 * dt),
        predicted: table.master_rhs(q),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivariancePoint {
    pub time: f64,
    pub tv_distance: f64,
    /// 95% bootstrap quantile of the resampled-versus-empirical distance.
    pub bootstrap_radius: f64,
}

/// Total-variation distance between the trajectory marginal and the exact
/// natural Born distribution at each time.
pub fn equivariance_check(
    cache: &ProcessCache<'_>,
    trajectories: &[JumpTrajectory],
    times: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<Vec<EquivariancePoint>> {
    let n = trajectories.len();
    let mut out = Vec::new();
    for &t in times {
        let k = cache.times.iter().rposition(|&s| s <= t + 1e-12).unwrap_or(0);
        let psi = cache.propagator.propagate(&cache.states[k], t - cache.times[k])?;
        let exact = cache.index.probabilities(&psi);
        let samples: Vec<usize> = trajectories
            .iter()
            .map(|tr| cache.index.find(tr.config_at(t)).expect("trajectory configurations are valid"))
            .collect();
        let empirical = histogram(&samples, exact.len());
        let tv = tv_distance(&empirical, &exact);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.to_bits());
        let mut boot: Vec<f64> = (0..n_boot)
            .map(|_| {
                let resample: Vec<usize> = (0..n).map(|_| samples[(rng.next_u64() % n as u64) as usize]).collect();
                tv_distance(&histogram(&resample, exact.len()), &empirical)
            })
            .collect();
        boot.sort_by(f64::total_cmp);
        let radius = if boot.is_empty() { 0.0 } else { boot[((boot.len() as f64 * 0.95) as usize).min(boot.len() - 1)] };
        out.push(EquivariancePoint { time: t, tv_distance: tv, bootstrap_radius: radius });
    }
    Ok(out)
}

fn histogram(samples: &[usize], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    samples.iter().for_each(|&s| h[s] += 1.0);
    let n = samples.len().max(1) as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Norms of `[H, D]` for a diagonal `D`: exact Frobenius and power-iteration
/// operator norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorNorm {
    pub operator: f64,
    pub frobenius: f64,
}

pub fn commutator_with_diagonal(h: &OneBodyOperator, values: &[f64]) -> CommutatorNorm {
    let mut frob = 0.0;
    for (b, &vb) in values.iter().enumerate() {
        h.for_each_element(b, |bo, v| frob += (v * (values[bo] - vb)).norm_sqr());
    }
    let apply = |psi: &[C64]| {
        let mut out = vec![ZERO; psi.len()];
        for (b, &amp) in psi.iter().enumerate() {
            if amp != ZERO {
                h.for_each_element(b, |bo, v| out[bo] += v * amp * (values[bo] - values[b]));
            }
        }
        out
    };
    CommutatorNorm { operator: power_norm(apply, values.len()), frobenius: libm::sqrt(frob) }
}

/// Operator norm of `[H, A]` for a second-quantized one-body `A`.
pub fn commutator_with_one_body(h: &OneBodyOperator, a: &OneBodyOperator, dim: usize) -> f64 {
    let apply = |psi: &[C64]| {
        let (mut t1, mut t2, mut u1, mut u2) = (vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim]);
        a.apply_into(psi, &mut t1);
        h.apply_into(&t1, &mut t2);
        h.apply_into(psi, &mut u1);
        a.apply_into(&u1, &mut u2);
        t2.iter().zip(&u2).map(|(x, y)| x - y).collect::<Vec<_>>()
    };
    power_norm(apply, dim)
}

/// Largest singular value of a normal operator by power iteration on `C^2`.
fn power_norm(apply: impl Fn(&[C64]) -> Vec<C64>, dim: usize) -> f64 {
    let mut v: Vec<C64> = (0..dim).map(|b| C64::new(libm::sin(1.0 + b as f64 * 0.618), libm::cos(0.3 + b as f64 * 1.414))).collect();
    let n0 = linalg::norm(&v);
    v.iter_mut().for_each(|z| *z /= n0);
    let mut estimate = 0.0;
    for _ in 0..300 {
        let w = apply(&apply(&v));
        let nw = linalg::norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = libm::sqrt(nw);
        v = w.into_iter().map(|z| z / nw).collect();
        if (next - estimate).abs() <= 1e-12 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCreationReport {
    pub hopping: f64,
    pub h_n_nat_el: CommutatorNorm,
    pub h_n_nat_pos: CommutatorNorm,
    pub h_n_obv_el: f64,
    pub h_n_obv_pos: f64,
    pub h_charge: CommutatorNorm,
    /// `(z, Frobenius norm of [H, C_z])`.
    pub h_sectors: Vec<(i32, f64)>,
    /// `(t, <N_nat,el(full)>)` starting from a level-space product state.
    pub electron_number_series: Vec<(f64, f64)>,
}

impl PairCreationReport {
    pub fn series_is_constant(&self, tol: f64) -> bool {
        let first = self.electron_number_series.first().map_or(0.0, |p| p.1);
        self.electron_number_series.iter().all(|p| (p.1 - first).abs() <= tol)
    }
}

pub fn pair_creation_diagnostics(space: &FockSpace, t_max: f64, steps: usize) -> Result<PairCreationReport> {
    let h = fock::second_quantized_hamiltonian(space);
    let full = Region::full(space.sites());
    let (el, pos) = povm::number_operators(space, &full);
    let as_f64 = |op: &DiagonalOperator| op.values.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let qp = QuasiParticleBasis::new(space)?;
    let (obv_el, obv_pos) = qp.number_operators(&full);
    let charge = povm::charge_operator(space, &full);
    let h_sectors = povm::charge_sectors(space)
        .into_iter()
        .map(|(z, p)| (z, commutator_with_diagonal(&h, &mask_values(&p)).frobenius))
        .collect();

    let level = level_product_state(space);
    let method = if space.dim() <= SPECTRAL_LIMIT { EvolutionMethod::EigenDecomposition } else { EvolutionMethod::SparseKrylov };
    let plan = EvolutionPlan::new(method, t_max / steps.max(1) as f64, t_max, 1e-10)?;
    let prop = Propagator::new(space, &plan)?;
    let mut series = Vec::new();
    for t in plan.grid() {
        let psi = prop.propagate(&level, t)?;
        series.push((t, el.expectation(&psi)));
    }
    Ok(PairCreationReport {
        hopping: 1.0 / (2.0 * space.sys.spec.spacing()),
        h_n_nat_el: commutator_with_diagonal(&h, &as_f64(&el)),
        h_n_nat_pos: commutator_with_diagonal(&h, &as_f64(&pos)),
        h_n_obv_el: commutator_with_one_body(&h, &obv_el, space.dim()),
        h_n_obv_pos: commutator_with_one_body(&h, &obv_pos, space.dim()),
        h_charge: commutator_with_diagonal(&h, &as_f64(&charge)),
        h_sectors,
        electron_number_series: series,
    })
}

fn mask_values(p: &DiagonalProjector) -> Vec<f64> {
    (0..p.dim()).map(|b| if p.contains(b) { 1.0 } else { 0.0 }).collect()
}

/// The level basis string with the lowest `d/2` spin modes of every site filled.
pub fn level_product_state(space: &FockSpace) -> StateVector {
    let (d, h) = (space.spin_dim(), space.spin_dim() / 2);
    let b = (0..space.sites()).fold(0usize, |acc, x| acc | ((1usize << h) - 1) << (x * d));
    let mut amps = space.zero_vector();
    amps[b] = C64::new(1.0, 0.0);
    StateVector { amplitudes: amps, label: alloc::string::String::from("level"), normalized: true }
}
