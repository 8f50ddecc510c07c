//! Invariant suite run by `diracsea selftest`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use diracsea_core::dynamics::{self, ConfigIndex, EvolutionMethod, EvolutionPlan, FluxTable, Propagator};
use diracsea_core::fock::{self, FockSpace, StateVector};
use diracsea_core::linalg;
use diracsea_core::povm::{self, ChargeConfiguration, QuasiParticleBasis, Region};
use diracsea_core::{Result, C64};

use crate::formats::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance
    }
}

pub fn to_table(checks: &[Check]) -> Table {
    let mut t = Table::new(["check", "value", "tolerance", "passed"]);
    for c in checks {
        t.push(vec![c.name.into(), c.value.into(), c.tolerance.into(), c.passed().into()]);
    }
    t
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<C64> {
    let mut u = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
    (0..len).map(|_| C64::new(u(), u())).collect()
}

fn random_state(rng: &mut ChaCha8Rng, space: &FockSpace) -> StateVector {
    StateVector::new(random_vector(rng, space.dim()), "random").normalize()
}

fn distance(a: &StateVector, b: &StateVector) -> f64 {
    a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Every check for one space. Deterministic in `seed`.
pub fn run(space: &FockSpace, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = &space.sys;
    let spec = &sys.spec;
    let (d, sites, modes) = (space.spin_dim(), space.sites(), space.modes());
    let mut checks = Vec::new();
    let mut push = |name, value, tolerance| checks.push(Check { name, value, tolerance });

    push("h1_hermitian", linalg::hermiticity_defect(&sys.h1), 1e-12);
    let gap = sys.eigenvalues.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    push("spectral_gap", (spec.mass - gap).max(0.0), 1e-9);
    push("mode_balance", sys.neg_modes.len().abs_diff(sys.pos_modes.len()) as f64, 0.0);
    push("conjugation", sys.conjugation.defect, 1e-10);

    // CAR on a random vector
    let psi = random_state(&mut rng, space);
    let (mut mixed, mut same) = (0.0f64, 0.0f64);
    for _ in 0..3 {
        let f = random_vector(&mut rng, modes);
        let g = random_vector(&mut rng, modes);
        let fg = linalg::inner(&f, &g);
        let a = fock::field_operator(space, &f, false, &fock::field_operator(space, &g, true, &psi)?)?;
        let b = fock::field_operator(space, &g, true, &fock::field_operator(space, &f, false, &psi)?)?;
        let anti: Vec<C64> = a.amplitudes.iter().zip(&b.amplitudes).zip(&psi.amplitudes).map(|((x, y), p)| x + y - fg * p).collect();
        mixed = mixed.max(linalg::norm(&anti));
        let a = fock::field_operator(space, &f, false, &fock::field_operator(space, &g, false, &psi)?)?;
        let b = fock::field_operator(space, &g, false, &fock::field_operator(space, &f, false, &psi)?)?;
        let anti: Vec<C64> = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x + y).collect();
        same = same.max(linalg::norm(&anti));
    }
    push("car_mixed", mixed, 1e-11);
    push("car_same", same, 1e-12);

    let omega = fock::sea_state(space)?;
    let h = fock::second_quantized_hamiltonian(space);
    push("sea_normalized", (omega.norm() - 1.0).abs(), 1e-10);
    push("sea_energy_zero", h.apply(&omega).norm(), 1e-9);

    // The natural PVM partitions the strings; the level projector has the
    // expected rank.
    let index = ConfigIndex::new(space);
    let total: f64 = index.probabilities(&psi).iter().sum();
    push("nat_completeness", (total - 1.0).abs(), 1e-12);
    let level = povm::p_nat(space, &ChargeConfiguration::empty(sites))?;
    push("nat_level_rank", level.rank().abs_diff(binomial(d, d / 2).pow(sites as u32)) as f64, 0.0);

    let qp = QuasiParticleBasis::new(space)?;
    let vac = povm::p_obv(&qp, &vec![0; sites], &vec![0; sites]);
    push("obv_vacuum_rank", vac.rank().abs_diff(1) as f64, 0.0);
    push("obv_vacuum_sea", (vac.probability(&omega) - 1.0).abs(), 1e-12);

    let full = Region::full(sites);
    let q = povm::charge_operator(space, &full);
    let (el, pos) = povm::number_operators(space, &full);
    let split = q.values.iter().zip(pos.sub(&el).values.iter()).filter(|(a, b)| a != b).count();
    push("charge_split", split as f64, 0.0);
    let qf: Vec<f64> = q.values.iter().map(|&v| v as f64).collect();
    push("h_charge_commutator", dynamics::commutator_with_diagonal(&h, &qf).operator, 1e-10);

    let sea_table = FluxTable::new(&index, &h, &omega);
    push("sea_rates_zero", sea_table.max_total_rate(0.0), 1e-12);

    let plan = EvolutionPlan::new(EvolutionMethod::EigenDecomposition, 1e-4, 1e-4, 1e-12)?;
    let prop = Propagator::new(space, &plan)?;
    let mut residual = 0.0f64;
    for _ in 0..3 {
        let q = (rng.next_u64() % index.len() as u64) as usize;
        residual = residual.max(dynamics::master_equation_check(&prop, &index, &psi, q, 1e-4)?.residual());
    }
    push("master_equation", residual, 1e-6);

    let later = prop.propagate(&psi, 0.7)?;
    push("unitarity", (later.norm() - 1.0).abs(), 1e-10);
    let back = prop.propagate(&later, -0.7)?;
    push("time_reversal", distance(&back, &psi), 1e-9);
    Ok(checks)
}
