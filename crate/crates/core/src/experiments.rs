//! Scripted studies. Every function here is a pure function of its inputs.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dynamics::{self, EvolutionMethod, EvolutionPlan, PairCreationReport, Propagator};
use crate::error::{Error, Result};
use crate::fock::{self, FockSpace, StateVector};
use crate::lattice::{build_one_particle, LatticeSpec};
use crate::povm::{self, ChargeConfiguration, Measure, QuasiParticleBasis, Region};

/// Fock-dimension guard for the studies, in modes.
pub const STUDY_MODE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyKind {
    VacuumScan,
    ChargeFluctuation,
    Locality,
    SeaGallery,
    PairCreation,
}

impl StudyKind {
    pub const ALL: [StudyKind; 5] =
        [StudyKind::VacuumScan, StudyKind::ChargeFluctuation, StudyKind::Locality, StudyKind::SeaGallery, StudyKind::PairCreation];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::VacuumScan => "vacuum_scan",
            StudyKind::ChargeFluctuation => "charge_fluctuation",
            StudyKind::Locality => "locality",
            StudyKind::SeaGallery => "sea_gallery",
            StudyKind::PairCreation => "pair_creation",
        }
    }
}

impl core::str::FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSpec(alloc::format!("unknown study {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub study: StudyKind,
    pub sweep: Vec<LatticeSpec>,
    pub n_traj: usize,
    pub seed: u64,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.sweep.first() else {
            return Err(Error::InvalidSpec(String::from("empty sweep")));
        };
        if self.sweep.iter().any(|s| s.spin_dim != first.spin_dim) {
            return Err(Error::InvalidSpec(String::from("sweep mixes spin dimensions")));
        }
        for spec in &self.sweep {
            spec.validate()?;
            if spec.modes() > STUDY_MODE_LIMIT {
                return Err(Error::TooLarge { modes: spec.modes(), limit: STUDY_MODE_LIMIT });
            }
        }
        Ok(())
    }
}

/// `dim = 1`, `d = 2`, `m = 1`, `N` in `{4, 6, 8, 10}` and spacing in
/// `{0.5, 1.0}`. `N = 2` is left out: there the central difference decouples
/// the sites and the sea is exactly level.
pub fn default_sweep() -> Vec<LatticeSpec> {
    let mut out = Vec::new();
    for a in [0.5, 1.0] {
        for n in [4, 6, 8, 10] {
            out.push(LatticeSpec { dim: 1, n_per_side: n, box_length: n as f64 * a, mass: 1.0, spin_dim: 2 });
        }
    }
    out
}

fn build(spec: &LatticeSpec) -> Result<FockSpace> {
    spec.validate()?;
    if spec.modes() > STUDY_MODE_LIMIT {
        return Err(Error::TooLarge { modes: spec.modes(), limit: STUDY_MODE_LIMIT });
    }
    FockSpace::new(build_one_particle(spec)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VacuumRow {
    pub n: usize,
    pub box_length: f64,
    pub spacing: f64,
    /// From diagonal binning of the Born table.
    pub p_vac: f64,
    /// `<Omega| p_nat(empty) |Omega>` from the projector.
    pub p_vac_projector: f64,
    pub p_vac_obv: f64,
    pub mean_nonzero_sites: f64,
    pub mean_n_el: f64,
    pub mean_n_pos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trend {
    /// The fixed parameter of the slice (spacing or box length).
    pub fixed: f64,
    pub points: usize,
    pub decreasing: bool,
    pub increasing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VacuumScan {
    pub rows: Vec<VacuumRow>,
    /// Slices of fixed spacing, ordered by growing box length.
    pub fixed_spacing: Vec<Trend>,
    /// Slices of fixed box length, ordered by growing `N`.
    pub fixed_length: Vec<Trend>,
}

pub fn vacuum_row(spec: &LatticeSpec) -> Result<VacuumRow> {
    let space = build(spec)?;
    let omega = fock::sea_state(&space)?;
    let table = povm::born_distribution(&space, &omega, Measure::Nat)?;
    let projector = povm::p_nat(&space, &ChargeConfiguration::empty(space.sites()))?;
    let qp = QuasiParticleBasis::new(&space)?;
    let obv = povm::born_obv(&qp, &omega, space.spin_dim())?;
    Ok(VacuumRow {
        n: spec.n_per_side,
        box_length: spec.box_length,
        spacing: spec.spacing(),
        p_vac: table.vacuum_probability(),
        p_vac_projector: projector.probability(&omega),
        p_vac_obv: obv.vacuum_probability(),
        mean_nonzero_sites: table.expectation(|e| e.charges().iter().filter(|&&q| q != 0).count() as f64),
        mean_n_el: table.expectation(|e| e.n_el() as f64),
        mean_n_pos: table.expectation(|e| e.n_pos() as f64),
    })
}

pub fn vacuum_scan(sweep: &[LatticeSpec]) -> Result<VacuumScan> {
    Ok(vacuum_scan_from_rows(sweep.iter().map(vacuum_row).collect::<Result<Vec<_>>>()?))
}

/// Sort precomputed rows and extract the trends.
pub fn vacuum_scan_from_rows(mut rows: Vec<VacuumRow>) -> VacuumScan {
    rows.sort_by(|a, b| a.spacing.total_cmp(&b.spacing).then(a.n.cmp(&b.n)));
    let fixed_spacing = trends(&rows, |r| r.spacing, |r| r.box_length);
    let fixed_length = trends(&rows, |r| r.box_length, |r| r.n as f64);
    VacuumScan { rows, fixed_spacing, fixed_length }
}

fn trends(rows: &[VacuumRow], key: impl Fn(&VacuumRow) -> f64, order: impl Fn(&VacuumRow) -> f64) -> Vec<Trend> {
    let mut groups: Vec<(f64, Vec<&VacuumRow>)> = Vec::new();
    for r in rows {
        let k = key(r);
        match groups.iter_mut().find(|g| (g.0 - k).abs() < 1e-9) {
            Some(g) => g.1.push(r),
            None => groups.push((k, alloc::vec![r])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    groups
        .into_iter()
        .filter(|g| g.1.len() >= 2)
        .map(|(fixed, mut members)| {
            members.sort_by(|a, b| order(a).total_cmp(&order(b)));
            let p: Vec<f64> = members.iter().map(|r| r.p_vac).collect();
            Trend {
                fixed,
                points: p.len(),
                decreasing: p.windows(2).all(|w| w[1] < w[0]),
                increasing: p.windows(2).all(|w| w[1] > w[0]),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationRow {
    pub n: usize,
    pub box_length: f64,
    pub region_sites: usize,
    /// `<Omega| Q(A)^2 |Omega>`.
    pub charge_variance: f64,
    /// `P_nat(q_A != 0)` in the sea.
    pub p_charged: f64,
    /// Expected number of nonzero-charge sites in `A`.
    pub mean_nonzero_sites: f64,
}

/// Charge fluctuations of the sea in intervals `A = {0, ..., len - 1}`.
pub fn charge_fluctuation(sweep: &[LatticeSpec]) -> Result<Vec<FluctuationRow>> {
    let mut rows = Vec::new();
    for spec in sweep {
        let space = build(spec)?;
        let omega = fock::sea_state(&space)?;
        for len in 1..=space.sites() {
            let region = Region::new(0..len, space.sites())?;
            let q = povm::charge_operator(&space, &region);
            let mut var = 0.0;
            let mut charged = 0.0;
            let mut nonzero = 0.0;
            for (b, a) in omega.amplitudes.iter().enumerate() {
                let w = a.norm_sqr();
                if w == 0.0 {
                    continue;
                }
                let v = q.values[b] as f64;
                var += w * v * v;
                if q.values[b] != 0 {
                    charged += w;
                }
                let h = space.spin_dim() / 2;
                nonzero += w * region.sites().iter().filter(|&&x| space.occupation(b, x) != h).count() as f64;
            }
            rows.push(FluctuationRow {
                n: spec.n_per_side,
                box_length: spec.box_length,
                region_sites: len,
                charge_variance: var,
                p_charged: charged,
                mean_nonzero_sites: nonzero,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalityRow {
    pub collar_radius: f64,
    pub collar_sites: usize,
    /// Probability that the collar holds no particles at time `t`.
    pub p_collar_empty: f64,
    /// `P(q_A != 0 | collar empty)` at time `t`.
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalityReport {
    pub time: f64,
    /// Maximum group velocity of the lattice dispersion.
    pub signal_speed: f64,
    pub initial_probability: f64,
    pub rows: Vec<LocalityRow>,
    /// Largest `|<Q(full)>_t - <Q(full)>_0|` over the check.
    pub charge_drift: f64,
    pub leakage_decreasing: bool,
}

/// Condition the sea on "no particles in `region`", evolve for `t`, and
/// measure the charge in `region` given an empty collar
/// `Gr(A, r) \ Sr(A, r)` for `r = v t + extra` with each `extra` in `widenings`.
pub fn locality_check(spec: &LatticeSpec, region: &Region, t: f64, widenings: &[f64]) -> Result<LocalityReport> {
    let space = build(spec)?;
    let speed = spec.max_group_velocity();
    let r0 = speed * t.abs();
    if region.is_empty() || region.grown(spec, r0).len() == space.sites() {
        return Err(Error::RegionTooLarge);
    }
    let omega = fock::sea_state(&space)?;
    let empty_a = povm::p_nat_local(&space, region, &alloc::vec![0; region.len()])?;
    let initial_probability = empty_a.probability(&omega);
    let psi0 = empty_a.apply(&omega).normalize();

    let method = if space.dim() <= dynamics::SPECTRAL_LIMIT { EvolutionMethod::EigenDecomposition } else { EvolutionMethod::SparseKrylov };
    let plan = EvolutionPlan::new(method, t.abs().max(1e-6), t.abs().max(1e-6), 1e-10)?;
    let prop = Propagator::new(&space, &plan)?;
    let psi = if t == 0.0 { psi0.clone() } else { prop.propagate(&psi0, t)? };
    let full = povm::charge_operator(&space, &Region::full(space.sites()));
    let charge_drift = (full.expectation(&psi) - full.expectation(&psi0)).abs();

    let charge_a = povm::charge_operator(&space, region);
    let mut rows = Vec::new();
    for &extra in widenings {
        let r = r0 + extra;
        let grown = region.grown(spec, r);
        let shrunk = region.shrunk(spec, r);
        let collar = Region::new(grown.sites().iter().copied().filter(|x| !shrunk.contains(*x)), space.sites())?;
        let collar_empty = povm::p_nat_local(&space, &collar, &alloc::vec![0; collar.len()])?;
        let mut p_empty = 0.0;
        let mut p_leak = 0.0;
        for (b, a) in psi.amplitudes.iter().enumerate() {
            if collar_empty.contains(b) {
                p_empty += a.norm_sqr();
                if charge_a.values[b] != 0 {
                    p_leak += a.norm_sqr();
                }
            }
        }
        rows.push(LocalityRow {
            collar_radius: r,
            collar_sites: collar.len(),
            p_collar_empty: p_empty,
            leakage: if p_empty > 0.0 { p_leak / p_empty } else { 0.0 },
        });
    }
    let leakage_decreasing = rows.windows(2).all(|w| w[1].leakage <= w[0].leakage + 1e-15);
    Ok(LocalityReport { time: t, signal_speed: speed, initial_probability, rows, charge_drift, leakage_decreasing })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    pub samples: Vec<ChargeConfiguration>,
    /// `(n_el, n_pos) -> count`.
    pub histogram: BTreeMap<(usize, usize), usize>,
    pub p_vac_exact: f64,
    pub p_vac_empirical: f64,
}

/// I.i.d. samples from the natural Born distribution of the sea.
pub fn sea_gallery(spec: &LatticeSpec, n_samples: usize, seed: u64) -> Result<Gallery> {
    let space = build(spec)?;
    let omega = fock::sea_state(&space)?;
    let table = povm::born_distribution(&space, &omega, Measure::Nat)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histogram = BTreeMap::new();
    let mut vac = 0usize;
    let samples: Vec<ChargeConfiguration> = (0..n_samples)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let q = ChargeConfiguration { charges: table.sample(u).charges() };
            *histogram.entry((q.n_el(), q.n_pos())).or_insert(0) += 1;
            if q.nonzero_sites() == 0 {
                vac += 1;
            }
            q
        })
        .collect();
    Ok(Gallery {
        samples,
        histogram,
        p_vac_exact: table.vacuum_probability(),
        p_vac_empirical: vac as f64 / n_samples.max(1) as f64,
    })
}

/// Commutator diagnostics per sweep point.
pub fn pair_creation(sweep: &[LatticeSpec], t_max: f64, steps: usize) -> Result<Vec<(LatticeSpec, PairCreationReport)>> {
    sweep
        .iter()
        .map(|spec| {
            let space = build(spec)?;
            Ok((*spec, dynamics::pair_creation_diagnostics(&space, t_max, steps)?))
        })
        .collect()
}

/// A ready-made state by name: `sea`, `bottom`, `level` or `packet`
/// (one electron wave packet added to the sea).
pub fn named_state(space: &FockSpace, name: &str) -> Result<StateVector> {
    match name {
        "sea" => fock::sea_state(space),
        "bottom" => Ok(fock::bottom_state(space)),
        "level" => Ok(dynamics::level_product_state(space)),
        "packet" => {
            let n = space.sys.spec.n_per_side as f64;
            let g = fock::electron_packet(space, n / 4.0, 1.0, core::f64::consts::FRAC_PI_2 / space.sys.spec.spacing(), 0);
            fock::add_electron(space, &g, &fock::sea_state(space)?, "packet")
        }
        other => Err(Error::InvalidSpec(alloc::format!("unknown state {other:?}"))),
    }
}
