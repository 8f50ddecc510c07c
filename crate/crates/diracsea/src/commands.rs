//! Subcommand implementations. Each returns an [`Outcome`]; writing it to
//! disk is left to the caller.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::json;

use diracsea_core::dynamics::{
    self, classify_jump, EvolutionMethod, EvolutionPlan, ProcessCache, Propagator,
};
use diracsea_core::experiments::{self, StudyKind};
use diracsea_core::fock::{self, FockSpace, StateVector};
use diracsea_core::povm::{self, Measure, Region};
use diracsea_core::{build_one_particle, LatticeSpec};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::formats::{self, Cell, StateHeader, Table};
use crate::output::Outcome;
use crate::parallel;
use crate::selftest;

/// Relative drift of norm or total charge tolerated by `evolve`.
pub const DRIFT_TOL: f64 = 1e-8;

pub fn build_space(spec: &LatticeSpec) -> CliResult<FockSpace> {
    Ok(FockSpace::new(build_one_particle(spec)?)?)
}

pub fn run(cfg: &RunConfig, command: &Command) -> CliResult<Outcome> {
    let spec = cfg.lattice();
    match command {
        Command::Spectrum => spectrum(&spec),
        Command::Sea => sea(&spec),
        Command::Born { state, measure } => born(&spec, state, measure),
        Command::Evolve { state, t_max, dt, method, tolerance } => {
            let plan = plan(method, *dt, *t_max, *tolerance)?;
            evolve(&spec, state, &plan)
        }
        Command::Bell { state, n_traj, t_max, dt, method, probe, bootstrap } => {
            let plan = plan(method, *dt, *t_max, 1e-10)?;
            let probes = if probe.is_empty() { vec![t_max / 3.0, 2.0 * t_max / 3.0, *t_max] } else { probe.clone() };
            parallel::with_workers(cfg.workers, || bell(&spec, state, &plan, *n_traj, cfg.seed, &probes, *bootstrap))?
        }
        Command::Study { name, sweep, samples, region_start, region_len, time, t_max, steps } => {
            let kind: StudyKind = name.parse().map_err(|_| {
                let names: Vec<&str> = StudyKind::ALL.iter().map(|k| k.name()).collect();
                CliError::Validation(format!("unknown study {name:?}; expected one of {}", names.join(", ")))
            })?;
            let sweep = study_sweep(cfg, kind, sweep.as_deref())?;
            let args = StudyArgs {
                samples: *samples,
                region_start: *region_start,
                region_len: *region_len,
                time: *time,
                t_max: *t_max,
                steps: *steps,
                seed: cfg.seed,
            };
            parallel::with_workers(cfg.workers, || study(kind, &sweep, &args))?
        }
        Command::Selftest => self_test(&spec, cfg.seed),
    }
}

fn plan(method: &str, dt: f64, t_max: f64, tolerance: f64) -> CliResult<EvolutionPlan> {
    let method: EvolutionMethod = method.parse()?;
    Ok(EvolutionPlan::new(method, dt, t_max, tolerance)?)
}

fn study_sweep(cfg: &RunConfig, kind: StudyKind, sweep: Option<&str>) -> CliResult<Vec<LatticeSpec>> {
    let default = matches!(kind, StudyKind::VacuumScan | StudyKind::ChargeFluctuation);
    let specs = match sweep {
        Some("default") => experiments::default_sweep(),
        Some("single") => vec![cfg.lattice()],
        None if default => experiments::default_sweep(),
        None => vec![cfg.lattice()],
        Some(other) => return Err(CliError::Validation(format!("--sweep must be default or single, not {other:?}"))),
    };
    if specs.len() > 1 && matches!(kind, StudyKind::Locality | StudyKind::SeaGallery) {
        return Err(CliError::Validation(format!("{} runs on a single spec", kind.name())));
    }
    for spec in &specs {
        cfg.check_size(spec)?;
    }
    Ok(specs)
}

fn spectrum(spec: &LatticeSpec) -> CliResult<Outcome> {
    let sys = build_one_particle(spec)?;
    let basis = diracsea_core::momentum_eigenbasis(&sys)?;
    let gap = sys.eigenvalues.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    let mut out = Outcome::new("spectrum", vec![*spec]).table("eigen", formats::eigen_table(&basis));
    out.summary = json!({
        "modes": sys.modes(),
        "gap": gap,
        "negative_modes": sys.neg_modes.len(),
        "positive_modes": sys.pos_modes.len(),
        "conjugation": sys.conjugation.label,
        "conjugation_square_sign": sys.conjugation.square_sign,
        "conjugation_defect": sys.conjugation.defect,
        "max_group_velocity": spec.max_group_velocity(),
    });
    Ok(out)
}

fn sea(spec: &LatticeSpec) -> CliResult<Outcome> {
    let space = build_space(spec)?;
    let omega = fock::sea_state(&space)?;
    let d = space.spin_dim();
    let mut occ = Table::new(["site", "spin", "mode", "occupancy"]);
    let mut site_occ = vec![0.0; space.sites()];
    for (x, total) in site_occ.iter_mut().enumerate() {
        for s in 0..d {
            let mode = space.mode(x, s);
            let n: f64 =
                omega.amplitudes.iter().enumerate().filter(|(b, _)| b >> mode & 1 == 1).map(|(_, a)| a.norm_sqr()).sum();
            *total += n;
            occ.push(vec![x.into(), s.into(), mode.into(), n.into()]);
        }
    }
    let site_defect = site_occ.iter().map(|n| (n - (d / 2) as f64).abs()).fold(0.0, f64::max);
    let h = fock::second_quantized_hamiltonian(&space);
    let nat = povm::born_distribution(&space, &omega, Measure::Nat)?;
    let mut bytes = Vec::new();
    formats::write_state_binary(&mut bytes, StateHeader::for_space(&space), &omega)?;
    let mut out = Outcome::new("sea", vec![*spec]).table("occupancy", occ);
    out.binaries.push(("state.bin".into(), bytes));
    if space.modes() <= 12 {
        out.tables.push(("state".into(), formats::state_hex_table(&omega)));
    }
    let energy = h.expectation(&omega).re;
    out.summary = json!({
        "norm": omega.norm(),
        "energy": energy,
        "site_occupancy_defect": site_defect,
        "p_vac_nat": nat.vacuum_probability(),
        "particle_number": (space.modes() / 2),
    });
    if site_defect > 1e-10 || (omega.norm() - 1.0).abs() > 1e-10 {
        out.failure = Some(format!("sea occupancy defect {site_defect:e}"));
    }
    Ok(out)
}

fn born(spec: &LatticeSpec, state: &str, measure: &str) -> CliResult<Outcome> {
    let measure: Measure = measure.parse()?;
    let space = build_space(spec)?;
    let psi = resolve_state(&space, state)?;
    let table = povm::born_distribution(&space, &psi, measure)?;
    let mut out = Outcome::new(format!("born_{}_{}", state_tag(state), measure.name()), vec![*spec]).table("born", formats::born_table(&table));
    out.summary = json!({
        "state": state,
        "measure": measure.name(),
        "entries": table.entries.len(),
        "total": table.total(),
        "dropped": table.dropped,
        "vacuum_probability": table.vacuum_probability(),
        "mean_n_el": table.expectation(|e| e.n_el() as f64),
        "mean_n_pos": table.expectation(|e| e.n_pos() as f64),
    });
    Ok(out)
}

fn evolve(spec: &LatticeSpec, state: &str, plan: &EvolutionPlan) -> CliResult<Outcome> {
    let space = build_space(spec)?;
    let psi0 = resolve_state(&space, state)?;
    let prop = Propagator::new(&space, plan)?;
    let h = fock::second_quantized_hamiltonian(&space);
    let full = Region::full(space.sites());
    let charge = povm::charge_operator(&space, &full);
    let (el, pos) = povm::number_operators(&space, &full);
    let vac = povm::p_nat(&space, &povm::ChargeConfiguration::empty(space.sites()))?;

    let mut t = Table::new(["time", "norm", "energy", "total_charge", "n_nat_el", "n_nat_pos", "p_vac_nat"]);
    let mut psi = psi0.clone();
    let grid = plan.grid();
    let (q0, mut drift) = (charge.expectation(&psi0), 0.0f64);
    for (k, &time) in grid.iter().enumerate() {
        if k > 0 {
            psi = prop.propagate(&psi, time - grid[k - 1])?;
        }
        let q = charge.expectation(&psi);
        drift = drift.max((psi.norm() - 1.0).abs()).max((q - q0).abs());
        t.push(vec![
            time.into(),
            psi.norm().into(),
            h.expectation(&psi).re.into(),
            q.into(),
            el.expectation(&psi).into(),
            pos.expectation(&psi).into(),
            vac.probability(&psi).into(),
        ]);
    }
    let mut out = Outcome::new(format!("evolve_{}", state_tag(state)), vec![*spec]).table("series", t);
    out.summary = json!({ "state": state, "method": format!("{:?}", plan.method), "steps": grid.len(), "max_drift": drift });
    if drift > DRIFT_TOL {
        out.failure = Some(format!("norm or charge drift {drift:e} above {DRIFT_TOL:e}"));
    }
    Ok(out)
}

/// Trajectories plus equivariance diagnostics.
pub fn bell(
    spec: &LatticeSpec,
    state: &str,
    plan: &EvolutionPlan,
    n_traj: usize,
    seed: u64,
    probes: &[f64],
    bootstrap: usize,
) -> CliResult<Outcome> {
    if let Some(t) = probes.iter().find(|&&t| !(0.0..=plan.t_max + 1e-12).contains(&t)) {
        return Err(CliError::Validation(format!("probe time {t} outside [0, {}]", plan.t_max)));
    }
    let space = build_space(spec)?;
    let psi0 = resolve_state(&space, state)?;
    let cache = ProcessCache::new(&space, &psi0, plan)?;
    let trajectories = parallel::sample_trajectories(&cache, n_traj, seed)?;
    let points = dynamics::equivariance_check(&cache, &trajectories, probes, bootstrap, seed)?;

    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unclassified = 0usize;
    for tr in &trajectories {
        let mut prev = &tr.initial;
        for (_, q) in &tr.events {
            match classify_jump(&space, prev, q) {
                Some(k) => *kinds.entry(k.name()).or_default() += 1,
                None => unclassified += 1,
            }
            prev = q;
        }
    }
    let jumps: usize = trajectories.iter().map(|t| t.events.len()).sum();
    let violations = trajectories.iter().filter(|t| !t.conserves_charge()).count();
    let diagnostics = json!({
        "state": state,
        "n_traj": n_traj,
        "seed": seed,
        "jumps": jumps,
        "jump_kinds": kinds,
        "unclassified_jumps": unclassified,
        "charge_violations": violations,
        "equivariance": points.iter().map(|p| json!({
            "time": p.time,
            "tv_distance": p.tv_distance,
            "bootstrap_radius": p.bootstrap_radius,
        })).collect::<Vec<_>>(),
    });
    let mut out = Outcome::new(format!("bell_{}", state_tag(state)), vec![*spec])
        .table("trajectories", formats::trajectory_table(space.sites(), &trajectories))
        .document("diagnostics", diagnostics.clone());
    out.summary = diagnostics;
    if violations > 0 {
        out.failure = Some(format!("{violations} trajectories changed total charge"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StudyArgs {
    pub samples: usize,
    pub region_start: usize,
    pub region_len: usize,
    pub time: f64,
    pub t_max: f64,
    pub steps: usize,
    pub seed: u64,
}

pub fn study(kind: StudyKind, sweep: &[LatticeSpec], args: &StudyArgs) -> CliResult<Outcome> {
    let out = Outcome::new(kind.name(), sweep.to_vec());
    match kind {
        StudyKind::VacuumScan => vacuum_scan(out, sweep),
        StudyKind::ChargeFluctuation => charge_fluctuation(out, sweep),
        StudyKind::Locality => locality(out, &sweep[0], args),
        StudyKind::SeaGallery => gallery(out, &sweep[0], args),
        StudyKind::PairCreation => pair_creation(out, sweep, args),
    }
}

fn vacuum_scan(mut out: Outcome, sweep: &[LatticeSpec]) -> CliResult<Outcome> {
    let rows = sweep.par_iter().map(experiments::vacuum_row).collect::<Result<Vec<_>, _>>()?;
    let scan = experiments::vacuum_scan_from_rows(rows);
    let mut t = Table::new([
        "n",
        "box_length",
        "spacing",
        "p_vac",
        "p_vac_projector",
        "p_vac_obv",
        "mean_nonzero_sites",
        "mean_n_el",
        "mean_n_pos",
    ]);
    for r in &scan.rows {
        t.push(vec![
            r.n.into(),
            r.box_length.into(),
            r.spacing.into(),
            r.p_vac.into(),
            r.p_vac_projector.into(),
            r.p_vac_obv.into(),
            r.mean_nonzero_sites.into(),
            r.mean_n_el.into(),
            r.mean_n_pos.into(),
        ]);
    }
    let trends = |ts: &[experiments::Trend]| {
        ts.iter()
            .map(|t| json!({"fixed": t.fixed, "points": t.points, "decreasing": t.decreasing, "increasing": t.increasing}))
            .collect::<Vec<_>>()
    };
    out.summary = json!({ "fixed_spacing": trends(&scan.fixed_spacing), "fixed_length": trends(&scan.fixed_length) });
    Ok(out.table("data", t))
}

fn charge_fluctuation(mut out: Outcome, sweep: &[LatticeSpec]) -> CliResult<Outcome> {
    let rows = sweep
        .par_iter()
        .map(|s| experiments::charge_fluctuation(std::slice::from_ref(s)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(["n", "box_length", "region_sites", "charge_variance", "p_charged", "mean_nonzero_sites"]);
    for r in rows.iter().flatten() {
        t.push(vec![
            r.n.into(),
            r.box_length.into(),
            r.region_sites.into(),
            r.charge_variance.into(),
            r.p_charged.into(),
            r.mean_nonzero_sites.into(),
        ]);
    }
    out.summary = json!({ "rows": t.rows.len() });
    Ok(out.table("data", t))
}

fn locality(mut out: Outcome, spec: &LatticeSpec, args: &StudyArgs) -> CliResult<Outcome> {
    let sites = spec.sites();
    if args.region_len == 0 || args.region_start >= sites {
        return Err(CliError::Validation(format!("region must start below {sites} and be nonempty")));
    }
    let region = Region::new((0..args.region_len).map(|i| (args.region_start + i) % sites), sites)?;
    let a = spec.spacing();
    let widenings: Vec<f64> = (0..4).map(|k| k as f64 * a).collect();
    let report = experiments::locality_check(spec, &region, args.time, &widenings)?;
    let mut t = Table::new(["collar_radius", "collar_sites", "p_collar_empty", "leakage"]);
    for r in &report.rows {
        t.push(vec![r.collar_radius.into(), r.collar_sites.into(), r.p_collar_empty.into(), r.leakage.into()]);
    }
    out.summary = json!({
        "region": region.sites(),
        "time": report.time,
        "signal_speed": report.signal_speed,
        "initial_probability": report.initial_probability,
        "charge_drift": report.charge_drift,
        "leakage_decreasing": report.leakage_decreasing,
    });
    Ok(out.table("data", t))
}

fn gallery(mut out: Outcome, spec: &LatticeSpec, args: &StudyArgs) -> CliResult<Outcome> {
    let g = experiments::sea_gallery(spec, args.samples, args.seed)?;
    let mut cols = vec!["sample".to_string()];
    cols.extend((0..spec.sites()).map(|x| format!("q{x}")));
    cols.extend(["n_el".to_string(), "n_pos".to_string()]);
    let mut t = Table::new(cols);
    for (i, q) in g.samples.iter().enumerate() {
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(q.charges.iter().map(|&c| Cell::Int(c as i64)));
        row.extend([q.n_el().into(), q.n_pos().into()]);
        t.push(row);
    }
    let mut hist = Table::new(["n_el", "n_pos", "count"]);
    for (&(e, p), &c) in &g.histogram {
        hist.push(vec![e.into(), p.into(), c.into()]);
    }
    out.summary = json!({ "samples": args.samples, "p_vac_exact": g.p_vac_exact, "p_vac_empirical": g.p_vac_empirical });
    Ok(out.table("data", t).table("histogram", hist))
}

fn pair_creation(mut out: Outcome, sweep: &[LatticeSpec], args: &StudyArgs) -> CliResult<Outcome> {
    let reports = sweep
        .par_iter()
        .map(|s| experiments::pair_creation(std::slice::from_ref(s), args.t_max, args.steps))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new([
        "n",
        "box_length",
        "hopping",
        "h_n_nat_el",
        "h_n_nat_pos",
        "h_n_obv_el",
        "h_n_obv_pos",
        "h_charge",
        "max_h_sector",
    ]);
    let mut series = Table::new(["n", "box_length", "time", "n_nat_el"]);
    for (spec, r) in reports.iter().flatten() {
        let max_sector = r.h_sectors.iter().map(|s| s.1).fold(0.0, f64::max);
        t.push(vec![
            spec.n_per_side.into(),
            spec.box_length.into(),
            r.hopping.into(),
            r.h_n_nat_el.operator.into(),
            r.h_n_nat_pos.operator.into(),
            r.h_n_obv_el.into(),
            r.h_n_obv_pos.into(),
            r.h_charge.operator.into(),
            max_sector.into(),
        ]);
        for &(time, n) in &r.electron_number_series {
            series.push(vec![spec.n_per_side.into(), spec.box_length.into(), time.into(), n.into()]);
        }
    }
    out.summary = json!({ "points": t.rows.len(), "t_max": args.t_max, "steps": args.steps });
    Ok(out.table("data", t).table("series", series))
}

fn self_test(spec: &LatticeSpec, seed: u64) -> CliResult<Outcome> {
    let space = build_space(spec)?;
    let checks = selftest::run(&space, seed)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    let mut out = Outcome::new("selftest", vec![*spec]).table("checks", selftest::to_table(&checks));
    out.summary = json!({ "checks": checks.len(), "passed": checks.len() - failed.len(), "failed": failed });
    if !failed.is_empty() {
        out.failure = Some(format!("failed checks: {}", failed.join(", ")));
    }
    Ok(out)
}

fn state_tag(state: &str) -> &str {
    if state.ends_with(".bin") {
        "file"
    } else {
        state
    }
}

/// A named state, or a `.bin` file written by `sea`.
pub fn resolve_state(space: &FockSpace, name: &str) -> CliResult<StateVector> {
    if !name.ends_with(".bin") {
        return Ok(experiments::named_state(space, name)?);
    }
    let bytes = std::fs::read(name).map_err(|e| CliError::Validation(format!("--state {name}: {e}")))?;
    let (header, psi) = formats::read_state_binary(bytes.as_slice())?;
    if header != StateHeader::for_space(space) {
        return Err(CliError::Validation(format!("state file {name} was written for a different lattice")));
    }
    Ok(psi)
}
