//! On-disk formats. All writers are deterministic: floats use the shortest
//! round-trip representation (exponent form when very small or large) and
//! rows come in a fixed order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use diracsea_core::dynamics::JumpTrajectory;
use diracsea_core::fock::{FockSpace, StateVector};
use diracsea_core::povm::BornTable;
use diracsea_core::{LabeledEigenbasis, LatticeSpec, C64};

use crate::error::{CliError, CliResult};

/// Flat key-value form of a [`LatticeSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRecord {
    pub dim: usize,
    pub n_per_side: usize,
    pub box_length: f64,
    pub mass: f64,
    pub spin_dim: usize,
}

impl From<&LatticeSpec> for SpecRecord {
    fn from(s: &LatticeSpec) -> Self {
        Self { dim: s.dim, n_per_side: s.n_per_side, box_length: s.box_length, mass: s.mass, spin_dim: s.spin_dim }
    }
}

impl SpecRecord {
    pub fn to_spec(self) -> CliResult<LatticeSpec> {
        Ok(LatticeSpec::new(self.dim, self.n_per_side, self.box_length, self.mass, self.spin_dim)?)
    }
}

pub fn spec_to_kv(spec: &LatticeSpec) -> String {
    toml::to_string(&SpecRecord::from(spec)).expect("flat record always serializes")
}

pub fn spec_from_kv(text: &str) -> CliResult<LatticeSpec> {
    let record: SpecRecord = toml::from_str(text).map_err(|e| CliError::Validation(format!("spec file: {e}")))?;
    record.to_spec()
}

/// First 16 hex digits of SHA-256 over the canonical key-value form of every
/// spec, in order.
pub fn spec_hash(specs: &[LatticeSpec]) -> String {
    let mut hasher = Sha256::new();
    for spec in specs {
        hasher.update(spec_to_kv(spec).as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A column-oriented table that renders to CSV or to a JSON array of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:?}"),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, serde_json::Value::Number),
            Cell::Text(s) => s.clone().into(),
            Cell::Bool(b) => (*b).into(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Table {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    pub fn to_csv_string(&self) -> CliResult<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Columns: `index, energy, momentum_index, spin_branch`.
pub fn eigen_table(basis: &LabeledEigenbasis) -> Table {
    let mut t = Table::new(["index", "energy", "momentum_index", "spin_branch"]);
    for i in 0..basis.len() {
        t.push(vec![i.into(), basis.energies[i].into(), basis.momentum_index[i].into(), basis.spin_branch[i].into()]);
    }
    t
}

/// Columns: `config_id, q0 .. q{sites-1}, n_el, n_pos, total_charge, weight`.
/// For the obvious measure `q_x` is positrons minus electrons at `x`.
pub fn born_table(table: &BornTable) -> Table {
    let mut cols = vec!["config_id".to_string()];
    cols.extend((0..table.sites).map(|x| format!("q{x}")));
    cols.extend(["n_el", "n_pos", "total_charge", "weight"].map(String::from));
    let mut t = Table::new(cols);
    for e in &table.entries {
        let mut row: Vec<Cell> = vec![e.config_id.into()];
        row.extend(e.charges().iter().map(|&q| Cell::Int(q as i64)));
        row.extend([e.n_el().into(), e.n_pos().into(), e.total_charge().into(), e.weight.into()]);
        t.push(row);
    }
    t
}

/// Columns: `traj_id, event_index, time, q0 .. q{sites-1}`. Event 0 is the
/// initial configuration at time 0.
pub fn trajectory_table(sites: usize, trajectories: &[JumpTrajectory]) -> Table {
    let mut cols = vec!["traj_id".to_string(), "event_index".to_string(), "time".to_string()];
    cols.extend((0..sites).map(|x| format!("q{x}")));
    let mut t = Table::new(cols);
    for tr in trajectories {
        let events = std::iter::once((0.0, &tr.initial)).chain(tr.events.iter().map(|(s, q)| (*s, q)));
        for (i, (time, q)) in events.enumerate() {
            let mut row: Vec<Cell> = vec![tr.traj_id.into(), i.into(), time.into()];
            row.extend(q.charges.iter().map(|&c| Cell::Int(c as i64)));
            t.push(row);
        }
    }
    t
}

/// Header of the binary state format: four little-endian `u32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateHeader {
    pub dim: u32,
    pub n_per_side: u32,
    pub spin_dim: u32,
    pub mode_order_version: u32,
}

impl StateHeader {
    pub fn for_space(space: &FockSpace) -> Self {
        let spec = &space.sys.spec;
        Self {
            dim: spec.dim as u32,
            n_per_side: spec.n_per_side as u32,
            spin_dim: spec.spin_dim as u32,
            mode_order_version: FockSpace::MODE_ORDER_VERSION,
        }
    }

    pub fn modes(&self) -> usize {
        (self.n_per_side as usize).pow(self.dim) * self.spin_dim as usize
    }
}

/// Header, then `(re, im)` little-endian `f64` pairs in string order.
pub fn write_state_binary<W: Write>(mut out: W, header: StateHeader, psi: &StateVector) -> CliResult<()> {
    for v in [header.dim, header.n_per_side, header.spin_dim, header.mode_order_version] {
        out.write_all(&v.to_le_bytes())?;
    }
    for z in &psi.amplitudes {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_state_binary<R: Read>(mut input: R) -> CliResult<(StateHeader, StateVector)> {
    let mut word = [0u8; 4];
    let mut fields = [0u32; 4];
    for f in &mut fields {
        input.read_exact(&mut word)?;
        *f = u32::from_le_bytes(word);
    }
    let header = StateHeader { dim: fields[0], n_per_side: fields[1], spin_dim: fields[2], mode_order_version: fields[3] };
    if header.mode_order_version != FockSpace::MODE_ORDER_VERSION {
        return Err(CliError::Validation(format!("unsupported mode order version {}", header.mode_order_version)));
    }
    let modes = header.modes();
    if modes > diracsea_core::fock::MAX_MODES {
        return Err(CliError::Validation(format!("state file declares {modes} modes")));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let expected = (1usize << modes) * 16;
    if bytes.len() != expected {
        return Err(CliError::Validation(format!("state payload has {} bytes, expected {expected}", bytes.len())));
    }
    let amplitudes = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    Ok((header, StateVector::new(amplitudes, "file")))
}

/// Columns: `string` (hex, `0x` prefixed), `re`, `im`; nonzero amplitudes only.
pub fn state_hex_table(psi: &StateVector) -> Table {
    let mut t = Table::new(["string", "re", "im"]);
    for (b, z) in psi.amplitudes.iter().enumerate() {
        if z.re != 0.0 || z.im != 0.0 {
            t.push(vec![format!("{b:#x}").into(), z.re.into(), z.im.into()]);
        }
    }
    t
}
