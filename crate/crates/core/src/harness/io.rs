use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunConfig};
use crate::diagnostics::{DiagnosticsRecord, WeightedParams};
use crate::grid::{Field, Grid};
use crate::model::MotilityBounds;
use crate::stepper::{InvariantCheck, SimState};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"MLAB";
pub const SNAPSHOT_VERSION: u32 = 1;

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// `lp_u_<p>` with `p` printed minimally (`2`, `2.5`).
pub fn lp_column(p: f64) -> String {
    format!("lp_u_{p}")
}

pub fn csv_header(p_list: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["t", "mass_u", "sup_v", "dual_norm_sq", "l2_u_sq", "grad_v_sq", "lap_v_sq", "grad_v_4", "v_t_sq"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(p_list.iter().map(|&p| lp_column(p)));
    h.extend(["entropy_u", "fisher_u", "grad_u_43", "weighted", "stab_u", "stab_v"].iter().map(|s| s.to_string()));
    h
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord], p_list: &[f64]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(csv_header(p_list)).map_err(|e| io_err(path, e))?;
    for r in records {
        let mut row = vec![
            num(r.t),
            num(r.mass_u),
            num(r.sup_v),
            num(r.dual_norm_sq),
            num(r.l2_u_sq),
            num(r.grad_v_sq),
            num(r.lap_v_sq),
            num(r.grad_v_4),
            opt(r.v_t_sq),
        ];
        row.extend(r.lp_u.iter().map(|&x| num(x)));
        row.extend([num(r.entropy_u), num(r.fisher_u), num(r.grad_u_43), opt(r.weighted), num(r.stab_u), num(r.stab_v)]);
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Columns of a diagnostics CSV by name; empty cells read as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl DiagnosticsTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// `(t, value)` pairs where the value is present.
    pub fn series(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let t = self.column("t")?;
        let v = self.column(name)?;
        Some(t.into_iter().zip(v).filter_map(|(t, v)| Some((t?, v?))).collect())
    }
}

pub fn read_diagnostics_csv(path: &Path) -> Result<DiagnosticsTable, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers: Vec<String> = r.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect();
    if headers.first().map(String::as_str) != Some("t") {
        return Err(io_err(path, "not a diagnostics table (first column must be t)"));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let row = rec
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|e| io_err(path, format!("row {}: {cell:?}: {e}", line + 1)))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(DiagnosticsTable { headers, rows })
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("snap_{step:08}.bin"))
}

/// Header: magic, version (u32), dim (u32), cells per axis (u32), extents
/// per axis (f64), t (f64), epsilon (f64); then `u` and `v` as f64, all
/// little-endian, row-major with the last axis fastest.
pub fn write_snapshot(path: &Path, state: &SimState) -> Result<(), HarnessError> {
    let g = state.grid();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut bytes = Vec::with_capacity(64 + 16 * g.len());
    bytes.extend_from_slice(SNAPSHOT_MAGIC);
    bytes.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for &n in g.cells() {
        bytes.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &l in g.extents() {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    bytes.extend_from_slice(&state.t.to_le_bytes());
    bytes.extend_from_slice(&state.epsilon.to_le_bytes());
    for x in state.u.values().iter().chain(state.v.values()) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&bytes).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|s| u32::from_le_bytes(s.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|s| f64::from_le_bytes(s.try_into().unwrap()))
    }
}

pub fn read_snapshot(path: &Path) -> Result<SimState, HarnessError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| io_err(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    let truncated = || io_err(path, "truncated snapshot");
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4).ok_or_else(truncated)? != SNAPSHOT_MAGIC {
        return Err(io_err(path, "bad magic"));
    }
    let version = c.u32().ok_or_else(truncated)?;
    if version != SNAPSHOT_VERSION {
        return Err(io_err(path, format!("unsupported snapshot version {version}")));
    }
    let dim = c.u32().ok_or_else(truncated)? as usize;
    if !(1..=3).contains(&dim) {
        return Err(io_err(path, format!("bad dimension {dim}")));
    }
    let cells: Vec<usize> = (0..dim).map(|_| c.u32().map(|n| n as usize)).collect::<Option<_>>().ok_or_else(truncated)?;
    let extents: Vec<f64> = (0..dim).map(|_| c.f64()).collect::<Option<_>>().ok_or_else(truncated)?;
    let t = c.f64().ok_or_else(truncated)?;
    let epsilon = c.f64().ok_or_else(truncated)?;
    let grid = Grid::new(dim, &extents, &cells).map_err(|e| io_err(path, e))?;
    let mut fields = Vec::with_capacity(2);
    for _ in 0..2 {
        let raw = c.take(8 * grid.len()).ok_or_else(truncated)?;
        let values = raw.chunks_exact(8).map(|s| f64::from_le_bytes(s.try_into().unwrap())).collect();
        fields.push(Field::new(&grid, values).map_err(|e| io_err(path, e))?);
    }
    if c.pos != bytes.len() {
        return Err(io_err(path, "trailing bytes after snapshot"));
    }
    let v = fields.pop().unwrap();
    let u = fields.pop().unwrap();
    Ok(SimState { u, v, t, epsilon })
}

/// Snapshot files in `dir/snapshots`, ordered by step.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let sdir = dir.join(SNAPSHOT_DIR);
    if !sdir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&sdir)
        .map_err(|e| io_err(&sdir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("snap_") && n.ends_with(".bin"))
        })
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    InvariantViolation,
    SolverFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Passed => 0,
            RunStatus::SolverFailure => 3,
            RunStatus::InvariantViolation => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub dt: f64,
    pub steps_planned: usize,
    pub steps_completed: usize,
    pub solver: String,
    pub motility_bounds: MotilityBounds,
    pub weighted_params: Option<WeightedParams>,
    pub final_record: Option<DiagnosticsRecord>,
    pub checks: Vec<InvariantCheck>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub snapshots: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, HarnessError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_order() {
        let h = csv_header(&[2.0, 2.5]);
        assert_eq!(h[..9], ["t", "mass_u", "sup_v", "dual_norm_sq", "l2_u_sq", "grad_v_sq", "lap_v_sq", "grad_v_4", "v_t_sq"]);
        assert_eq!(h[9..11], ["lp_u_2", "lp_u_2.5"]);
        assert_eq!(h[11..], ["entropy_u", "fisher_u", "grad_u_43", "weighted", "stab_u", "stab_v"]);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn snapshot_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, &[1.0, 2.0], &[3, 4]).unwrap();
        let s = SimState {
            u: Field::from_fn(&g, |x| x[0] + 10.0 * x[1]),
            v: Field::from_fn(&g, |x| x[0] * x[1]),
            t: 0.25,
            epsilon: 0.1,
        };
        let path = dir.path().join("s.bin");
        write_snapshot(&path, &s).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"MLAB");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 2 * 4 + 2 * 8 + 8 + 8 + 2 * 12 * 8);
        // first u value sits right after the header
        let first = f64::from_le_bytes(bytes[52..60].try_into().unwrap());
        assert_eq!(first, s.u.values()[0]);
        assert_eq!(read_snapshot(&path).unwrap(), s);

        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_snapshot(&path).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(read_snapshot(&path).is_err());
    }

    #[test]
    fn csv_round_trip_with_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let rec = DiagnosticsRecord {
            t: 0.0,
            mass_u: 1.0,
            sup_v: 0.5,
            dual_norm_sq: 0.9,
            l2_u_sq: 1.0,
            grad_v_sq: 0.0,
            lap_v_sq: 0.0,
            grad_v_4: 0.0,
            v_t_sq: None,
            lp_u: vec![1.0],
            entropy_u: 0.0,
            fisher_u: 0.0,
            grad_u_43: 0.0,
            weighted: None,
            weighted_out_of_range: false,
            stab_u: 0.0,
            stab_v: 0.5,
        };
        let mut second = rec.clone();
        second.t = 0.1;
        second.v_t_sq = Some(1.0 / 3.0);
        let path = dir.path().join(DIAGNOSTICS_FILE);
        write_diagnostics_csv(&path, &[rec, second], &[2.0]).unwrap();
        let table = read_diagnostics_csv(&path).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.column("v_t_sq").unwrap(), vec![None, Some(1.0 / 3.0)]);
        assert_eq!(table.series("v_t_sq").unwrap(), vec![(0.1, 1.0 / 3.0)]);
        assert_eq!(table.column("weighted").unwrap(), vec![None, None]);
    }
}
