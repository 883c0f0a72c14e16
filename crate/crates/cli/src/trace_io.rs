//! Trace CSV files.
//!
//! BCD columns: `k,psi,step,step_x,step_y,dist` then `x_0..x_{n-1},y_0..y_{m-1}`.
//! ADMM columns: `k,lagrangian,primal_residual,dual_step,inner_1,inner_2` then
//! `x1_*,x2_*,y_*`. When the two primal blocks hold more than
//! [`MAX_INLINE_ENTRIES`] entries the vector columns are replaced by block
//! norms and the iterates go to an optional `<trace>.full.csv` sidecar
//! (`k` plus every vector column). Reals are written with 17 significant
//! digits so files round-trip exactly.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use blockopt_core::admm::{AdmmTrace, KktPair};
use blockopt_core::bcd::BcdTrace;
use blockopt_core::{BlockPair, Vector};

use crate::error::{CliError, CliResult};

pub const MAX_INLINE_ENTRIES: usize = 64;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sidecar_path(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".full.csv");
    PathBuf::from(s)
}

fn names(prefix: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    (0..dim).map(move |i| format!("{prefix}_{i}"))
}

fn push_vec(row: &mut Vec<String>, v: &Vector) {
    row.extend(v.iter().map(|&e| fmt_f64(e)));
}

fn to_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn bcd_inline(trace: &BcdTrace) -> bool {
    let (n, m) = trace.records[0].z.dims();
    n + m <= MAX_INLINE_ENTRIES
}

pub fn bcd_csv(trace: &BcdTrace) -> Vec<u8> {
    let (n, m) = trace.records[0].z.dims();
    let inline = bcd_inline(trace);
    let mut header: Vec<String> = ["k", "psi", "step", "step_x", "step_y", "dist"].map(String::from).to_vec();
    if inline {
        header.extend(names("x", n).chain(names("y", m)));
    } else {
        header.extend(["norm_x", "norm_y"].map(String::from));
    }
    let rows = trace.records.iter().map(|r| {
        let mut row = vec![
            r.k.to_string(),
            fmt_f64(r.psi),
            fmt_f64(r.step),
            fmt_f64(r.step_x),
            fmt_f64(r.step_y),
            r.dist.map(fmt_f64).unwrap_or_default(),
        ];
        if inline {
            push_vec(&mut row, &r.z.x);
            push_vec(&mut row, &r.z.y);
        } else {
            row.push(fmt_f64(r.z.x.norm()));
            row.push(fmt_f64(r.z.y.norm()));
        }
        row
    });
    to_bytes(header, rows)
}

pub fn bcd_full_dump(trace: &BcdTrace) -> Vec<u8> {
    let (n, m) = trace.records[0].z.dims();
    let mut header = vec!["k".to_string()];
    header.extend(names("x", n).chain(names("y", m)));
    let rows = trace.records.iter().map(|r| {
        let mut row = vec![r.k.to_string()];
        push_vec(&mut row, &r.z.x);
        push_vec(&mut row, &r.z.y);
        row
    });
    to_bytes(header, rows)
}

pub fn admm_inline(trace: &AdmmTrace) -> bool {
    let r = &trace.records[0];
    r.x1.dim() + r.x2.dim() <= MAX_INLINE_ENTRIES
}

fn admm_vector_header(trace: &AdmmTrace) -> Vec<String> {
    let r = &trace.records[0];
    names("x1", r.x1.dim())
        .chain(names("x2", r.x2.dim()))
        .chain(names("y", r.y.dim()))
        .collect()
}

pub fn admm_csv(trace: &AdmmTrace) -> Vec<u8> {
    let inline = admm_inline(trace);
    let mut header: Vec<String> =
        ["k", "lagrangian", "primal_residual", "dual_step", "inner_1", "inner_2"].map(String::from).to_vec();
    if inline {
        header.extend(admm_vector_header(trace));
    } else {
        header.extend(["norm_x1", "norm_x2", "norm_y"].map(String::from));
    }
    let rows = trace.records.iter().map(|r| {
        let mut row = vec![
            r.k.to_string(),
            fmt_f64(r.lagrangian),
            fmt_f64(r.primal_residual),
            fmt_f64(r.dual_step),
            r.inner_iters.0.to_string(),
            r.inner_iters.1.to_string(),
        ];
        if inline {
            push_vec(&mut row, &r.x1);
            push_vec(&mut row, &r.x2);
            push_vec(&mut row, &r.y);
        } else {
            row.extend([r.x1.norm(), r.x2.norm(), r.y.norm()].map(fmt_f64));
        }
        row
    });
    to_bytes(header, rows)
}

pub fn admm_full_dump(trace: &AdmmTrace) -> Vec<u8> {
    let mut header = vec!["k".to_string()];
    header.extend(admm_vector_header(trace));
    let rows = trace.records.iter().map(|r| {
        let mut row = vec![r.k.to_string()];
        push_vec(&mut row, &r.x1);
        push_vec(&mut row, &r.x2);
        push_vec(&mut row, &r.y);
        row
    });
    to_bytes(header, rows)
}

/// Writes the trace and, when requested, the full-dump sidecar. Returns the
/// sidecar path if one was written.
pub fn write_trace(path: &Path, csv: &[u8], full: Option<&[u8]>) -> CliResult<Option<PathBuf>> {
    write_file(path, csv)?;
    match full {
        Some(bytes) => {
            let side = sidecar_path(path);
            write_file(&side, bytes)?;
            Ok(Some(side))
        }
        None => Ok(None),
    }
}

/// Column-addressed view of a parsed trace file.
struct Table {
    path: String,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Table> {
        let shown = path.display().to_string();
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::input("trace", format!("{shown}: {e}")))?;
        let header = r
            .headers()
            .map_err(|e| CliError::input("trace", format!("{shown}: {e}")))?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::input("trace", format!("{shown}: {e}")))?;
        if rows.is_empty() {
            return Err(CliError::input("trace", format!("{shown}: no rows")));
        }
        Ok(Table {
            path: shown,
            header,
            rows,
        })
    }

    fn count(&self, prefix: &str) -> usize {
        let p = format!("{prefix}_");
        self.header
            .iter()
            .filter(|h| h.strip_prefix(&p).is_some_and(|rest| rest.parse::<usize>().is_ok()))
            .count()
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn vector(&self, row: usize, prefix: &str, dim: usize) -> CliResult<Vector> {
        let mut out = Vec::with_capacity(dim);
        for i in 0..dim {
            let name = format!("{prefix}_{i}");
            let col = self
                .column(&name)
                .ok_or_else(|| CliError::input("trace", format!("{}: missing column {name}", self.path)))?;
            out.push(self.real(row, col)?);
        }
        Vector::new(out).map_err(|e| CliError::input("trace", format!("{} row {row}: {e}", self.path)))
    }

    fn real(&self, row: usize, col: usize) -> CliResult<f64> {
        let cell = self.rows[row].get(col).unwrap_or("");
        cell.trim().parse().map_err(|_| {
            CliError::input(
                "trace",
                format!("{} row {row} column {}: not a number: '{cell}'", self.path, self.header[col]),
            )
        })
    }

    fn integer(&self, row: usize, name: &str) -> CliResult<usize> {
        let Some(col) = self.column(name) else { return Ok(0) };
        let cell = self.rows[row].get(col).unwrap_or("");
        cell.trim().parse().map_err(|_| {
            CliError::input("trace", format!("{} row {row} column {name}: not an integer: '{cell}'", self.path))
        })
    }

    fn check_dims(&self, expected: &[(&str, usize)]) -> CliResult<()> {
        for &(prefix, dim) in expected {
            let found = self.count(prefix);
            if found != dim {
                return Err(CliError::input(
                    "trace",
                    format!(
                        "{}: {found} {prefix} columns but the problem has dimension {dim}",
                        self.path
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Table holding the iterates: the trace itself, or its sidecar when the
/// trace only stores norms.
fn iterate_table(path: &Path, probe: &str) -> CliResult<Table> {
    let main = Table::read(path)?;
    if main.count(probe) > 0 {
        return Ok(main);
    }
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(CliError::input(
            "trace",
            format!(
                "{} stores only norms and no full dump exists at {}; rerun with --full-dump",
                path.display(),
                side.display()
            ),
        ));
    }
    let t = Table::read(&side)?;
    if t.rows.len() != main.rows.len() {
        return Err(CliError::input(
            "trace",
            format!("{} has {} rows but {} has {}", side.display(), t.rows.len(), path.display(), main.rows.len()),
        ));
    }
    Ok(t)
}

pub fn read_bcd_points(path: &Path, n: usize, m: usize) -> CliResult<Vec<BlockPair>> {
    let t = iterate_table(path, "x")?;
    t.check_dims(&[("x", n), ("y", m)])?;
    (0..t.rows.len())
        .map(|r| Ok(BlockPair::new(t.vector(r, "x", n)?, t.vector(r, "y", m)?)))
        .collect()
}

pub fn read_admm_points(path: &Path, dims: (usize, usize, usize)) -> CliResult<Vec<(KktPair, (usize, usize))>> {
    let (n, m, q) = dims;
    let main = Table::read(path)?;
    let t = iterate_table(path, "x1")?;
    t.check_dims(&[("x1", n), ("x2", m), ("y", q)])?;
    (0..t.rows.len())
        .map(|r| {
            let pair = KktPair {
                x1: t.vector(r, "x1", n)?,
                x2: t.vector(r, "x2", m)?,
                y: t.vector(r, "y", q)?,
            };
            Ok((pair, (main.integer(r, "inner_1")?, main.integer(r, "inner_2")?)))
        })
        .collect()
}
