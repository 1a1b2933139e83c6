//! Path serialization.
//!
//! # Binary layout
//!
//! All numbers are little-endian.
//!
//! | offset | type      | content                         |
//! |--------|-----------|---------------------------------|
//! | 0      | `[u8; 4]` | magic `ASDP`                    |
//! | 4      | `u32`     | format version (1)              |
//! | 8      | `u32`     | spatial dimension `d`           |
//! | 12     | `u32`     | points per axis `n`             |
//! | 16     | `u32`     | number of nodes `N + 1`         |
//! | 20     | `f64`     | horizon `T`                     |
//! | 28     | `f64`     | viscosity `ν`                   |
//! | 36     | `f64`…    | coefficients                    |
//!
//! Coefficients are stored node by node, then component by component, each
//! component as `n^d` `(re, im)` pairs in FFT index order (axis 0 slowest).
//!
//! # CSV layout
//!
//! One row per node, retained wavevector and component:
//! `node,k1,k2[,k3],component,re,im`, with integer wavenumbers in
//! `−kmax..=kmax`. Modes not listed are zero.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{SpectralField, TorusGrid};
use crate::functional::Path;

pub const MAGIC: [u8; 4] = *b"ASDP";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Writes `path` in the binary layout.
pub fn write_binary(path: &Path, w: impl Write) -> Result<()> {
    write_binary_fields(path.nodes(), path.horizon(), w)
}

/// Writes a sequence of fields on one grid in the binary layout. A single
/// steady field is stored with horizon 0.
pub fn write_binary_fields(fields: &[SpectralField], horizon: f64, mut w: impl Write) -> Result<()> {
    let g = fields.first().ok_or_else(|| bad("no fields to write"))?.grid();
    for f in fields {
        f.check_grid(&fields[0])?;
    }
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(g.dim() as u32)?;
    w.write_u32::<LittleEndian>(g.n() as u32)?;
    w.write_u32::<LittleEndian>(fields.len() as u32)?;
    w.write_f64::<LittleEndian>(horizon)?;
    w.write_f64::<LittleEndian>(g.viscosity())?;
    for node in fields {
        for &v in node.as_real() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a path written by [`write_binary`], building its grid from the header.
pub fn read_binary(r: impl Read) -> Result<Path> {
    let (fields, horizon) = read_binary_fields(r)?;
    Path::new(fields, horizon)
}

/// Reads the fields and horizon of any file in the binary layout.
pub fn read_binary_fields(mut r: impl Read) -> Result<(Vec<SpectralField>, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(bad("not a path file (bad magic)"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(bad(format!("unsupported path format version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let horizon = r.read_f64::<LittleEndian>()?;
    let nu = r.read_f64::<LittleEndian>()?;
    let grid = TorusGrid::new(dim, n, nu)?;
    let mut nodes = Vec::with_capacity(count);
    let mut buf = vec![0.0; 2 * grid.len()];
    for _ in 0..count {
        r.read_f64_into::<LittleEndian>(&mut buf)?;
        nodes.push(SpectralField::from_real(&grid, &buf)?);
    }
    Ok((nodes, horizon))
}

fn signed(k: f64) -> i64 {
    k.round() as i64
}

/// Writes the retained modes of `path` as CSV.
pub fn write_csv(path: &Path, w: impl Write) -> Result<()> {
    write_csv_fields(path.nodes(), w)
}

/// Writes the retained modes of a sequence of fields as CSV.
pub fn write_csv_fields(fields: &[SpectralField], mut w: impl Write) -> Result<()> {
    let g = fields.first().ok_or_else(|| bad("no fields to write"))?.grid();
    let d = g.dim();
    let pts = g.points();
    let axes = ["k1", "k2", "k3"];
    writeln!(w, "node,{},component,re,im", axes[..d].join(","))?;
    for (i, node) in fields.iter().enumerate() {
        node.check_grid(&fields[0])?;
        let c = node.coeffs();
        for idx in (0..pts).filter(|&idx| g.is_retained(idx)) {
            let k = g.wavevector(idx);
            let ks: Vec<String> = k[..d].iter().map(|&v| signed(v).to_string()).collect();
            for comp in 0..d {
                let z = c[comp * pts + idx];
                writeln!(w, "{i},{},{comp},{:e},{:e}", ks.join(","), z.re, z.im)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV path for a known grid and horizon. Rows may appear in any
/// order; each node is projected after reading.
pub fn read_csv(grid: &Arc<TorusGrid>, horizon: f64, r: impl BufRead) -> Result<Path> {
    let d = grid.dim();
    let pts = grid.points();
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty CSV"))??;
    let axes = ["k1", "k2", "k3"];
    let expect = format!("node,{},component,re,im", axes[..d].join(","));
    if header.trim() != expect {
        return Err(bad(format!("unexpected CSV header {header:?}, want {expect:?}")));
    }
    let mut nodes: Vec<Vec<Complex64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| bad(format!("CSV line {}: {msg}", lineno + 2));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != d + 4 {
            return Err(at(format!("expected {} columns, got {}", d + 4, cols.len())));
        }
        let int = |s: &str| s.parse::<i64>().map_err(|e| at(format!("{s:?}: {e}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| at(format!("{s:?}: {e}")));
        let node = usize::try_from(int(cols[0])?).map_err(|_| at("negative node".into()))?;
        let k: Vec<i64> = cols[1..=d].iter().map(|s| int(s)).collect::<Result<_>>()?;
        let comp = int(cols[d + 1])?;
        if comp < 0 || comp as usize >= d {
            return Err(at(format!("component {comp} out of range")));
        }
        if k.iter().any(|v| v.abs() > grid.kmax()) {
            return Err(at(format!("wavevector {k:?} outside the retained band")));
        }
        let z = Complex64::new(float(cols[d + 2])?, float(cols[d + 3])?);
        if nodes.len() <= node {
            nodes.resize(node + 1, vec![Complex64::new(0.0, 0.0); grid.len()]);
        }
        nodes[node][comp as usize * pts + grid.index_of(&k)] = z;
    }
    let fields = nodes
        .into_iter()
        .map(|c| {
            let mut f = SpectralField::from_coeffs(grid, c)?;
            f.project();
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Path::new(fields, horizon)
}
