//! CSV and legacy-VTK interchange.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a field
//! written here and read back with [`read_table`] is bit-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{FolError, Result};
use crate::mesh::Mesh;
use crate::optim::IterRecord;
use crate::training::{EvaluationReport, History};

/// A numeric CSV table: column names and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(FolError::dims("table row", self.headers.len(), row.len()));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Column by header name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_f64(v: f64) -> String {
    // integers print without a fraction; ids stay readable
    format!("{v}")
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| FolError::InvalidArgument(format!("{}: not a number: {s:?}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != headers.len() {
            return Err(FolError::dims("csv row", headers.len(), row.len()));
        }
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

fn check_len(context: &'static str, n: usize, v: usize) -> Result<()> {
    if v != n {
        return Err(FolError::dims(context, n, v));
    }
    Ok(())
}

/// `node_id,x,y`.
pub fn mesh_table(mesh: &Mesh) -> Table {
    let mut t = Table::new(&["node_id", "x", "y"]);
    for (i, p) in mesh.coords().iter().enumerate() {
        t.rows.push(vec![i as f64, p[0], p[1]]);
    }
    t
}

/// `node_id,x,y,T,qx,qy,k`.
pub fn thermal_table(mesh: &Mesh, t: &[f64], q: &[[f64; 2]], k: &[f64]) -> Result<Table> {
    let n = mesh.n_nodes();
    check_len("temperature", n, t.len())?;
    check_len("flux", n, q.len())?;
    check_len("conductivity", n, k.len())?;
    let mut tab = Table::new(&["node_id", "x", "y", "T", "qx", "qy", "k"]);
    for (i, p) in mesh.coords().iter().enumerate() {
        tab.rows.push(vec![i as f64, p[0], p[1], t[i], q[i][0], q[i][1], k[i]]);
    }
    Ok(tab)
}

/// `node_id,x,y,ux,uy,sxx,syy,sxy`; `u` is interleaved `(ux, uy)` per node.
pub fn elastic_table(mesh: &Mesh, u: &[f64], stress: &[[f64; 3]]) -> Result<Table> {
    let n = mesh.n_nodes();
    check_len("displacement", 2 * n, u.len())?;
    check_len("stress", n, stress.len())?;
    let mut tab = Table::new(&["node_id", "x", "y", "ux", "uy", "sxx", "syy", "sxy"]);
    for (i, p) in mesh.coords().iter().enumerate() {
        let s = stress[i];
        tab.rows.push(vec![i as f64, p[0], p[1], u[2 * i], u[2 * i + 1], s[0], s[1], s[2]]);
    }
    Ok(tab)
}

/// `epoch,L_total,L_ph,L_bc,L_se`.
pub fn history_table(h: &History) -> Table {
    let mut t = Table::new(&["epoch", "L_total", "L_ph", "L_bc", "L_se"]);
    for r in &h.records {
        let l = r.terms;
        t.rows.push(vec![r.epoch as f64, l.total, l.ph, l.bc, l.se]);
    }
    t
}

/// `sample_id,err_T,err_qx,err_qy`.
pub fn evaluation_table(rep: &EvaluationReport) -> Table {
    let mut t = Table::new(&["sample_id", "err_T", "err_qx", "err_qy"]);
    for r in &rep.rows {
        t.rows.push(vec![r.sample_id as f64, r.err_t, r.err_qx, r.err_qy]);
    }
    t
}

/// `c_index,dJ_dc_adjoint,dJ_dc_fol,rel_err`; `rel_err` is per component,
/// relative to the largest adjoint component.
pub fn sensitivity_table(reference: &[f64], other: &[f64]) -> Result<Table> {
    check_len("sensitivity", reference.len(), other.len())?;
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut t = Table::new(&["c_index", "dJ_dc_adjoint", "dJ_dc_fol", "rel_err"]);
    for (i, (a, b)) in reference.iter().zip(other).enumerate() {
        let rel = if scale > 0.0 { (a - b).abs() / scale } else { (a - b).abs() };
        t.rows.push(vec![i as f64, *a, *b, rel]);
    }
    Ok(t)
}

/// `iter,J,h,step_norm,phase_time_ms,mode`. The optimizer minimizes `-J`,
/// so `J` is the negated objective. `mode` is free text, so this one is
/// written directly rather than through [`Table`].
pub fn write_optimization_history(path: &Path, history: &[IterRecord], mode: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "J", "h", "step_norm", "phase_time_ms", "mode"])?;
    for r in history {
        w.write_record([
            r.iter.to_string(),
            format_f64(-r.objective),
            format_f64(r.constraint),
            format_f64(r.step_norm),
            format_f64(r.phase_time_ms),
            mode.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sample corpus: `sample_id,c0,c1,...`.
pub fn corpus_table(samples: &[Vec<f64>]) -> Result<Table> {
    let m = samples.first().map_or(0, Vec::len);
    let mut headers = vec!["sample_id".to_string()];
    headers.extend((0..m).map(|j| format!("c{j}")));
    let mut t = Table { headers, rows: Vec::new() };
    for (i, s) in samples.iter().enumerate() {
        let mut row = Vec::with_capacity(m + 1);
        row.push(i as f64);
        row.extend_from_slice(s);
        t.push(row)?;
    }
    Ok(t)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Vec<f64>>> {
    let t = read_table(path)?;
    if t.headers.first().map(String::as_str) != Some("sample_id") {
        return Err(FolError::InvalidArgument(format!("{}: not a corpus file", path.display())));
    }
    Ok(t.rows.into_iter().map(|r| r[1..].to_vec()).collect())
}

/// Point data attached to a VTK export.
#[derive(Debug, Clone, PartialEq)]
pub enum PointData {
    Scalar(String, Vec<f64>),
    Vector(String, Vec<[f64; 2]>),
}

impl PointData {
    fn name(&self) -> &str {
        match self {
            PointData::Scalar(n, _) | PointData::Vector(n, _) => n,
        }
    }

    fn len(&self) -> usize {
        match self {
            PointData::Scalar(_, v) => v.len(),
            PointData::Vector(_, v) => v.len(),
        }
    }
}

/// Legacy ASCII VTK structured grid.
pub fn write_vtk(path: &Path, mesh: &Mesh, title: &str, data: &[PointData]) -> Result<()> {
    let n = mesh.n_nodes();
    for d in data {
        if d.len() != n {
            return Err(FolError::dims("vtk point data", n, d.len()));
        }
        if d.name().contains(char::is_whitespace) || d.name().is_empty() {
            return Err(FolError::InvalidArgument(format!("bad vtk field name {:?}", d.name())));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or("fol"))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_GRID")?;
    writeln!(w, "DIMENSIONS {} {} 1", mesh.nx(), mesh.ny())?;
    writeln!(w, "POINTS {n} double")?;
    for p in mesh.coords() {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    if !data.is_empty() {
        writeln!(w, "POINT_DATA {n}")?;
    }
    for d in data {
        match d {
            PointData::Scalar(name, v) => {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for x in v {
                    writeln!(w, "{x}")?;
                }
            }
            PointData::Vector(name, v) => {
                writeln!(w, "VECTORS {name} double")?;
                for x in v {
                    writeln!(w, "{} {} 0", x[0], x[1])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the point data written by [`write_vtk`].
pub fn read_vtk_point_data(path: &Path) -> Result<Vec<PointData>> {
    let bad = |msg: &str| FolError::InvalidArgument(format!("{}: {msg}", path.display()));
    let mut lines = BufReader::new(File::open(path)?).lines();
    let mut n_points = None;
    let mut out = Vec::new();
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
    while let Some(line) = lines.next() {
        let line = line?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.first().copied() {
            Some("POINTS") => {
                let n: usize = tok.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad POINTS"))?;
                n_points = Some(n);
                for _ in 0..n {
                    lines.next().ok_or_else(|| bad("truncated points"))??;
                }
            }
            Some("SCALARS") => {
                let n = n_points.ok_or_else(|| bad("data before points"))?;
                let name = tok.get(1).ok_or_else(|| bad("unnamed scalars"))?.to_string();
                lines.next().ok_or_else(|| bad("missing lookup table"))??;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(num(lines.next().ok_or_else(|| bad("truncated scalars"))??.trim())?);
                }
                out.push(PointData::Scalar(name, v));
            }
            Some("VECTORS") => {
                let n = n_points.ok_or_else(|| bad("data before points"))?;
                let name = tok.get(1).ok_or_else(|| bad("unnamed vectors"))?.to_string();
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    let l = lines.next().ok_or_else(|| bad("truncated vectors"))??;
                    let c: Vec<&str> = l.split_whitespace().collect();
                    if c.len() < 2 {
                        return Err(bad("short vector row"));
                    }
                    v.push([num(c[0])?, num(c[1])?]);
                }
                out.push(PointData::Vector(name, v));
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Pretty JSON for manifests and reports.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}
