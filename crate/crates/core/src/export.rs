//! CSV writers for solutions, error profiles and convergence tables.
//!
//! Floats are printed with 17 significant digits, so written values
//! round-trip exactly and repeated runs produce byte-identical files.

use crate::analysis::{ConvergenceTable, ProbeReport};
use crate::network::{Grid, GridFunction, Network, NodeSite};
use crate::scheme::Solution;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// 17 significant digits: exact round-trip for 64-bit floats.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn node_label(net: &Network, grid: &Grid, node: usize) -> (String, f64) {
    match grid.site(node) {
        NodeSite::Vertex(v) => (format!("vertex:{}", net.vertices()[v].id), 0.0),
        NodeSite::Interior { arc, index } => {
            (net.arcs()[arc].id.clone(), grid.arc_param(net, arc, index))
        }
    }
}

fn coord_header(dim: usize) -> String {
    (1..=dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
}

fn write_coords(out: &mut impl Write, coords: &[f64]) -> io::Result<()> {
    for c in coords {
        write!(out, ",{}", fmt_float(*c))?;
    }
    Ok(())
}

/// One row per node per time level: `arc_id,s,x1..xN,t,value`. Vertices
/// appear once per level with `arc_id = vertex:<id>`.
pub fn write_solution_csv(
    path: &Path,
    net: &Network,
    grid: &Grid,
    solution: &Solution,
) -> io::Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "arc_id,s,{},t,value", coord_header(net.dim))?;
    for (m, slice) in solution.slices.iter().enumerate() {
        let t = grid.time(m);
        for node in 0..grid.node_count() {
            let (label, s) = node_label(net, grid, node);
            write!(out, "{label},{}", fmt_float(s))?;
            write_coords(&mut out, grid.node_coords(node))?;
            writeln!(out, ",{},{}", fmt_float(t), fmt_float(slice[node]))?;
        }
    }
    out.flush()
}

/// Final-time per-node absolute errors: `arc_id,s,x1..xN,abs_error`.
pub fn write_error_profile_csv(
    path: &Path,
    net: &Network,
    grid: &Grid,
    errors: &GridFunction,
) -> io::Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "arc_id,s,{},abs_error", coord_header(net.dim))?;
    for node in 0..grid.node_count() {
        let (label, s) = node_label(net, grid, node);
        write!(out, "{label},{}", fmt_float(s))?;
        write_coords(&mut out, grid.node_coords(node))?;
        writeln!(out, ",{}", fmt_float(errors[node]))?;
    }
    out.flush()
}

/// Long-format convergence table:
/// `dx,dt_rule,dt_eff,E_inf,E_1,order_inf,order_1` with empty order cells on
/// the first row of each rule.
pub fn write_convergence_csv(path: &Path, table: &ConvergenceTable) -> io::Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "dx,dt_rule,dt_eff,E_inf,E_1,order_inf,order_1")?;
    for row in &table.rows {
        let fmt_order = |o: Option<f64>| o.map(fmt_float).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_float(row.dx),
            row.rule,
            fmt_float(row.dt_eff),
            fmt_float(row.e_inf),
            fmt_float(row.e_1),
            fmt_order(row.order_inf),
            fmt_order(row.order_1),
        )?;
    }
    out.flush()
}

/// Per-node consistency defects: `arc_id,s,x1..xN,defect`, vertices last.
pub fn write_probe_csv(
    path: &Path,
    net: &Network,
    grid: &Grid,
    report: &ProbeReport,
) -> io::Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "arc_id,s,{},defect", coord_header(net.dim))?;
    for d in &report.interior {
        write!(out, "{},{}", net.arcs()[d.arc].id, fmt_float(d.s))?;
        write_coords(&mut out, grid.node_coords(d.node))?;
        writeln!(out, ",{}", fmt_float(d.defect))?;
    }
    for d in &report.vertices {
        write!(out, "vertex:{},{}", net.vertices()[d.vertex].id, fmt_float(0.0))?;
        write_coords(&mut out, &net.vertices()[d.vertex].coords)?;
        writeln!(out, ",{}", fmt_float(d.defect))?;
    }
    out.flush()
}
