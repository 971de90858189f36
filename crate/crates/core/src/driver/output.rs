//! Legacy-VTK and CSV output.
//!
//! Snapshots are ASCII STRUCTURED_POINTS files holding the named point-data
//! arrays over the full node grid (the periodic seam column is repeated so
//! the written extent spans the whole unit square).

use crate::error::ConfigError;
use crate::mesh::GridSpec;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

/// One named scalar array over the unique grid (row-major, i fastest).
pub struct NamedArray<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Render a STRUCTURED_POINTS snapshot. `arrays` hold unique columns; the
/// seam column (a copy of column 0) is appended on write.
pub fn render_vtk(grid: &GridSpec, title: &str, arrays: &[NamedArray<'_>]) -> String {
    let nxu = grid.unique_nx();
    let nx = grid.nx();
    let ny = grid.ny();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{title}");
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {nx} {ny} 1");
    out.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(out, "SPACING {:.16e} {:.16e} 1", grid.dx(), grid.dy());
    let _ = writeln!(out, "POINT_DATA {}", nx * ny);
    for arr in arrays {
        debug_assert_eq!(arr.values.len(), nxu * ny);
        let _ = writeln!(out, "SCALARS {} double", arr.name);
        out.push_str("LOOKUP_TABLE default\n");
        for j in 0..ny {
            for i in 0..nx {
                let v = arr.values[j * nxu + i % nxu];
                let _ = writeln!(out, "{v:.16e}");
            }
        }
    }
    out
}

pub fn write_vtk(
    path: &Path,
    grid: &GridSpec,
    title: &str,
    arrays: &[NamedArray<'_>],
) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(render_vtk(grid, title, arrays).as_bytes())?;
    Ok(())
}

/// Minimal reader for the files written above; used by round-trip checks and
/// downstream tooling. Returns (nx, ny, named arrays over the full grid).
pub fn read_vtk(text: &str) -> Result<(usize, usize, Vec<(String, Vec<f64>)>), ConfigError> {
    let mut lines = text.lines().enumerate().peekable();
    let mut nx = 0usize;
    let mut ny = 0usize;
    let mut arrays = Vec::new();
    let parse_err = |line: usize, text: &str, reason: &str| ConfigError::Parse {
        line,
        text: text.to_string(),
        reason: reason.to_string(),
    };
    while let Some((idx, line)) = lines.next() {
        if let Some(rest) = line.strip_prefix("DIMENSIONS") {
            let dims: Vec<&str> = rest.split_whitespace().collect();
            if dims.len() != 3 {
                return Err(parse_err(idx + 1, line, "expected three extents"));
            }
            nx = dims[0].parse().map_err(|_| parse_err(idx + 1, line, "bad nx"))?;
            ny = dims[1].parse().map_err(|_| parse_err(idx + 1, line, "bad ny"))?;
        } else if let Some(rest) = line.strip_prefix("SCALARS") {
            let name = rest
                .split_whitespace()
                .next()
                .ok_or_else(|| parse_err(idx + 1, line, "missing array name"))?
                .to_string();
            // LOOKUP_TABLE line
            let _ = lines.next();
            let n = nx * ny;
            let mut vals = Vec::with_capacity(n);
            while vals.len() < n {
                let (vidx, vline) = lines
                    .next()
                    .ok_or_else(|| parse_err(idx + 1, line, "truncated array"))?;
                for tok in vline.split_whitespace() {
                    vals.push(
                        tok.parse::<f64>()
                            .map_err(|_| parse_err(vidx + 1, vline, "bad value"))?,
                    );
                }
            }
            arrays.push((name, vals));
        }
    }
    if nx == 0 || ny == 0 {
        return Err(parse_err(0, "", "missing DIMENSIONS"));
    }
    Ok((nx, ny, arrays))
}

/// Fixed diagnostics schema; one row per step.
pub const DIAGNOSTICS_HEADER: &str = "step,time,mass_phi,free_energy,max_div,phi_min,phi_max,nutrient_total,components,wall_ms,ch_iters,nut_iters,mom_iters,prs_iters";

#[derive(Debug, Clone)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub mass_phi: f64,
    pub free_energy: f64,
    pub max_div: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub nutrient_total: f64,
    pub components: usize,
    pub wall_ms: f64,
    pub ch_iters: usize,
    pub nut_iters: usize,
    pub mom_iters: usize,
    pub prs_iters: usize,
}

impl DiagnosticsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.3},{},{},{},{}",
            self.step,
            self.time,
            self.mass_phi,
            self.free_energy,
            self.max_div,
            self.phi_min,
            self.phi_max,
            self.nutrient_total,
            self.components,
            self.wall_ms,
            self.ch_iters,
            self.nut_iters,
            self.mom_iters,
            self.prs_iters
        )
    }
}

pub const SCALING_HEADER: &str = "ranks,grid,steps,wall_ms_per_step,speedup,efficiency";
