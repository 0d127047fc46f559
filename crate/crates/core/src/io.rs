//! CSV and JSON serialization of profiles, grids, solutions, and run reports.
//!
//! CSV carries full-precision decimals (17 significant digits) so files
//! round-trip bit-exactly and diff cleanly; JSON carries structured reports.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::energy::SolutionPair;
use crate::error::{Error, Result};
use crate::grid::{DomainKind, RadialFunction, RadialGrid};
use crate::minimize::{MinResult, MinimizeOptions};
use crate::rearrange::MeasureProfile;

/// 17 significant digits, scientific; round-trips f64 exactly.
pub fn format_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON header describing a grid: {kind, N, delta, nodes}.
pub fn grid_header(grid: &RadialGrid) -> serde_json::Value {
    json!({
        "kind": grid.kind().name(),
        "N": grid.dimension(),
        "delta": match grid.kind() {
            DomainKind::Annulus { inner_radius, .. } => inner_radius,
            DomainKind::Interval => -1.0,
            DomainKind::Ball { .. } => 0.0,
        },
        "nodes": grid.len(),
    })
}

/// Writes a radial profile as `r,value` rows.
pub fn write_radial_csv(path: &Path, h: &RadialFunction) -> Result<()> {
    let mut out = String::from("r,value\n");
    for (r, v) in h.grid().nodes().iter().zip(h.values()) {
        out.push_str(&format_full(*r));
        out.push(',');
        out.push_str(&format_full(*v));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes a measure profile as `s,value` rows (one row per cell, left edge).
pub fn write_profile_csv(path: &Path, p: &MeasureProfile) -> Result<()> {
    let mut out = String::from("s,value\n");
    for (k, v) in p.values().iter().enumerate() {
        out.push_str(&format_full(p.breakpoints()[k]));
        out.push(',');
        out.push_str(&format_full(*v));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a two-column CSV with a header row into (first, second) columns.
pub fn read_two_column_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |field: Option<&str>| -> Result<f64> {
            field
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("line {} is missing a column", idx + 1),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", idx + 1),
                })
        };
        first.push(parse(parts.next())?);
        second.push(parse(parts.next())?);
    }
    if first.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: "no data rows".into(),
        });
    }
    Ok((first, second))
}

/// Reads a radial profile written by [`write_radial_csv`] onto a freshly
/// built grid of the declared domain; the r column must match the grid nodes.
pub fn read_radial_csv(path: &Path, kind: DomainKind) -> Result<RadialFunction> {
    let (radii, values) = read_two_column_csv(path)?;
    let grid = crate::grid::make_grid(kind, radii.len())?;
    for (a, b) in radii.iter().zip(grid.nodes()) {
        if (a - b).abs() > 1e-9 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("r column does not match a uniform grid: {a} vs {b}"),
            });
        }
    }
    RadialFunction::new(grid, values)
}

/// Writes a solution as `r,f,g,u,v` rows.
pub fn write_solution_csv(
    path: &Path,
    f: &RadialFunction,
    g: &RadialFunction,
    sol: &SolutionPair,
) -> Result<()> {
    let mut out = String::from("r,f,g,u,v\n");
    for (i, r) in f.grid().nodes().iter().enumerate() {
        for (j, col) in [
            *r,
            f.values()[i],
            g.values()[i],
            sol.u.values()[i],
            sol.v.values()[i],
        ]
        .iter()
        .enumerate()
        {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_full(*col));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Columns of a solution CSV, as written by [`write_solution_csv`].
pub struct SolutionColumns {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn read_solution_csv(path: &Path) -> Result<SolutionColumns> {
    let text = std::fs::read_to_string(path)?;
    let mut cols = SolutionColumns {
        r: Vec::new(),
        f: Vec::new(),
        g: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
    };
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("line {}: expected 5 columns", idx + 1),
            });
        }
        let mut parsed = [0.0; 5];
        for (slot, field) in parsed.iter_mut().zip(&fields) {
            *slot = field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: format!("line {}: {e}", idx + 1),
            })?;
        }
        cols.r.push(parsed[0]);
        cols.f.push(parsed[1]);
        cols.g.push(parsed[2]);
        cols.u.push(parsed[3]);
        cols.v.push(parsed[4]);
    }
    if cols.r.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: "no data rows".into(),
        });
    }
    Ok(cols)
}

/// Domain and exponent block stored with every run report so downstream
/// commands can rebuild the problem from files alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigBlock {
    pub domain: DomainKind,
    pub p: f64,
    pub q: f64,
    pub nodes: usize,
}

/// Run report for a minimization: {converged, iterations, phi, residuals,
/// options, seed} plus the config block and the grid header.
pub fn run_report(result: &MinResult, options: &MinimizeOptions) -> serde_json::Value {
    let d = &result.solution.diagnostics;
    json!({
        "converged": result.converged,
        "iterations": result.iterations,
        "phi": result.phi_value,
        "residuals": {
            "criticality": d.criticality_residual,
            "compat_u": d.compat_u,
            "compat_v": d.compat_v,
            "nehari": match result.pair.exponents.regime {
                crate::energy::Regime::Superlinear => Some(result.pair.nehari_residual()),
                crate::energy::Regime::Sublinear => None,
            },
        },
        "options": options,
        "seed": options.seed,
        "config": RunConfigBlock {
            domain: result.pair.f.grid().kind(),
            p: result.pair.exponents.p,
            q: result.pair.exponents.q,
            nodes: result.pair.f.grid().len(),
        },
        "grid": grid_header(result.pair.f.grid()),
        "diagnostics": {
            "phi": d.phi,
            "I": d.direct_energy,
            "residual": d.criticality_residual,
            "compat_u": d.compat_u,
            "compat_v": d.compat_v,
        },
        "history": result.history,
    })
}

/// Solution diagnostics block: {phi, I, residual, compat_u, compat_v}.
pub fn diagnostics_json(sol: &SolutionPair) -> serde_json::Value {
    json!({
        "phi": sol.diagnostics.phi,
        "I": sol.diagnostics.direct_energy,
        "residual": sol.diagnostics.criticality_residual,
        "compat_u": sol.diagnostics.compat_u,
        "compat_v": sol.diagnostics.compat_v,
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes through a sibling temp file and renames, so failures never leave a
/// partial file at the destination.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Rebuilds a grid from the declared domain parameters.
pub fn grid_from_parts(kind_name: &str, dimension: u32, delta: f64, nodes: usize) -> Result<Arc<RadialGrid>> {
    let kind = match kind_name {
        "ball" => DomainKind::Ball { dimension },
        "annulus" => DomainKind::Annulus {
            dimension,
            inner_radius: delta,
        },
        "interval" => DomainKind::Interval,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown domain kind '{other}'"
            )))
        }
    };
    crate::grid::make_grid(kind, nodes)
}
