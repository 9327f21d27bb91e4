//! Run artifacts: VTK snapshots and the machine-readable summary.
//!
//! Snapshots are legacy-ASCII VTK files, one unstructured grid per step for
//! the bulk mesh (velocity as point data, pressure and phase as cell data)
//! plus one polydata file for the interface polygon. The summary is a JSON
//! document with the resolved configuration, the tabulated benchmark
//! extrema, and the structural audit of the run.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::BenchmarkSummary;
use twophase::fem::space::MixedSpace;
use twophase::interface::InterfaceMesh;
use twophase::mesh::{BulkMesh, MeshMode, Phase};

/// Everything a bulk snapshot needs; the enrichment coefficient is the
/// indicator amplitude of the unfitted pressure (zero for fitted runs).
pub struct Snapshot<'a> {
    pub mesh: &'a BulkMesh,
    pub space: &'a MixedSpace,
    pub gamma: &'a InterfaceMesh,
    pub velocity: &'a [f64],
    pub pressure: &'a [f64],
    pub pressure_enrichment: f64,
    pub time: f64,
}

/// Writes `bulk_NNNNNN.vtk` and `interface_NNNNNN.vtk` into `dir`.
pub fn write_snapshot(dir: &Path, step: u64, snap: &Snapshot) -> Result<(), String> {
    let bulk = dir.join(format!("bulk_{step:06}.vtk"));
    write_bulk_vtk(&bulk, snap).map_err(|e| format!("{}: {e}", bulk.display()))?;
    let iface = dir.join(format!("interface_{step:06}.vtk"));
    snap.gamma
        .write_vtk(&iface)
        .map_err(|e| format!("{}: {e}", iface.display()))?;
    Ok(())
}

fn write_bulk_vtk(path: &Path, snap: &Snapshot) -> Result<(), String> {
    use std::fmt::Write as _;
    let mesh = snap.mesh;
    let nv = mesh.vertex_count();
    let nt = mesh.tri_count();
    let mut out = String::with_capacity(64 * (nv + nt));
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "two-phase flow snapshot t={:.6}", snap.time);
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {nv} double");
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:.12e} {:.12e} 0.0", v.x, v.y);
    }
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in mesh.tris() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }

    // Velocity at the mesh vertices (the quadratic field also carries edge
    // values; vertex samples are what the cell type can represent).
    let _ = writeln!(out, "POINT_DATA {nv}");
    out.push_str("VECTORS velocity double\n");
    for v in 0..nv {
        let _ = writeln!(
            out,
            "{:.12e} {:.12e} 0.0",
            snap.velocity[snap.space.vdof(v, 0)],
            snap.velocity[snap.space.vdof(v, 1)]
        );
    }

    let _ = writeln!(out, "CELL_DATA {nt}");
    out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    let third = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
    let inside: Vec<bool> = match mesh.mode() {
        MeshMode::Fitted(d) => d.phase.iter().map(|p| *p == Phase::Inner).collect(),
        _ => (0..nt)
            .map(|t| snap.gamma.contains(mesh.centroid(t)))
            .collect(),
    };
    for t in 0..nt {
        let mut p = snap.space.pressure_at(mesh, snap.pressure, t, third);
        if inside[t] {
            p += snap.pressure_enrichment;
        }
        let _ = writeln!(out, "{p:.12e}");
    }
    out.push_str("SCALARS phase int 1\nLOOKUP_TABLE default\n");
    for t in 0..nt {
        let _ = writeln!(out, "{}", if inside[t] { 0 } else { 1 });
    }
    std::fs::write(path, out).map_err(|e| e.to_string())
}

/// Structural audit aggregated over all steps of a run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AuditSummary {
    /// Enclosed area at the start and end of the run.
    pub volume_initial: f64,
    pub volume_final: f64,
    /// Largest relative volume change over the run.
    pub vdelta_max_abs: f64,
    /// Smallest energy-inequality slack over the run, absolute and relative
    /// to the current energy scale.
    pub slack_min: f64,
    pub slack_rel_min: f64,
    /// Whether every step's energy audit was conclusive (always true for
    /// the unfitted scheme; the fitted audit reports the flag per step).
    pub energy_audit_valid: bool,
    /// Fixed-point iteration statistics.
    pub picard_max: usize,
    pub picard_mean: f64,
    /// Worst mesh quality seen (radians).
    pub min_angle_min: f64,
    /// Extremes of the mesh-motion Jacobian over the run (1 on fixed meshes).
    pub jacobian_min: f64,
    pub jacobian_max: f64,
    /// Largest change-of-variables residual of the self-test performed each
    /// step (0 on fixed meshes).
    pub map_residual_max: f64,
    /// Number of mid-run remeshes.
    pub remeshes: usize,
}

/// The summary document written next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub case: String,
    pub scheme: String,
    pub pair: String,
    pub jgamma: usize,
    pub h: f64,
    pub dt: f64,
    pub tmax: f64,
    pub tol: f64,
    pub steps: usize,
    pub bulk_triangles_initial: usize,
    pub bulk_triangles_final: usize,
    pub benchmarks: BenchmarkSummary,
    pub audit: AuditSummary,
    pub walltime: f64,
}

/// Writes the summary as pretty JSON; returns the path written.
pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<PathBuf, String> {
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(|e| e.to_string())?;
    std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(path)
}
