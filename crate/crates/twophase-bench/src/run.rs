//! The benchmark time loop.
//!
//! Builds a scheme from a [`CaseConfig`], steps it to the final time while
//! appending one CSV row per step (flushed immediately, so interrupted runs
//! keep their series), regenerates the bulk mesh of the moving-mesh scheme
//! when its quality degrades, optionally writes VTK snapshots, and ends
//! with a JSON summary of the tabulated extrema and the structural audit.
//!
//! On a failed step the last consistent bulk mesh and interface polygon are
//! dumped next to the CSV so the state can be inspected and restarted.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use crate::bench::{summarize, BenchmarkRecord, CSV_HEADER};
use crate::config::{CaseConfig, Pair, Scheme};
use crate::meshgen::generate_fitted_mesh;
use crate::output::{write_snapshot, write_summary, AuditSummary, RunSummary, Snapshot};
use twophase::ale::{AleOptions, AleScheme, AleVariant};
use twophase::eulerian::{EulerianOptions, EulerianScheme};
use twophase::fem::space::{MixedSpace, PressureSpace};
use twophase::interface::InterfaceMesh;
use twophase::mesh::BulkMesh;
use twophase::NormalTreatment;

/// Either time stepper behind one interface.
pub enum AnyScheme {
    Eulerian(EulerianScheme),
    Ale(AleScheme),
}

/// Normalized per-step audit shared by both steppers.
#[derive(Debug, Clone, Copy)]
pub struct StepAudit {
    pub picard_iters: usize,
    pub energy: f64,
    pub energy_slack: f64,
    pub energy_audit_valid: bool,
    pub min_angle: f64,
    pub jacobian_range: (f64, f64),
    pub map_residual: f64,
}

impl AnyScheme {
    pub fn time(&self) -> f64 {
        match self {
            AnyScheme::Eulerian(s) => s.time(),
            AnyScheme::Ale(s) => s.time(),
        }
    }

    pub fn mesh(&self) -> &BulkMesh {
        match self {
            AnyScheme::Eulerian(s) => s.mesh(),
            AnyScheme::Ale(s) => s.mesh(),
        }
    }

    pub fn space(&self) -> &MixedSpace {
        match self {
            AnyScheme::Eulerian(s) => s.space(),
            AnyScheme::Ale(s) => s.space(),
        }
    }

    pub fn interface(&self) -> &InterfaceMesh {
        match self {
            AnyScheme::Eulerian(s) => s.interface(),
            AnyScheme::Ale(s) => s.interface(),
        }
    }

    pub fn velocity(&self) -> &[f64] {
        match self {
            AnyScheme::Eulerian(s) => s.velocity(),
            AnyScheme::Ale(s) => s.velocity(),
        }
    }

    pub fn pressure(&self) -> &[f64] {
        match self {
            AnyScheme::Eulerian(s) => s.pressure(),
            AnyScheme::Ale(s) => s.pressure(),
        }
    }

    pub fn pressure_enrichment(&self) -> f64 {
        match self {
            AnyScheme::Eulerian(s) => s.pressure_enrichment(),
            AnyScheme::Ale(_) => 0.0,
        }
    }

    pub fn energy(&self) -> f64 {
        match self {
            AnyScheme::Eulerian(s) => s.energy(),
            AnyScheme::Ale(s) => s.energy(),
        }
    }

    pub fn bubble_area(&self) -> f64 {
        match self {
            AnyScheme::Eulerian(s) => s.bubble_area(),
            AnyScheme::Ale(s) => s.bubble_area(),
        }
    }

    pub fn bubble_centroid(&self) -> twophase::Result<twophase::Vec2> {
        match self {
            AnyScheme::Eulerian(s) => s.bubble_centroid(),
            AnyScheme::Ale(s) => s.bubble_centroid(),
        }
    }

    pub fn bubble_mean_velocity(&self) -> twophase::Result<twophase::Vec2> {
        match self {
            AnyScheme::Eulerian(s) => s.bubble_mean_velocity(),
            AnyScheme::Ale(s) => s.bubble_mean_velocity(),
        }
    }

    pub fn step(&mut self, dt: f64) -> twophase::Result<StepAudit> {
        match self {
            AnyScheme::Eulerian(s) => {
                let r = s.step(dt)?;
                Ok(StepAudit {
                    picard_iters: r.picard_iters,
                    energy: r.energy,
                    energy_slack: r.energy_slack,
                    energy_audit_valid: true,
                    min_angle: s.mesh().min_angle(),
                    jacobian_range: (1.0, 1.0),
                    map_residual: 0.0,
                })
            }
            AnyScheme::Ale(s) => {
                let r = s.step(dt)?;
                Ok(StepAudit {
                    picard_iters: r.picard_iters,
                    energy: r.energy,
                    energy_slack: r.energy_slack,
                    energy_audit_valid: r.energy_audit_valid,
                    min_angle: r.min_angle,
                    jacobian_range: r.jacobian_range,
                    map_residual: r.map_residual,
                })
            }
        }
    }
}

/// Builds the configured scheme with its initial mesh and quiescent state.
pub fn build_scheme(cfg: &CaseConfig) -> Result<AnyScheme, String> {
    let (lo, hi) = cfg.domain();
    let (center, r) = cfg.initial_circle();
    let gamma = InterfaceMesh::circle(center, r, cfg.jgamma)
        .map_err(|e| format!("interface construction failed: {e}"))?;
    let params = cfg.params();
    match cfg.scheme {
        Scheme::Eulerian => {
            let nx = ((hi.x - lo.x) / cfg.h).round().max(1.0) as usize;
            let ny = ((hi.y - lo.y) / cfg.h).round().max(1.0) as usize;
            let mesh = BulkMesh::criss_cross(nx, ny, lo, hi);
            let opts = EulerianOptions {
                xfem: !cfg.no_xfem,
                normal_treatment: if cfg.lagged_normal {
                    NormalTreatment::Lagged
                } else {
                    NormalTreatment::TimeWeighted
                },
                picard_tol: cfg.tol,
                max_picard: 100,
            };
            EulerianScheme::new(mesh, gamma, params, opts)
                .map(AnyScheme::Eulerian)
                .map_err(|e| format!("unfitted scheme construction failed: {e}"))
        }
        Scheme::AleN | Scheme::AleC => {
            let mesh = generate_fitted_mesh(&gamma, cfg.h, lo, hi)?;
            let opts = AleOptions {
                pressure: match cfg.pair {
                    Pair::P2P0 => PressureSpace::P0,
                    Pair::P2P1 => PressureSpace::P1,
                    _ => PressureSpace::P1P0,
                },
                variant: if cfg.scheme == Scheme::AleC {
                    AleVariant::Conservative
                } else {
                    AleVariant::Natural
                },
                picard_tol: cfg.tol,
                max_picard: 100,
                coupled: cfg.coupled,
                jacobian_weighting: !cfg.no_jacobian_weight,
            };
            AleScheme::new(mesh, params, opts)
                .map(AnyScheme::Ale)
                .map_err(|e| format!("moving-mesh scheme construction failed: {e}"))
        }
    }
}

/// Result of a completed run.
pub struct RunOutcome {
    pub summary: RunSummary,
    pub records: Vec<BenchmarkRecord>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs the configured benchmark to `tmax`. Writes `series.csv`,
/// `summary.json`, and optional VTK snapshots into `cfg.out`.
pub fn run(cfg: &CaseConfig) -> Result<RunOutcome, String> {
    cfg.validate()?;
    if cfg.deterministic {
        twophase::fem::solver::force_sequential_linear_algebra();
    }
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| format!("cannot create {}: {e}", cfg.out.display()))?;
    let csv_path = cfg.out.join("series.csv");
    let mut csv = BufWriter::new(
        File::create(&csv_path).map_err(|e| format!("{}: {e}", csv_path.display()))?,
    );
    writeln!(csv, "{CSV_HEADER}").map_err(|e| e.to_string())?;

    let start = Instant::now();
    let mut scheme = build_scheme(cfg)?;
    let volume0 = scheme.bubble_area();
    let tri0 = scheme.mesh().tri_count();
    eprintln!(
        "[bench] {} | bulk triangles: {} | velocity dofs: {}",
        cfg.label(),
        tri0,
        scheme.space().velocity_dofs()
    );

    let mut records = Vec::new();
    let push_record = |scheme: &AnyScheme,
                           picard: usize,
                           csv: &mut BufWriter<File>,
                           records: &mut Vec<BenchmarkRecord>|
     -> Result<(), String> {
        let centroid = scheme
            .bubble_centroid()
            .map_err(|e| format!("centroid query failed: {e}"))?;
        let mean_v = scheme
            .bubble_mean_velocity()
            .map_err(|e| format!("mean velocity query failed: {e}"))?;
        let rec = BenchmarkRecord {
            t: scheme.time(),
            circ: scheme.interface().circularity(),
            vc: mean_v.y,
            yc: centroid.y,
            vdelta: (scheme.bubble_area() - volume0) / volume0,
            energy: scheme.energy(),
            picard,
            minangle: scheme.mesh().min_angle(),
            walltime: start.elapsed().as_secs_f64(),
        };
        writeln!(csv, "{}", rec.to_csv()).map_err(|e| e.to_string())?;
        csv.flush().map_err(|e| e.to_string())?;
        records.push(rec);
        Ok(())
    };

    push_record(&scheme, 0, &mut csv, &mut records)?;
    let snapshot = |scheme: &AnyScheme, step: u64| -> Result<(), String> {
        let snap = Snapshot {
            mesh: scheme.mesh(),
            space: scheme.space(),
            gamma: scheme.interface(),
            velocity: scheme.velocity(),
            pressure: scheme.pressure(),
            pressure_enrichment: scheme.pressure_enrichment(),
            time: scheme.time(),
        };
        write_snapshot(&cfg.out, step, &snap)
    };
    if cfg.vtk_every > 0 {
        snapshot(&scheme, 0)?;
    }

    let n_steps = (cfg.tmax / cfg.dt).round().max(1.0) as u64;
    let mut audit = AuditAccumulator::new();
    for step in 1..=n_steps {
        // Remesh the moving mesh when its quality trigger fires: a fresh
        // bulk triangulation around the unchanged interface polygon, with
        // the discrete fields transferred onto it.
        if let AnyScheme::Ale(s) = &mut scheme {
            if s.mesh().remesh_needed() {
                let (lo, hi) = cfg.domain();
                let fresh = generate_fitted_mesh(s.interface(), cfg.h, lo, hi)?;
                eprintln!(
                    "[bench] t={:.4}: remeshing ({} -> {} triangles, min angle {:.2}deg -> {:.2}deg)",
                    s.time(),
                    s.mesh().tri_count(),
                    fresh.tri_count(),
                    s.mesh().min_angle().to_degrees(),
                    fresh.min_angle().to_degrees(),
                );
                s.remesh(fresh)
                    .map_err(|e| format!("solution transfer failed: {e}"))?;
                audit.remeshes += 1;
            }
        }

        match scheme.step(cfg.dt) {
            Ok(report) => audit.absorb(&report, scheme.bubble_area(), volume0),
            Err(e) => {
                let mesh_dump = cfg.out.join("failed_mesh.txt");
                let iface_dump = cfg.out.join("failed_interface.txt");
                let _ = scheme.mesh().write_text(&mesh_dump);
                let _ = scheme.interface().write_text(&iface_dump);
                return Err(format!(
                    "step {step} (t = {:.6}) failed: {e}; last consistent state dumped to {} and {}",
                    scheme.time(),
                    mesh_dump.display(),
                    iface_dump.display()
                ));
            }
        }
        push_record(&scheme, audit.last_picard, &mut csv, &mut records)?;
        if cfg.vtk_every > 0 && (step % cfg.vtk_every as u64 == 0 || step == n_steps) {
            snapshot(&scheme, step)?;
        }
    }

    let benchmarks = summarize(&records);
    let summary = RunSummary {
        label: cfg.label(),
        case: cfg.case.to_string(),
        scheme: cfg.scheme.to_string(),
        pair: cfg.pair.to_string(),
        jgamma: cfg.jgamma,
        h: cfg.h,
        dt: cfg.dt,
        tmax: cfg.tmax,
        tol: cfg.tol,
        steps: n_steps as usize,
        bulk_triangles_initial: tri0,
        bulk_triangles_final: scheme.mesh().tri_count(),
        benchmarks,
        audit: audit.finish(volume0, scheme.bubble_area()),
        walltime: start.elapsed().as_secs_f64(),
    };
    let summary_path = write_summary(&cfg.out, &summary)?;
    Ok(RunOutcome {
        summary,
        records,
        csv_path,
        summary_path,
    })
}

/// Running aggregation of the per-step audits.
struct AuditAccumulator {
    last_picard: usize,
    picard_max: usize,
    picard_sum: usize,
    steps: usize,
    slack_min: f64,
    slack_rel_min: f64,
    audit_valid: bool,
    vdelta_max_abs: f64,
    min_angle_min: f64,
    jac_min: f64,
    jac_max: f64,
    map_residual_max: f64,
    remeshes: usize,
}

impl AuditAccumulator {
    fn new() -> Self {
        Self {
            last_picard: 0,
            picard_max: 0,
            picard_sum: 0,
            steps: 0,
            slack_min: f64::INFINITY,
            slack_rel_min: f64::INFINITY,
            audit_valid: true,
            vdelta_max_abs: 0.0,
            min_angle_min: f64::INFINITY,
            jac_min: f64::INFINITY,
            jac_max: f64::NEG_INFINITY,
            map_residual_max: 0.0,
            remeshes: 0,
        }
    }

    fn absorb(&mut self, r: &StepAudit, volume: f64, volume0: f64) {
        self.last_picard = r.picard_iters;
        self.picard_max = self.picard_max.max(r.picard_iters);
        self.picard_sum += r.picard_iters;
        self.steps += 1;
        self.slack_min = self.slack_min.min(r.energy_slack);
        self.slack_rel_min = self
            .slack_rel_min
            .min(r.energy_slack / r.energy.max(1e-300));
        self.audit_valid &= r.energy_audit_valid;
        self.vdelta_max_abs = self
            .vdelta_max_abs
            .max(((volume - volume0) / volume0).abs());
        self.min_angle_min = self.min_angle_min.min(r.min_angle);
        self.jac_min = self.jac_min.min(r.jacobian_range.0);
        self.jac_max = self.jac_max.max(r.jacobian_range.1);
        self.map_residual_max = self.map_residual_max.max(r.map_residual);
    }

    fn finish(&self, volume0: f64, volume_final: f64) -> AuditSummary {
        AuditSummary {
            volume_initial: volume0,
            volume_final,
            vdelta_max_abs: self.vdelta_max_abs,
            slack_min: if self.steps == 0 { 0.0 } else { self.slack_min },
            slack_rel_min: if self.steps == 0 {
                0.0
            } else {
                self.slack_rel_min
            },
            energy_audit_valid: self.audit_valid,
            picard_max: self.picard_max,
            picard_mean: if self.steps == 0 {
                0.0
            } else {
                self.picard_sum as f64 / self.steps as f64
            },
            min_angle_min: if self.steps == 0 {
                0.0
            } else {
                self.min_angle_min
            },
            jacobian_min: if self.steps == 0 { 1.0 } else { self.jac_min },
            jacobian_max: if self.steps == 0 { 1.0 } else { self.jac_max },
            map_residual_max: self.map_residual_max,
            remeshes: self.remeshes,
        }
    }
}
