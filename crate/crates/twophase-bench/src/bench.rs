//! Benchmark quantities and their time series.
//!
//! The standard rising-bubble diagnostics are the degree of circularity
//! (perimeter of the area-equivalent circle over the actual perimeter), the
//! centroid height, and the mean rise velocity of the enclosed phase,
//! together with the relative volume change as the conservation audit. One
//! [`BenchmarkRecord`] is written per time step; [`summarize`] extracts the
//! tabulated extrema (value and time, parabola-refined between samples).

use serde::Serialize;

/// Exact column set of the per-step CSV output.
pub const CSV_HEADER: &str = "t,circ,vc,yc,vdelta,energy,picard,minangle,walltime";

/// One row of the benchmark time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkRecord {
    /// Simulation time after the step.
    pub t: f64,
    /// Degree of circularity of the interface.
    pub circ: f64,
    /// Vertical mean velocity of the enclosed phase.
    pub vc: f64,
    /// Vertical coordinate of the enclosed-phase centroid.
    pub yc: f64,
    /// Relative volume change `(|Ω₁(t)| − |Ω₁(0)|) / |Ω₁(0)|`.
    pub vdelta: f64,
    /// Discrete energy (kinetic + interfacial).
    pub energy: f64,
    /// Fixed-point sweeps the step used.
    pub picard: usize,
    /// Minimum interior angle of the bulk mesh (radians).
    pub minangle: f64,
    /// Wall-clock seconds spent since the run started.
    pub walltime: f64,
}

impl BenchmarkRecord {
    /// Formats the row exactly as read back by [`read_csv`].
    pub fn to_csv(&self) -> String {
        format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.3}",
            self.t,
            self.circ,
            self.vc,
            self.yc,
            self.vdelta,
            self.energy,
            self.picard,
            self.minangle,
            self.walltime
        )
    }
}

/// Parses a CSV produced by the run loop (header line required).
pub fn read_csv(text: &str) -> Result<Vec<BenchmarkRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(format!("bad CSV header: {other:?}")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(format!("line {}: expected 9 fields, got {}", i + 2, f.len()));
        }
        let num = |j: usize| -> Result<f64, String> {
            f[j].trim()
                .parse()
                .map_err(|e| format!("line {}: field {}: {e}", i + 2, j + 1))
        };
        out.push(BenchmarkRecord {
            t: num(0)?,
            circ: num(1)?,
            vc: num(2)?,
            yc: num(3)?,
            vdelta: num(4)?,
            energy: num(5)?,
            picard: f[6]
                .trim()
                .parse()
                .map_err(|e| format!("line {}: field 7: {e}", i + 2))?,
            minangle: num(7)?,
            walltime: num(8)?,
        });
    }
    Ok(out)
}

/// Extrema of the series in the form the benchmark tables quote.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BenchmarkSummary {
    /// Minimum circularity and its time.
    pub circ_min: f64,
    pub t_circ_min: f64,
    /// Global maximum rise velocity and its time.
    pub vc_max: f64,
    pub t_vc_max: f64,
    /// First local maximum of the rise velocity (equals the global one when
    /// the series has a single hump).
    pub vc_max1: f64,
    pub t_vc_max1: f64,
    /// Final centroid height and final time.
    pub yc_final: f64,
    pub t_final: f64,
    /// Largest relative volume change over the run.
    pub vdelta_max_abs: f64,
    /// Final discrete energy.
    pub energy_final: f64,
}

/// Parabola through three equally spaced or unequally spaced samples around
/// index `i`; returns the refined abscissa and value of the extremum. Falls
/// back to the sample itself at series ends or for degenerate curvature.
fn refine_extremum(ts: &[f64], ys: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= ys.len() {
        return (ts[i], ys[i]);
    }
    let (t0, t1, t2) = (ts[i - 1], ts[i], ts[i + 1]);
    let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
    // Newton's divided differences of the interpolating quadratic.
    let d01 = (y1 - y0) / (t1 - t0);
    let d12 = (y2 - y1) / (t2 - t1);
    let c = (d12 - d01) / (t2 - t0);
    if c == 0.0 || !c.is_finite() {
        return (t1, y1);
    }
    let t_star = 0.5 * (t0 + t1 - d01 / c);
    if t_star < t0 || t_star > t2 {
        return (t1, y1);
    }
    let y_star = y0 + d01 * (t_star - t0) + c * (t_star - t0) * (t_star - t1);
    (t_star, y_star)
}

/// Index of the first local maximum: the first sample strictly above each of
/// the `lookahead` samples that follow it (and not below its predecessor).
/// Returns the global maximum index when no interior hump qualifies.
fn first_local_max(ys: &[f64], lookahead: usize) -> usize {
    let lookahead = lookahead.max(1);
    for i in 1..ys.len().saturating_sub(1) {
        if ys[i] < ys[i - 1] {
            continue;
        }
        let end = (i + 1 + lookahead).min(ys.len());
        if ys[i + 1..end].iter().all(|&y| y < ys[i]) {
            return i;
        }
    }
    // Monotone or too-short series: global maximum.
    (0..ys.len()).fold(0, |best, i| if ys[i] > ys[best] { i } else { best })
}

/// Extracts the tabulated extrema from a time series (panics on an empty
/// series; callers always have the initial record).
pub fn summarize(records: &[BenchmarkRecord]) -> BenchmarkSummary {
    assert!(!records.is_empty(), "empty benchmark series");
    let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    let circ: Vec<f64> = records.iter().map(|r| r.circ).collect();
    let vc: Vec<f64> = records.iter().map(|r| r.vc).collect();

    let i_cmin = (0..circ.len()).fold(0, |b, i| if circ[i] < circ[b] { i } else { b });
    let (t_circ_min, circ_min) = refine_extremum(&ts, &circ, i_cmin);

    let i_vmax = (0..vc.len()).fold(0, |b, i| if vc[i] > vc[b] { i } else { b });
    let (t_vc_max, vc_max) = refine_extremum(&ts, &vc, i_vmax);

    let dt = if ts.len() > 1 { ts[1] - ts[0] } else { 1.0 };
    let lookahead = ((0.05 / dt).ceil() as usize).clamp(3, 200);
    let i_v1 = first_local_max(&vc, lookahead);
    let (t_vc_max1, vc_max1) = refine_extremum(&ts, &vc, i_v1);

    let last = records.last().unwrap();
    BenchmarkSummary {
        circ_min,
        t_circ_min,
        vc_max,
        t_vc_max,
        vc_max1,
        t_vc_max1,
        yc_final: last.yc,
        t_final: last.t,
        vdelta_max_abs: records.iter().map(|r| r.vdelta.abs()).fold(0.0, f64::max),
        energy_final: last.energy,
    }
}
