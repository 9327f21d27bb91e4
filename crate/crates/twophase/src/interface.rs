//! Polygonal interface meshes and the discrete surface operators.
//!
//! The interface `Γ` between the two phases is a closed polygon with `K`
//! vertices and `K` segments. The polygon is oriented counter-clockwise, so
//! the enclosed phase (the "bubble") lies on the left of every directed
//! segment and the segment normals produced by [`InterfaceMesh::unit_normal`]
//! point out of the enclosed phase.
//!
//! Besides the geometry itself this module provides the small set of surface
//! operators the time steppers are built from: mass-lumped and exact inner
//! products on the polygon, the surface stiffness (Dirichlet) form, the
//! time-weighted segment normals that make the semi-implicit kinematic
//! equation track phase volume exactly, and a standalone discrete curvature
//! solve used for initialization and diagnostics.

use std::fmt::Write as _;
use std::path::Path;

use crate::{cross2, rot_minus_90, Error, Result, Vec2};

/// A closed polygonal interface, oriented counter-clockwise.
///
/// Vertices are stored in traversal order; segment `j` connects vertex `j`
/// to vertex `(j + 1) % K`. The vertex and segment counts coincide.
#[derive(Debug, Clone)]
pub struct InterfaceMesh {
    verts: Vec<Vec2>,
    /// Segment connectivity `segs[j] = [j, (j+1) % K]`, kept explicit so the
    /// invariant "every vertex has exactly two incident segments" is a real
    /// data property and not an assumption baked into index arithmetic.
    segs: Vec<[usize; 2]>,
}

impl InterfaceMesh {
    /// Builds an interface from a vertex loop given in traversal order.
    ///
    /// The orientation is normalized: if the loop is clockwise it is
    /// reversed so the enclosed area is positive. Fails on fewer than three
    /// vertices, on zero-length segments, and on zero enclosed area.
    pub fn new(mut verts: Vec<Vec2>) -> Result<Self> {
        if verts.len() < 3 {
            return Err(Error::InvalidMesh(format!(
                "interface needs at least 3 vertices, got {}",
                verts.len()
            )));
        }
        let area = shoelace(&verts);
        if area == 0.0 {
            return Err(Error::InvalidMesh(
                "interface encloses zero area".into(),
            ));
        }
        if area < 0.0 {
            verts.reverse();
        }
        let mesh = Self::from_ccw_loop(verts)?;
        debug_assert!(mesh.is_simple(), "interface polygon self-intersects");
        Ok(mesh)
    }

    /// Builds an interface from a loop already known to be counter-clockwise,
    /// preserving the vertex order exactly (no renormalization).
    ///
    /// This is the constructor used when a fitted bulk mesh or a previous
    /// time step dictates the vertex numbering.
    pub fn from_ccw_loop(verts: Vec<Vec2>) -> Result<Self> {
        let k = verts.len();
        if k < 3 {
            return Err(Error::InvalidMesh(format!(
                "interface needs at least 3 vertices, got {k}"
            )));
        }
        for j in 0..k {
            let e = verts[(j + 1) % k] - verts[j];
            if e.norm() == 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "interface segment {j} has zero length"
                )));
            }
        }
        if shoelace(&verts) <= 0.0 {
            return Err(Error::InvalidMesh(
                "vertex loop is not counter-clockwise".into(),
            ));
        }
        let segs = (0..k).map(|j| [j, (j + 1) % k]).collect();
        Ok(Self { verts, segs })
    }

    /// Regular `k`-gon inscribed in the circle of radius `r` about `center`,
    /// starting at angle 0 and oriented counter-clockwise.
    pub fn circle(center: Vec2, r: f64, k: usize) -> Result<Self> {
        if r <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "circle radius must be positive, got {r}"
            )));
        }
        let verts = (0..k)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                center + r * Vec2::new(th.cos(), th.sin())
            })
            .collect();
        Self::from_ccw_loop(verts)
    }

    /// Replaces the vertex positions, keeping connectivity and orientation.
    ///
    /// Used to advance `Γ^m ↦ Γ^{m+1}`: the new positions are the values of
    /// the discrete motion at the old vertices, so the numbering must not
    /// change. Fails if the moved polygon is degenerate or has flipped
    /// orientation (the motion has torn the interface).
    pub fn with_positions(&self, verts: Vec<Vec2>) -> Result<Self> {
        if verts.len() != self.verts.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} vertex positions, got {}",
                self.verts.len(),
                verts.len()
            )));
        }
        Self::from_ccw_loop(verts)
    }

    /// Number of vertices (equals the number of segments).
    pub fn vertex_count(&self) -> usize {
        self.verts.len()
    }

    /// Number of segments (equals the number of vertices).
    pub fn segment_count(&self) -> usize {
        self.segs.len()
    }

    /// Vertex positions in traversal order.
    pub fn vertices(&self) -> &[Vec2] {
        &self.verts
    }

    /// Endpoint indices `[start, end]` of segment `j`.
    pub fn segment(&self, j: usize) -> [usize; 2] {
        self.segs[j]
    }

    /// Chord vector of segment `j` (end minus start).
    pub fn chord(&self, j: usize) -> Vec2 {
        let [a, b] = self.segs[j];
        self.verts[b] - self.verts[a]
    }

    /// Length of segment `j`.
    pub fn segment_length(&self, j: usize) -> f64 {
        self.chord(j).norm()
    }

    /// Orientation vector of segment `j`: the chord rotated by −90°.
    ///
    /// Its norm is the segment length and its direction is the outward unit
    /// normal of the enclosed phase.
    pub fn orientation_vector(&self, j: usize) -> Vec2 {
        rot_minus_90(self.chord(j))
    }

    /// Outward unit normal of segment `j` (pointing out of the enclosed
    /// phase).
    pub fn unit_normal(&self, j: usize) -> Vec2 {
        let a = self.orientation_vector(j);
        a / a.norm()
    }

    /// Time-weighted normal of segment `j` for a motion of the vertices from
    /// their current positions to `new_pos`: the average of the start and end
    /// orientation vectors divided by the start segment length,
    ///
    /// ```text
    /// ν^{1/2}|_j = (A_j(old) + A_j(new)) / (2 |A_j(old)|).
    /// ```
    ///
    /// Because the orientation vector is affine in the vertex positions this
    /// is the exact time average of `A_j(t) / |A_j(old)|` over the motion,
    /// which is what makes the lumped pairing with the displacement equal the
    /// enclosed-area change exactly (see
    /// [`volume_lemma_residual`](Self::volume_lemma_residual)).
    pub fn time_weighted_normal(&self, new_pos: &[Vec2], j: usize) -> Vec2 {
        let [a, b] = self.segs[j];
        let a_old = self.orientation_vector(j);
        let a_new = rot_minus_90(new_pos[b] - new_pos[a]);
        (a_old + a_new) / (2.0 * a_old.norm())
    }

    /// All time-weighted normals for a motion to `new_pos`.
    pub fn time_weighted_normals(&self, new_pos: &[Vec2]) -> Vec<Vec2> {
        (0..self.segs.len())
            .map(|j| self.time_weighted_normal(new_pos, j))
            .collect()
    }

    /// Mass-lumped inner product of two piecewise linear scalar fields given
    /// by vertex values: `Σ_j |σ_j| (f g)(q_{j0}) + (f g)(q_{j1})) / 2`.
    pub fn lumped_inner_product(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.verts.len());
        assert_eq!(g.len(), self.verts.len());
        let mut s = 0.0;
        for j in 0..self.segs.len() {
            let [a, b] = self.segs[j];
            s += 0.5 * self.segment_length(j) * (f[a] * g[a] + f[b] * g[b]);
        }
        s
    }

    /// Mass-lumped inner product of two piecewise linear vector fields.
    pub fn lumped_inner_product_vec(&self, f: &[Vec2], g: &[Vec2]) -> f64 {
        assert_eq!(f.len(), self.verts.len());
        assert_eq!(g.len(), self.verts.len());
        let mut s = 0.0;
        for j in 0..self.segs.len() {
            let [a, b] = self.segs[j];
            s += 0.5 * self.segment_length(j) * (f[a].dot(&g[a]) + f[b].dot(&g[b]));
        }
        s
    }

    /// Exact (non-lumped) inner product of two piecewise linear scalar
    /// fields: per segment `|σ| (2 f₀g₀ + f₀g₁ + f₁g₀ + 2 f₁g₁) / 6`.
    pub fn true_inner_product(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.verts.len());
        assert_eq!(g.len(), self.verts.len());
        let mut s = 0.0;
        for j in 0..self.segs.len() {
            let [a, b] = self.segs[j];
            s += self.segment_length(j) / 6.0
                * (2.0 * f[a] * g[a] + f[a] * g[b] + f[b] * g[a] + 2.0 * f[b] * g[b]);
        }
        s
    }

    /// Exact (non-lumped) inner product of two piecewise linear vector
    /// fields.
    pub fn true_inner_product_vec(&self, f: &[Vec2], g: &[Vec2]) -> f64 {
        assert_eq!(f.len(), self.verts.len());
        assert_eq!(g.len(), self.verts.len());
        let mut s = 0.0;
        for j in 0..self.segs.len() {
            let [a, b] = self.segs[j];
            s += self.segment_length(j) / 6.0
                * (2.0 * f[a].dot(&g[a]) + f[a].dot(&g[b]) + f[b].dot(&g[a])
                    + 2.0 * f[b].dot(&g[b]));
        }
        s
    }

    /// Surface stiffness (Dirichlet) form of two piecewise linear vector
    /// fields on the polygon:
    ///
    /// ```text
    /// ⟨∇_s x, ∇_s z⟩ = Σ_j (x(q_{j1}) − x(q_{j0})) · (z(q_{j1}) − z(q_{j0})) / |σ_j|.
    /// ```
    ///
    /// Positive semi-definite with kernel the constant fields. Applied to
    /// the identity positions it reproduces the perimeter:
    /// `⟨∇_s id, ∇_s id⟩ = |Γ|`.
    pub fn surface_stiffness(&self, x: &[Vec2], z: &[Vec2]) -> f64 {
        assert_eq!(x.len(), self.verts.len());
        assert_eq!(z.len(), self.verts.len());
        let mut s = 0.0;
        for j in 0..self.segs.len() {
            let [a, b] = self.segs[j];
            s += (x[b] - x[a]).dot(&(z[b] - z[a])) / self.segment_length(j);
        }
        s
    }

    /// Circularity: perimeter of the area-equal circle over the polygon
    /// perimeter, `2√(π · area) / perimeter`. Equals 1 for a circle and is
    /// smaller for any other shape.
    pub fn circularity(&self) -> f64 {
        2.0 * (std::f64::consts::PI * self.enclosed_area()).sqrt() / self.perimeter()
    }

    /// Total length of the polygon.
    pub fn perimeter(&self) -> f64 {
        (0..self.segs.len()).map(|j| self.segment_length(j)).sum()
    }

    /// Area enclosed by the polygon (shoelace formula; positive for the
    /// counter-clockwise orientation maintained by this type).
    pub fn enclosed_area(&self) -> f64 {
        shoelace(&self.verts)
    }

    /// Residual of the exact-volume identity for a motion of the vertices to
    /// `new_pos`:
    ///
    /// ```text
    /// Σ_j |σ_j|/2 · Σ_{k=0,1} (new − old)(q_{jk}) · ν^{1/2}|_j
    ///     − (area(new) − area(old)).
    /// ```
    ///
    /// Zero in exact arithmetic for every polygon and every motion; the test
    /// suite holds it below 1e-12 relative to the enclosed area. This is the
    /// identity that transfers volume conservation from the kinematic
    /// equation to the discrete phase volume.
    pub fn volume_lemma_residual(&self, new_pos: &[Vec2]) -> f64 {
        assert_eq!(new_pos.len(), self.verts.len());
        let mut paired = 0.0;
        for j in 0..self.segs.len() {
            let [a, b] = self.segs[j];
            // |σ_j|/2 · ν^{1/2}|_j = (A_j(old) + A_j(new)) / 4: the segment
            // length cancels, so short segments cost no accuracy.
            let w = 0.25 * (self.orientation_vector(j) + rot_minus_90(new_pos[b] - new_pos[a]));
            paired += ((new_pos[a] - self.verts[a]) + (new_pos[b] - self.verts[b])).dot(&w);
        }
        paired - (shoelace(new_pos) - self.enclosed_area())
    }

    /// Per-vertex kinematic weight vectors for a motion of the vertices to
    /// `new_pos`:
    ///
    /// ```text
    /// w_k = Σ_{j ∋ k} (A_j(old) + A_j(new)) / 4,
    /// ```
    ///
    /// the mass-lumped pairing of a vertex field with the time-weighted
    /// normal: `Σ_k f_k · w_k = (f · ν^{1/2}, 1)^lumped`. Applied to the
    /// displacement `new − old` the sum is exactly the enclosed-area change
    /// (see [`volume_lemma_residual`](Self::volume_lemma_residual)); rows of
    /// the kinematic block of the coupled systems are built from these
    /// weights, and the curvature-mass block is their exact transpose.
    pub fn kinematic_vertex_weights(&self, new_pos: &[Vec2]) -> Vec<Vec2> {
        assert_eq!(new_pos.len(), self.verts.len());
        let mut w = vec![Vec2::zeros(); self.verts.len()];
        for j in 0..self.segs.len() {
            let [a, b] = self.segs[j];
            let wj = 0.25 * (self.orientation_vector(j) + rot_minus_90(new_pos[b] - new_pos[a]));
            w[a] += wj;
            w[b] += wj;
        }
        w
    }

    /// Solves the lumped vertex-curvature identity `κ_k ω_k ν̄_k = t̂_out − t̂_in`
    /// for the scalar curvatures `κ_k`, projecting on the vertex normal
    /// `ν̄_k` (the length-weighted average of the two incident segment
    /// normals).
    ///
    /// On a counter-clockwise polygon approximating a circle of radius `R`
    /// this converges to `−1/R` at second order in the vertex count. Fails
    /// if some vertex normal vanishes (incident segments fold back onto each
    /// other), which makes the identity singular.
    pub fn solve_discrete_curvature(&self) -> Result<Vec<f64>> {
        let k = self.verts.len();
        let mut kappa = vec![0.0; k];
        for v in 0..k {
            let j_in = (v + k - 1) % k;
            let j_out = v;
            let t_in = self.chord(j_in) / self.segment_length(j_in);
            let t_out = self.chord(j_out) / self.segment_length(j_out);
            // ω_k ν̄_k = (|σ_in| ν_in + |σ_out| ν_out)/2 = rot_{−90}(q_{k+1} − q_{k−1})/2.
            let m = 0.5 * (self.orientation_vector(j_in) + self.orientation_vector(j_out));
            let m2 = m.norm_squared();
            if m2 == 0.0 {
                return Err(Error::Geometry(format!(
                    "vertex {v}: incident segments fold back, curvature undefined"
                )));
            }
            kappa[v] = (t_out - t_in).dot(&m) / m2;
        }
        Ok(kappa)
    }

    /// Tests whether a point lies inside the polygon (crossing-number rule;
    /// points on the boundary may land on either side).
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        let k = self.verts.len();
        for j in 0..k {
            let a = self.verts[j];
            let b = self.verts[(j + 1) % k];
            if (a.y <= p.y) != (b.y <= p.y) {
                let xc = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if xc > p.x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Axis-aligned bounding box of the polygon as `(min, max)`.
    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = self.verts[0];
        let mut hi = self.verts[0];
        for v in &self.verts[1..] {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Ratio of the longest to the shortest segment; 1 for a uniform
    /// polygon. Used to monitor interface mesh quality over time.
    pub fn mesh_ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for j in 0..self.segs.len() {
            let l = self.segment_length(j);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        hi / lo
    }

    /// Checks that the polygon has no self-intersections (quadratic sweep
    /// over segment pairs; meant for validation and debug assertions, not
    /// per-step use on large interfaces).
    pub fn is_simple(&self) -> bool {
        let n = self.segs.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let [a, b] = self.segs[i];
                let [c, d] = self.segs[j];
                // Segments sharing a vertex touch there by construction.
                if a == c || a == d || b == c || b == d {
                    continue;
                }
                if segments_intersect(self.verts[a], self.verts[b], self.verts[c], self.verts[d]) {
                    return false;
                }
            }
        }
        true
    }

    /// Reads an interface from a text file: first line `K`, then `K` lines
    /// `x y`. Vertices are taken in traversal order; orientation is
    /// normalized as in [`new`](Self::new).
    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let perr = |msg: String| Error::Parse {
            path: path.display().to_string(),
            msg,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let k: usize = lines
            .next()
            .ok_or_else(|| perr("empty file".into()))?
            .trim()
            .parse()
            .map_err(|e| perr(format!("vertex count: {e}")))?;
        let mut verts = Vec::with_capacity(k);
        for i in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| perr(format!("expected {k} vertices, file ends after {i}")))?;
            let mut it = line.split_whitespace();
            let mut coord = |name| {
                it.next()
                    .ok_or_else(|| perr(format!("vertex {i}: missing {name}")))?
                    .parse::<f64>()
                    .map_err(|e| perr(format!("vertex {i} {name}: {e}")))
            };
            let x = coord("x")?;
            let y = coord("y")?;
            verts.push(Vec2::new(x, y));
        }
        Self::new(verts)
    }

    /// Writes the interface in the format read by [`read_text`](Self::read_text).
    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.verts.len());
        for v in &self.verts {
            let _ = writeln!(out, "{:.17e} {:.17e}", v.x, v.y);
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Writes the polygon as a legacy-ASCII VTK polydata snapshot, with the
    /// vertex curvature attached as point data when it is computable.
    pub fn write_vtk(&self, path: impl AsRef<Path>) -> Result<()> {
        let k = self.verts.len();
        let mut out = String::new();
        out.push_str("# vtk DataFile Version 3.0\ninterface\nASCII\nDATASET POLYDATA\n");
        let _ = writeln!(out, "POINTS {k} double");
        for v in &self.verts {
            let _ = writeln!(out, "{:.17e} {:.17e} 0.0", v.x, v.y);
        }
        let _ = writeln!(out, "LINES {k} {}", 3 * k);
        for s in &self.segs {
            let _ = writeln!(out, "2 {} {}", s[0], s[1]);
        }
        if let Ok(kappa) = self.solve_discrete_curvature() {
            let _ = writeln!(out, "POINT_DATA {k}");
            out.push_str("SCALARS curvature double 1\nLOOKUP_TABLE default\n");
            for val in kappa {
                let _ = writeln!(out, "{val:.17e}");
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Signed area of a vertex loop (shoelace formula); positive when the loop
/// is counter-clockwise.
pub fn shoelace(verts: &[Vec2]) -> f64 {
    let k = verts.len();
    let mut s = 0.0;
    for j in 0..k {
        s += cross2(verts[j], verts[(j + 1) % k]);
    }
    0.5 * s
}

/// Proper intersection test for segments `ab` and `cd` (touching endpoints
/// count as intersection; callers exclude adjacent segments beforehand).
fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = cross2(b - a, c - a);
    let d2 = cross2(b - a, d - a);
    let d3 = cross2(d - c, a - c);
    let d4 = cross2(d - c, b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    // Collinear overlap / endpoint-on-segment cases.
    let on = |p: Vec2, q: Vec2, r: Vec2| {
        cross2(q - p, r - p) == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(a, b, c) || on(a, b, d) || on(c, d, a) || on(c, d, b)
}
