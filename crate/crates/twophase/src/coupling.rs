//! Interface/bulk transfer operators.
//!
//! Everything that pairs interface quantities with bulk finite element
//! functions lives here:
//!
//! * [`CutDecomposition`] — for unfitted meshes, the partition of every
//!   interface segment into pieces owned by single bulk elements, so line
//!   quadrature sees only smooth integrands;
//! * [`NormalCoupling`] — the matrix `C` with entries
//!   `C[i][k] = ∫_Γ φ_k ν · χ_i ds` pairing the piecewise linear interface
//!   hat functions `φ_k` with the bulk velocity basis `χ_i` through the
//!   outward unit normal `ν` of the enclosed phase. The same matrix enters
//!   the momentum equation (as `−γ C`, the surface tension force) and the
//!   kinematic equation (as `−Cᵀ`, the normal-velocity transfer). Inserting
//!   one assembly in both places is what cancels the coupling terms exactly
//!   in the discrete energy estimate.
//! * the pressure enrichment column `∮_Γ χ_i · ν ds`, the row sums of `C`
//!   over the interface vertices. Testing the divergence constraint with the
//!   indicator of the enclosed phase region forces `∮_Γ U·ν ds = 0`, which
//!   combined with the kinematic rows makes the enclosed volume exactly
//!   conserved; computing the column as row sums of `C` keeps that chain of
//!   identities exact in floating point as well.
//! * block insertion helpers for the interface part of the coupled systems
//!   ([`add_kinematic_rows`], [`add_curvature_normal_mass`],
//!   [`add_surface_stiffness`]) — the first two write a matrix and its exact
//!   transpose from one shared weight vector;
//! * [`integrate_bubble`] — integration of bulk fields over the region
//!   enclosed by the interface polygon, exact for the polygonal geometry
//!   (used for benchmark quantities and audits, not for the schemes
//!   themselves).

use crate::fem::elements::{barycentric_coords, p2_values};
use crate::fem::quadrature::{tri_rule, SEG_GAUSS_3};
use crate::fem::solver::SparseSystem;
use crate::fem::space::MixedSpace;
use crate::interface::InterfaceMesh;
use crate::mesh::{segment_triangle_interval, BulkMesh, Phase, SegmentBins, TriClass};
use crate::{cross2, Error, Result, Vec2};

/// One piece of an interface segment lying inside a single bulk element:
/// the parameter range `[t0, t1]` of the segment (with `t = 0` at its first
/// vertex) together with the owning element.
#[derive(Debug, Clone, Copy)]
pub struct CutPiece {
    /// Owning bulk element.
    pub tri: usize,
    /// Start parameter along the segment.
    pub t0: f64,
    /// End parameter along the segment.
    pub t1: f64,
}

/// Partition of every interface segment into element-owned pieces.
///
/// By construction the pieces of each segment tile `[0, 1]` exactly (the
/// break points telescope), so the decomposed length always equals the
/// polygon length; the validated property is that the midpoint of every
/// piece actually lies in its owning element.
#[derive(Debug, Clone)]
pub struct CutDecomposition {
    per_seg: Vec<Vec<CutPiece>>,
}

impl CutDecomposition {
    /// Decomposes the interface polygon against a bulk triangulation.
    ///
    /// Fails if some part of a segment is not covered by any element (the
    /// interface left the domain) — detected through the piece midpoints.
    pub fn build(bulk: &BulkMesh, gamma: &InterfaceMesh) -> Result<CutDecomposition> {
        let snap = bulk.snap_tol();
        let k = gamma.segment_count();
        // Candidate (element, interval) pairs per segment, gathered in one
        // pass over the elements with the same binned search and the same
        // snapped interval predicate as element classification.
        let mut cands: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); k];
        let mut bins = SegmentBins::build(gamma, snap);
        for t in 0..bulk.tri_count() {
            let p = bulk.tri_verts(t);
            let (mut tlo, mut thi) = (p[0], p[0]);
            for q in &p[1..] {
                tlo.x = tlo.x.min(q.x);
                tlo.y = tlo.y.min(q.y);
                thi.x = thi.x.max(q.x);
                thi.y = thi.y.max(q.y);
            }
            for j in bins.query(tlo, thi) {
                let [a, b] = gamma.segment(j);
                let (qa, qb) = (gamma.vertices()[a], gamma.vertices()[b]);
                if let Some((t0, t1)) = segment_triangle_interval(p, qa, qb, snap) {
                    cands[j].push((t, t0.max(0.0), t1.min(1.0)));
                }
            }
        }

        let mut per_seg = Vec::with_capacity(k);
        for j in 0..k {
            let len = gamma.segment_length(j);
            let tol = snap / len;
            // Interior break points: candidate interval ends, deduplicated
            // at parameter distance `tol` (= the physical snap length).
            let mut cuts: Vec<f64> = cands[j]
                .iter()
                .flat_map(|&(_, t0, t1)| [t0, t1])
                .filter(|&t| t > tol && t < 1.0 - tol)
                .collect();
            cuts.sort_unstable_by(f64::total_cmp);
            let mut bps = vec![0.0];
            for t in cuts {
                if t - bps.last().unwrap() > tol {
                    bps.push(t);
                }
            }
            bps.push(1.0);

            let mut pieces = Vec::with_capacity(bps.len() - 1);
            for w in bps.windows(2) {
                let (ta, tb) = (w[0], w[1]);
                let tm = 0.5 * (ta + tb);
                // Deepest-containing candidate: robust when the fuzzed
                // intervals of neighboring elements overlap slightly.
                let mut best: Option<(usize, f64)> = None;
                for &(tri, t0, t1) in &cands[j] {
                    let depth = (tm - t0).min(t1 - tm);
                    if depth >= -tol && best.map_or(true, |(_, d)| depth > d) {
                        best = Some((tri, depth));
                    }
                }
                let Some((tri, _)) = best else {
                    return Err(Error::Geometry(format!(
                        "interface segment {j} is not covered by the bulk mesh \
                         near parameter {tm:.6} (interface outside the domain?)"
                    )));
                };
                pieces.push(CutPiece { tri, t0: ta, t1: tb });
            }
            per_seg.push(pieces);
        }
        Ok(CutDecomposition { per_seg })
    }

    /// Pieces of segment `j`, ordered by parameter.
    pub fn pieces(&self, j: usize) -> &[CutPiece] {
        &self.per_seg[j]
    }

    /// Number of decomposed segments.
    pub fn segment_count(&self) -> usize {
        self.per_seg.len()
    }

    /// Total number of pieces over all segments.
    pub fn piece_count(&self) -> usize {
        self.per_seg.iter().map(Vec::len).sum()
    }
}

/// The interface/velocity coupling matrix
/// `C[i][k] = ∫_Γ φ_k ν · χ_i ds`
/// (interface hat function `φ_k`, outward unit normal `ν`, bulk velocity
/// basis function `χ_i`), stored as merged sparse triplets, together with
/// its row sums over `k` — the pressure enrichment column
/// `∮_Γ χ_i · ν ds`.
///
/// Both schemes insert this one assembly twice: scaled by `−γ` into the
/// momentum rows (surface tension) and transposed into the kinematic rows
/// (normal velocity transfer). Entries touching constrained wall dofs are
/// kept here and filtered at insertion time by [`SparseSystem::add`].
pub struct NormalCoupling {
    velocity_dofs: usize,
    vertex_count: usize,
    /// `(velocity dof, interface vertex, value)`, sorted by vertex then dof.
    trips: Vec<(u32, u32, f64)>,
    col: Vec<f64>,
}

impl NormalCoupling {
    /// Assembles the coupling on an unfitted mesh from a cut decomposition
    /// of the interface.
    pub fn assemble_unfitted(
        bulk: &BulkMesh,
        space: &MixedSpace,
        gamma: &InterfaceMesh,
        cut: &CutDecomposition,
    ) -> NormalCoupling {
        assert_eq!(cut.segment_count(), gamma.segment_count());
        Self::assemble(bulk, space, gamma, |j| cut.pieces(j).to_vec())
    }

    /// Assembles the coupling on a fitted mesh, where interface segment `j`
    /// is an element edge traced from its inner-phase element.
    ///
    /// `gamma` must be the interface extracted from the same mesh (same
    /// segment count and vertex positions).
    pub fn assemble_fitted(
        bulk: &BulkMesh,
        space: &MixedSpace,
        gamma: &InterfaceMesh,
    ) -> Result<NormalCoupling> {
        let data = bulk
            .fitted()
            .ok_or_else(|| Error::InvalidArgument("mesh is not fitted to an interface".into()))?;
        if data.seg_tri_inner.len() != gamma.segment_count() {
            return Err(Error::InvalidArgument(format!(
                "interface has {} segments but the fitted mesh carries {}",
                gamma.segment_count(),
                data.seg_tri_inner.len()
            )));
        }
        for (k, &v) in data.gamma_vertex.iter().enumerate() {
            debug_assert!(
                (bulk.vertices()[v] - gamma.vertices()[k]).norm() <= bulk.snap_tol(),
                "interface vertex {k} does not match its bulk vertex"
            );
        }
        Ok(Self::assemble(bulk, space, gamma, |j| {
            vec![CutPiece { tri: data.seg_tri_inner[j], t0: 0.0, t1: 1.0 }]
        }))
    }

    fn assemble(
        bulk: &BulkMesh,
        space: &MixedSpace,
        gamma: &InterfaceMesh,
        pieces_of: impl Fn(usize) -> Vec<CutPiece>,
    ) -> NormalCoupling {
        let mut trips: Vec<(u32, u32, f64)> = Vec::new();
        for j in 0..gamma.segment_count() {
            let [va, vb] = gamma.segment(j);
            let p0 = gamma.vertices()[va];
            let p1 = gamma.vertices()[vb];
            let nu = gamma.unit_normal(j);
            let seg_len = gamma.segment_length(j);
            for piece in pieces_of(j) {
                let tri_pts = bulk.tri_verts(piece.tri);
                let nodes = space.velocity_elem_nodes(bulk, piece.tri);
                let plen = (piece.t1 - piece.t0) * seg_len;
                for &(xi, wg) in &SEG_GAUSS_3 {
                    let t = piece.t0 + xi * (piece.t1 - piece.t0);
                    let x = p0 + t * (p1 - p0);
                    let n = p2_values(barycentric_coords(tri_pts, x));
                    let w = wg * plen;
                    for (a, &na) in n.iter().enumerate() {
                        for c in 0..2 {
                            let dof = space.vdof(nodes[a], c) as u32;
                            let v = w * nu[c] * na;
                            trips.push((dof, va as u32, v * (1.0 - t)));
                            trips.push((dof, vb as u32, v * t));
                        }
                    }
                }
            }
        }
        // Merge duplicates in a deterministic order (vertex-major).
        trips.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(trips.len() / 4);
        for (dof, k, v) in trips {
            match merged.last_mut() {
                Some((d, kk, acc)) if *d == dof && *kk == k => *acc += v,
                _ => merged.push((dof, k, v)),
            }
        }
        let mut col = vec![0.0; space.velocity_dofs()];
        for &(dof, _, v) in &merged {
            col[dof as usize] += v;
        }
        NormalCoupling {
            velocity_dofs: space.velocity_dofs(),
            vertex_count: gamma.vertex_count(),
            trips: merged,
            col,
        }
    }

    /// Number of bulk velocity dofs (rows).
    pub fn velocity_dofs(&self) -> usize {
        self.velocity_dofs
    }

    /// Number of interface vertices (columns).
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Adds `scale · C` at rows `u_off + i`, columns `k_off + k`.
    pub fn add_to(&self, sys: &mut SparseSystem, u_off: usize, k_off: usize, scale: f64) {
        for &(dof, k, v) in &self.trips {
            sys.add(u_off + dof as usize, k_off + k as usize, scale * v);
        }
    }

    /// Adds `scale · Cᵀ` at rows `k_off + k`, columns `u_off + i` — the
    /// exact transpose of [`add_to`](Self::add_to) entry by entry.
    pub fn add_transpose_to(&self, sys: &mut SparseSystem, k_off: usize, u_off: usize, scale: f64) {
        for &(dof, k, v) in &self.trips {
            sys.add(k_off + k as usize, u_off + dof as usize, scale * v);
        }
    }

    /// `C κ`: the surface tension force vector for vertex curvatures `κ`.
    pub fn apply(&self, kappa: &[f64]) -> Vec<f64> {
        assert_eq!(kappa.len(), self.vertex_count);
        let mut out = vec![0.0; self.velocity_dofs];
        for &(dof, k, v) in &self.trips {
            out[dof as usize] += v * kappa[k as usize];
        }
        out
    }

    /// `Cᵀ u`: per-vertex weighted normal velocities `∫_Γ φ_k ν·u ds`.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.velocity_dofs);
        let mut out = vec![0.0; self.vertex_count];
        for &(dof, k, v) in &self.trips {
            out[k as usize] += v * u[dof as usize];
        }
        out
    }

    /// The pressure enrichment column `∮_Γ χ_i · ν ds`, computed as the row
    /// sums of `C` so that `(enrichment) · u = Σ_k (Cᵀ u)_k` holds by
    /// construction.
    pub fn enrichment_column(&self) -> &[f64] {
        &self.col
    }
}

/// Adds the kinematic rows `scale · E` with `E[k][2k + c] = w_k[c]`: row `k`
/// pairs the position unknowns of interface vertex `k` with its kinematic
/// weight vector (see
/// [`kinematic_vertex_weights`](InterfaceMesh::kinematic_vertex_weights)).
pub fn add_kinematic_rows(
    sys: &mut SparseSystem,
    weights: &[Vec2],
    row_off: usize,
    x_off: usize,
    scale: f64,
) {
    for (k, w) in weights.iter().enumerate() {
        sys.add(row_off + k, x_off + 2 * k, scale * w.x);
        sys.add(row_off + k, x_off + 2 * k + 1, scale * w.y);
    }
}

/// Adds the curvature-equation normal mass `scale · Eᵀ` with
/// `Eᵀ[2k + c][k] = w_k[c]` — the exact transpose of
/// [`add_kinematic_rows`] built from the same weight vector. Pairing the
/// two blocks from one vector is what cancels them in the energy estimate.
pub fn add_curvature_normal_mass(
    sys: &mut SparseSystem,
    weights: &[Vec2],
    row_off: usize,
    kappa_off: usize,
    scale: f64,
) {
    for (k, w) in weights.iter().enumerate() {
        sys.add(row_off + 2 * k, kappa_off + k, scale * w.x);
        sys.add(row_off + 2 * k + 1, kappa_off + k, scale * w.y);
    }
}

/// Adds the surface stiffness block
/// `scale · ⟨∇_s ·, ∇_s ·⟩` of the current polygon at offset `x_off`
/// (2 dofs per interface vertex, componentwise graph Laplacian weighted by
/// inverse segment lengths).
pub fn add_surface_stiffness(
    sys: &mut SparseSystem,
    gamma: &InterfaceMesh,
    x_off: usize,
    scale: f64,
) {
    for j in 0..gamma.segment_count() {
        let [a, b] = gamma.segment(j);
        let w = scale / gamma.segment_length(j);
        for c in 0..2 {
            let (da, db) = (x_off + 2 * a + c, x_off + 2 * b + c);
            sys.add(da, da, w);
            sys.add(db, db, w);
            sys.add(da, db, -w);
            sys.add(db, da, -w);
        }
    }
}

/// Integrates `f(element, barycentric, position)` over the region enclosed
/// by the interface polygon, exactly for the polygonal geometry (up to the
/// rule degree in `f`).
///
/// On a fitted mesh the region is the union of the inner-phase elements
/// (`classes` is ignored). On an unfitted mesh the element classification
/// against the same polygon must be supplied; cut elements are handled by
/// clipping the polygon to the element and integrating over a signed fan,
/// which is exact even for non-convex polygon pieces.
pub fn integrate_bubble(
    bulk: &BulkMesh,
    gamma: &InterfaceMesh,
    classes: Option<&[TriClass]>,
    degree: usize,
    mut f: impl FnMut(usize, (f64, f64, f64), Vec2) -> f64,
) -> Result<f64> {
    let rule = tri_rule(degree);
    let mut total = 0.0;
    let whole = |t: usize, f: &mut dyn FnMut(usize, (f64, f64, f64), Vec2) -> f64| -> f64 {
        let p = bulk.tri_verts(t);
        let area = bulk.signed_area(t);
        let mut s = 0.0;
        for (&(l0, l1, l2), &w) in rule.points.iter().zip(rule.weights) {
            let x = l0 * p[0] + l1 * p[1] + l2 * p[2];
            s += area * w * f(t, (l0, l1, l2), x);
        }
        s
    };
    if let Some(data) = bulk.fitted() {
        for t in 0..bulk.tri_count() {
            if data.phase[t] == Phase::Inner {
                total += whole(t, &mut f);
            }
        }
        return Ok(total);
    }
    let classes = classes.ok_or_else(|| {
        Error::InvalidArgument("unfitted bubble integration needs element classes".into())
    })?;
    if classes.len() != bulk.tri_count() {
        return Err(Error::InvalidArgument(format!(
            "{} element classes for {} elements",
            classes.len(),
            bulk.tri_count()
        )));
    }
    for t in 0..bulk.tri_count() {
        match classes[t] {
            TriClass::Inner => total += whole(t, &mut f),
            TriClass::Outer => {}
            TriClass::Cut => {
                let p = bulk.tri_verts(t);
                let clip = clip_polygon_to_triangle(gamma.vertices(), p);
                if clip.len() < 3 {
                    continue;
                }
                // Signed fan: correct for the slivers and double-backs a
                // non-convex polygon piece can produce.
                let o = clip.iter().sum::<Vec2>() / clip.len() as f64;
                for i in 0..clip.len() {
                    let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
                    let s = 0.5 * cross2(a - o, b - o);
                    if s == 0.0 {
                        continue;
                    }
                    for (&(l0, l1, l2), &w) in rule.points.iter().zip(rule.weights) {
                        let x = l0 * o + l1 * a + l2 * b;
                        total += s * w * f(t, barycentric_coords(p, x), x);
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Sutherland–Hodgman clip of a polygon against a counter-clockwise
/// triangle. The output boundary may contain degenerate double-backs when
/// the subject polygon is non-convex; signed-area consumers handle those
/// exactly.
fn clip_polygon_to_triangle(poly: &[Vec2], tri: [Vec2; 3]) -> Vec<Vec2> {
    let mut cur = poly.to_vec();
    for i in 0..3 {
        let a = tri[i];
        let edge = tri[(i + 1) % 3] - a;
        let mut next = Vec::with_capacity(cur.len() + 4);
        for k in 0..cur.len() {
            let p = cur[k];
            let q = cur[(k + 1) % cur.len()];
            let dp = cross2(edge, p - a);
            let dq = cross2(edge, q - a);
            if dp >= 0.0 {
                next.push(p);
            }
            if (dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0) {
                next.push(p + (dp / (dp - dq)) * (q - p));
            }
        }
        cur = next;
        if cur.len() < 3 {
            return Vec::new();
        }
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::space::{MixedSpace, PressureSpace};
    use crate::fixtures::picture_frame_mesh;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn unfitted_setup() -> (BulkMesh, MixedSpace, InterfaceMesh, CutDecomposition) {
        let bulk = BulkMesh::criss_cross(8, 16, Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0));
        let space = MixedSpace::new(&bulk, PressureSpace::P1);
        let gamma = InterfaceMesh::circle(Vec2::new(0.513, 0.497), 0.23, 48).unwrap();
        let cut = CutDecomposition::build(&bulk, &gamma).unwrap();
        (bulk, space, gamma, cut)
    }

    #[test]
    fn cut_pieces_tile_segments_and_sit_in_their_elements() {
        let (bulk, _, gamma, cut) = unfitted_setup();
        assert!(cut.piece_count() > gamma.segment_count());
        for j in 0..gamma.segment_count() {
            let pieces = cut.pieces(j);
            assert!(!pieces.is_empty());
            // Exact tiling of [0, 1] (telescoping break points).
            assert_eq!(pieces[0].t0, 0.0);
            assert_eq!(pieces[pieces.len() - 1].t1, 1.0);
            for w in pieces.windows(2) {
                assert_eq!(w[0].t1, w[1].t0);
            }
            let [a, b] = gamma.segment(j);
            let (p0, p1) = (gamma.vertices()[a], gamma.vertices()[b]);
            for piece in pieces {
                assert!(piece.t1 > piece.t0);
                let x = p0 + 0.5 * (piece.t0 + piece.t1) * (p1 - p0);
                let (l0, l1, l2) = barycentric_coords(bulk.tri_verts(piece.tri), x);
                assert!(l0.min(l1).min(l2) > -1e-10, "midpoint outside owner");
            }
        }
    }

    #[test]
    fn interface_outside_the_mesh_is_rejected() {
        let bulk = BulkMesh::criss_cross(4, 4, Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        let gamma = InterfaceMesh::circle(Vec2::new(0.9, 0.5), 0.3, 16).unwrap();
        assert!(CutDecomposition::build(&bulk, &gamma).is_err());
    }

    /// For a constant velocity `e_c`, `(Cᵀ u)_k = ∫_Γ φ_k ν_c ds`, which on a
    /// polygon equals the `c`-component of the mean of the two orientation
    /// vectors at vertex `k` — exactly, so this pins traces, hats, weights,
    /// and the piece bookkeeping at once.
    fn check_constant_field_identity(
        space: &MixedSpace,
        gamma: &InterfaceMesh,
        coupling: &NormalCoupling,
    ) {
        let k = gamma.vertex_count();
        for c in 0..2 {
            let mut u = vec![0.0; space.velocity_dofs()];
            for n in 0..space.velocity_node_count() {
                u[space.vdof(n, c)] = 1.0;
            }
            let got = coupling.apply_transpose(&u);
            let mut sum = 0.0;
            for v in 0..k {
                let w =
                    0.5 * (gamma.orientation_vector((v + k - 1) % k) + gamma.orientation_vector(v));
                assert_abs_diff_eq!(got[v], w[c], epsilon = 1e-13);
                sum += got[v];
            }
            // Closed polygon: the orientation vectors telescope to zero.
            assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-12);
            // Same closure seen through the enrichment column.
            let through_col: f64 = coupling
                .enrichment_column()
                .iter()
                .zip(&u)
                .map(|(a, b)| a * b)
                .sum();
            assert_abs_diff_eq!(through_col, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_fields_reproduce_orientation_vectors_unfitted() {
        let (bulk, space, gamma, cut) = unfitted_setup();
        let coupling = NormalCoupling::assemble_unfitted(&bulk, &space, &gamma, &cut);
        check_constant_field_identity(&space, &gamma, &coupling);
    }

    #[test]
    fn constant_fields_reproduce_orientation_vectors_fitted() {
        let bulk = picture_frame_mesh();
        let space = MixedSpace::new(&bulk, PressureSpace::P1P0);
        let gamma = bulk.fitted_interface().unwrap();
        let coupling = NormalCoupling::assemble_fitted(&bulk, &space, &gamma).unwrap();
        check_constant_field_identity(&space, &gamma, &coupling);

        // Hand values on the unit square interface (1,1)…(2,2): at each
        // corner the mean of the incident orientation vectors has components
        // ±1/2 pointing away from the square.
        let got_x = coupling.apply_transpose(&{
            let mut u = vec![0.0; space.velocity_dofs()];
            for n in 0..space.velocity_node_count() {
                u[space.vdof(n, 0)] = 1.0;
            }
            u
        });
        assert_abs_diff_eq!(got_x[0], -0.5, epsilon = 1e-14); // (1,1)
        assert_abs_diff_eq!(got_x[1], 0.5, epsilon = 1e-14); // (2,1)
        assert_abs_diff_eq!(got_x[2], 0.5, epsilon = 1e-14); // (2,2)
        assert_abs_diff_eq!(got_x[3], -0.5, epsilon = 1e-14); // (1,2)
    }

    /// Divergence-theorem consistency between the coupling matrix and the
    /// bubble quadrature: for a globally quadratic velocity,
    /// `Σ_k (Cᵀ u)_k = ∮_Γ u·ν ds = ∫_bubble ∇·u dx`, all three exactly.
    fn check_divergence_consistency(
        bulk: &BulkMesh,
        space: &MixedSpace,
        gamma: &InterfaceMesh,
        coupling: &NormalCoupling,
        classes: Option<&[TriClass]>,
    ) {
        let u = space.interpolate_velocity(bulk, |p| {
            Vec2::new(p.x * p.x - 0.3 * p.x * p.y, p.y * p.y + p.x)
        });
        let boundary: f64 = coupling.apply_transpose(&u).iter().sum();
        let through_col: f64 = coupling
            .enrichment_column()
            .iter()
            .zip(&u)
            .map(|(a, b)| a * b)
            .sum();
        let bulk_int =
            integrate_bubble(bulk, gamma, classes, 4, |_, _, p| 2.0 * p.x + 1.7 * p.y).unwrap();
        assert_relative_eq!(boundary, bulk_int, max_relative = 1e-12);
        assert_relative_eq!(through_col, bulk_int, max_relative = 1e-12);
    }

    #[test]
    fn coupling_obeys_divergence_theorem_unfitted() {
        let (bulk, space, gamma, cut) = unfitted_setup();
        let coupling = NormalCoupling::assemble_unfitted(&bulk, &space, &gamma, &cut);
        let classes = bulk.classify(&gamma);
        check_divergence_consistency(&bulk, &space, &gamma, &coupling, Some(&classes));
    }

    #[test]
    fn coupling_obeys_divergence_theorem_fitted() {
        let bulk = picture_frame_mesh();
        let space = MixedSpace::new(&bulk, PressureSpace::P1P0);
        let gamma = bulk.fitted_interface().unwrap();
        let coupling = NormalCoupling::assemble_fitted(&bulk, &space, &gamma).unwrap();
        check_divergence_consistency(&bulk, &space, &gamma, &coupling, None);
    }

    #[test]
    fn enrichment_column_matches_inner_divergence_integrals_fitted() {
        // On a fitted mesh the enclosed region is a union of elements, so
        // the line integral ∮_Γ χ_i·ν ds must equal Σ_inner ∫_T ∇·χ_i dx.
        use crate::fem::elements::{grad_lambda, p2_grads};
        let bulk = picture_frame_mesh();
        let space = MixedSpace::new(&bulk, PressureSpace::P1P0);
        let gamma = bulk.fitted_interface().unwrap();
        let coupling = NormalCoupling::assemble_fitted(&bulk, &space, &gamma).unwrap();

        let mut expect = vec![0.0; space.velocity_dofs()];
        let data = bulk.fitted().unwrap();
        let rule = tri_rule(2);
        for t in 0..bulk.tri_count() {
            if data.phase[t] != Phase::Inner {
                continue;
            }
            let (gl, area) = grad_lambda(bulk.tri_verts(t));
            let nodes = space.velocity_elem_nodes(&bulk, t);
            for (&l, &w) in rule.points.iter().zip(rule.weights) {
                let g = p2_grads(l, gl);
                for a in 0..6 {
                    expect[space.vdof(nodes[a], 0)] += area * w * g[a].x;
                    expect[space.vdof(nodes[a], 1)] += area * w * g[a].y;
                }
            }
        }
        for (&got, &want) in coupling.enrichment_column().iter().zip(&expect) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-13);
        }
    }

    /// Exact moments of a counter-clockwise polygon up to second order.
    fn polygon_moment(verts: &[Vec2], p: u32, q: u32) -> f64 {
        let mut s = 0.0;
        for i in 0..verts.len() {
            let a = verts[i];
            let b = verts[(i + 1) % verts.len()];
            let cr = cross2(a, b);
            s += cr * match (p, q) {
                (0, 0) => 1.0 / 2.0,
                (1, 0) => (a.x + b.x) / 6.0,
                (0, 1) => (a.y + b.y) / 6.0,
                (2, 0) => (a.x * a.x + a.x * b.x + b.x * b.x) / 12.0,
                (0, 2) => (a.y * a.y + a.y * b.y + b.y * b.y) / 12.0,
                (1, 1) => (2.0 * a.x * a.y + a.x * b.y + b.x * a.y + 2.0 * b.x * b.y) / 24.0,
                _ => unreachable!(),
            };
        }
        s
    }

    #[test]
    fn bubble_integrals_match_polygon_moments_unfitted() {
        let (bulk, _, gamma, _) = unfitted_setup();
        let classes = bulk.classify(&gamma);
        let cases: [(u32, u32, fn(Vec2) -> f64); 6] = [
            (0, 0, |_| 1.0),
            (1, 0, |p| p.x),
            (0, 1, |p| p.y),
            (2, 0, |p| p.x * p.x),
            (0, 2, |p| p.y * p.y),
            (1, 1, |p| p.x * p.y),
        ];
        for (p, q, f) in cases {
            let got =
                integrate_bubble(&bulk, &gamma, Some(&classes), 4, |_, _, x| f(x)).unwrap();
            let want = polygon_moment(gamma.vertices(), p, q);
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn bubble_integrals_fitted_inner_square() {
        let bulk = picture_frame_mesh();
        let gamma = bulk.fitted_interface().unwrap();
        let area = integrate_bubble(&bulk, &gamma, None, 1, |_, _, _| 1.0).unwrap();
        assert_relative_eq!(area, 1.0, max_relative = 1e-14);
        let my = integrate_bubble(&bulk, &gamma, None, 2, |_, _, p| p.y).unwrap();
        assert_relative_eq!(my, 1.5, max_relative = 1e-14);
        let mx2 = integrate_bubble(&bulk, &gamma, None, 2, |_, _, p| p.x * p.x).unwrap();
        assert_relative_eq!(mx2, 7.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn interface_blocks_are_exact_transposes_and_match_forms() {
        let gamma = InterfaceMesh::circle(Vec2::new(0.0, 0.0), 1.0, 9).unwrap();
        let k = gamma.vertex_count();
        let new_pos: Vec<Vec2> = gamma
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| v + Vec2::new(0.1 * (i as f64).sin(), 0.07 * (i as f64).cos()))
            .collect();
        let weights = gamma.kinematic_vertex_weights(&new_pos);

        // Layout: [kinematic rows: k][position dofs: 2k][curvature dofs: k].
        let mut sys = SparseSystem::new(4 * k);
        add_kinematic_rows(&mut sys, &weights, 0, k, 1.0);
        add_curvature_normal_mass(&mut sys, &weights, k, 3 * k, 1.0);
        add_surface_stiffness(&mut sys, &gamma, k, 1.0);

        let mut vec = vec![0.0; 4 * k];
        let kappa: Vec<f64> = (0..k).map(|i| 0.3 + 0.1 * (i as f64).sin()).collect();
        for i in 0..k {
            vec[3 * k + i] = kappa[i];
            vec[k + 2 * i] = new_pos[i].x - gamma.vertices()[i].x;
            vec[k + 2 * i + 1] = new_pos[i].y - gamma.vertices()[i].y;
        }
        let out = sys.matvec(&vec);

        // Kinematic rows on the displacement sum to the exact area change.
        let total: f64 = out[..k].iter().sum();
        let darea = crate::interface::shoelace(&new_pos) - gamma.enclosed_area();
        assert_abs_diff_eq!(total, darea, epsilon = 1e-13);

        // Transpose identity: κᵀ (E d) = (Eᵀ κ) · d with the same weights.
        let kappa_dot: f64 = (0..k).map(|i| kappa[i] * out[i]).sum();
        let disp = &vec[k..3 * k];
        let mass_rows = &out[k..3 * k];
        // out[k..3k] = S d + Eᵀ κ; subtract the stiffness action to isolate Eᵀ κ.
        let x: Vec<Vec2> = (0..k)
            .map(|i| Vec2::new(disp[2 * i], disp[2 * i + 1]))
            .collect();
        let mut et_dot = 0.0;
        for i in 0..k {
            let sx: Vec2 = {
                let prev = (i + k - 1) % k;
                let next = (i + 1) % k;
                let lp = gamma.segment_length(prev);
                let ln = gamma.segment_length(i);
                (x[i] - x[prev]) / lp + (x[i] - x[next]) / ln
            };
            et_dot += (Vec2::new(mass_rows[2 * i], mass_rows[2 * i + 1]) - sx)
                .dot(&Vec2::new(disp[2 * i], disp[2 * i + 1]));
        }
        assert_relative_eq!(kappa_dot, et_dot, max_relative = 1e-12);

        // Stiffness block reproduces the surface Dirichlet form on fields.
        let mut sys2 = SparseSystem::new(2 * k);
        add_surface_stiffness(&mut sys2, &gamma, 0, 1.0);
        let xv: Vec<f64> = x.iter().flat_map(|v| [v.x, v.y]).collect();
        let sx = sys2.matvec(&xv);
        let quad: f64 = xv.iter().zip(&sx).map(|(a, b)| a * b).sum();
        assert_relative_eq!(
            quad,
            gamma.surface_stiffness(&x, &x),
            max_relative = 1e-12
        );
        // Constant fields lie in the stiffness kernel.
        let ones: Vec<f64> = (0..2 * k).map(|i| if i % 2 == 0 { 1.0 } else { -2.0 }).collect();
        for v in sys2.matvec(&ones) {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }
}
