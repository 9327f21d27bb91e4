//! Bulk triangulations of the rectangular flow domain.
//!
//! A [`BulkMesh`] is a conforming triangulation of an axis-aligned rectangle,
//! used in one of two modes:
//!
//! * **unfitted** — the interface polygon moves freely across the fixed
//!   triangulation; [`BulkMesh::classify`] sorts elements into inner, outer,
//!   and cut with respect to a given interface;
//! * **fitted** — the interface is a closed chain of element edges; each
//!   element carries a phase label, and the triangulation moves from step to
//!   step. [`AleMap`] records the motion between two such meshes and exposes
//!   the per-element Jacobians the moving-mesh schemes are built on.
//!
//! The rectangle boundary is classified into no-slip walls (horizontal, both
//! velocity components clamped) and free-slip walls (vertical, only the
//! normal component clamped); corner vertices are clamped fully.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::fem::elements::{grad_lambda, p2_values, P2_EDGE_VERTS};
use crate::fem::quadrature::tri_rule;
use crate::interface::InterfaceMesh;
use crate::{cross2, Error, Mat2, Result, Vec2};

/// Phase label of a fitted-mesh element: inside or outside the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// The phase enclosed by the interface (the bubble).
    Inner,
    /// The surrounding phase.
    Outer,
}

/// Classification of an unfitted element against an interface polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriClass {
    /// Entirely inside the interface.
    Inner,
    /// Entirely outside.
    Outer,
    /// Crossed by at least one interface segment.
    Cut,
}

/// Boundary condition kind carried by a wall of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallBc {
    /// Both velocity components vanish (horizontal walls).
    NoSlip,
    /// Only the wall-normal component vanishes (vertical walls).
    FreeSlip,
}

/// Extra structure carried by a fitted mesh: per-element phases and the
/// identification of the interface with a chain of element edges.
#[derive(Debug, Clone)]
pub struct FittedData {
    /// Phase of each element.
    pub phase: Vec<Phase>,
    /// Bulk vertex index of each interface vertex, in interface order
    /// (counter-clockwise around the inner phase).
    pub gamma_vertex: Vec<usize>,
    /// Bulk edge index carrying interface segment `j`.
    pub seg_edge: Vec<usize>,
    /// Inner-phase element incident to interface segment `j`.
    pub seg_tri_inner: Vec<usize>,
    /// Outer-phase element incident to interface segment `j`.
    pub seg_tri_outer: Vec<usize>,
}

/// Whether a mesh is used with a free interface or is fitted to one.
#[derive(Debug, Clone)]
pub enum MeshMode {
    Unfitted,
    Fitted(FittedData),
}

/// A conforming triangulation of an axis-aligned rectangle.
#[derive(Debug, Clone)]
pub struct BulkMesh {
    verts: Vec<Vec2>,
    /// Counter-clockwise vertex triples.
    tris: Vec<[usize; 3]>,
    /// Unique edges as sorted vertex pairs.
    edges: Vec<[usize; 2]>,
    /// Edge indices of each element in local order `(0,1), (1,2), (2,0)`.
    tri_edges: Vec<[usize; 3]>,
    /// Incident elements of each edge (one `None` for boundary edges).
    edge_tris: Vec<[Option<usize>; 2]>,
    /// Wall condition of each boundary vertex (`NoSlip` wins at corners).
    vertex_bc: Vec<Option<WallBc>>,
    /// Wall condition of each boundary edge.
    edge_bc: Vec<Option<WallBc>>,
    bbox: (Vec2, Vec2),
    mode: MeshMode,
}

impl BulkMesh {
    /// Builds and validates a mesh from vertices, elements, and mode.
    ///
    /// Element orientation is normalized to counter-clockwise. Fails on
    /// out-of-range or repeated indices, degenerate elements, non-manifold
    /// edges, boundary edges that do not lie on a wall of the bounding
    /// rectangle, and (in fitted mode) on phase labels inconsistent with the
    /// interface chain.
    pub fn new(verts: Vec<Vec2>, mut tris: Vec<[usize; 3]>, mode: MeshMode) -> Result<Self> {
        let nv = verts.len();
        if nv < 3 || tris.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        let mut bbox = (verts[0], verts[0]);
        for v in &verts {
            bbox.0.x = bbox.0.x.min(v.x);
            bbox.0.y = bbox.0.y.min(v.y);
            bbox.1.x = bbox.1.x.max(v.x);
            bbox.1.y = bbox.1.y.max(v.y);
        }
        let snap = 1e-12 * (bbox.1 - bbox.0).norm();

        for (t, tri) in tris.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "element {t} references vertex {v} (mesh has {nv})"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("element {t} repeats a vertex")));
            }
            let a = 0.5 * cross2(verts[tri[1]] - verts[tri[0]], verts[tri[2]] - verts[tri[0]]);
            if a == 0.0 {
                return Err(Error::InvalidMesh(format!("element {t} is degenerate")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut seen = std::collections::HashSet::with_capacity(tris.len());
        for (t, tri) in tris.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            if !seen.insert(key) {
                return Err(Error::InvalidMesh(format!("element {t} is a duplicate")));
            }
        }

        // Edge table; also catches non-manifold connectivity.
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::new();
        let mut tri_edges = vec![[usize::MAX; 3]; tris.len()];
        for (t, tri) in tris.iter().enumerate() {
            for (k, [la, lb]) in P2_EDGE_VERTS.iter().enumerate() {
                let (a, b) = (tri[*la], tri[*lb]);
                let key = [a.min(b), a.max(b)];
                let e = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                tri_edges[t][k] = e;
                let slot = &mut edge_tris[e];
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) is shared by more than two elements",
                        key[0], key[1]
                    )));
                }
            }
        }

        // Classify boundary edges against the rectangle walls.
        let on = |c: f64, wall: f64| (c - wall).abs() <= snap;
        let mut edge_bc = vec![None; edges.len()];
        let mut vertex_bc: Vec<Option<WallBc>> = vec![None; nv];
        for (e, inc) in edge_tris.iter().enumerate() {
            if inc[1].is_some() {
                continue;
            }
            let [a, b] = edges[e];
            let (pa, pb) = (verts[a], verts[b]);
            let bc = if (on(pa.y, bbox.0.y) && on(pb.y, bbox.0.y))
                || (on(pa.y, bbox.1.y) && on(pb.y, bbox.1.y))
            {
                WallBc::NoSlip
            } else if (on(pa.x, bbox.0.x) && on(pb.x, bbox.0.x))
                || (on(pa.x, bbox.1.x) && on(pb.x, bbox.1.x))
            {
                WallBc::FreeSlip
            } else {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge ({a}, {b}) does not lie on a wall of the domain rectangle"
                )));
            };
            edge_bc[e] = Some(bc);
            for v in [a, b] {
                vertex_bc[v] = match (vertex_bc[v], bc) {
                    (Some(WallBc::NoSlip), _) | (_, WallBc::NoSlip) => Some(WallBc::NoSlip),
                    _ => Some(WallBc::FreeSlip),
                };
            }
        }

        let mut mesh = Self {
            verts,
            tris,
            edges,
            tri_edges,
            edge_tris,
            vertex_bc,
            edge_bc,
            bbox,
            mode: MeshMode::Unfitted,
        };
        if let MeshMode::Fitted(data) = mode {
            let data = mesh.validate_fitted(data)?;
            mesh.mode = MeshMode::Fitted(data);
        }
        Ok(mesh)
    }

    /// Checks a fitted mesh's phase labels and interface chain, and derives
    /// the per-segment edge and element lookups.
    fn validate_fitted(&self, data: FittedData) -> Result<FittedData> {
        let FittedData {
            phase,
            gamma_vertex,
            ..
        } = data;
        if phase.len() != self.tris.len() {
            return Err(Error::InvalidMesh(format!(
                "{} phase labels for {} elements",
                phase.len(),
                self.tris.len()
            )));
        }
        let k = gamma_vertex.len();
        if k < 3 {
            return Err(Error::InvalidMesh(
                "fitted interface needs at least 3 vertices".into(),
            ));
        }
        let edge_ids: HashMap<[usize; 2], usize> = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &key)| (key, e))
            .collect();
        let mut seg_edge = Vec::with_capacity(k);
        let mut seg_tri_inner = Vec::with_capacity(k);
        let mut seg_tri_outer = Vec::with_capacity(k);
        let mut is_gamma_edge = vec![false; self.edges.len()];
        for j in 0..k {
            let a = gamma_vertex[j];
            let b = gamma_vertex[(j + 1) % k];
            if a >= self.verts.len() || b >= self.verts.len() {
                return Err(Error::InvalidMesh(format!(
                    "interface vertex map entry {j} out of range"
                )));
            }
            let e = *edge_ids.get(&[a.min(b), a.max(b)]).ok_or_else(|| {
                Error::InvalidMesh(format!(
                    "interface segment {j} ({a}, {b}) is not an element edge"
                ))
            })?;
            is_gamma_edge[e] = true;
            seg_edge.push(e);
            let [t0, t1] = self.edge_tris[e];
            let (t0, t1) = match (t0, t1) {
                (Some(t0), Some(t1)) => (t0, t1),
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "interface segment {j} lies on the domain boundary"
                    )))
                }
            };
            let (inner, outer) = match (phase[t0], phase[t1]) {
                (Phase::Inner, Phase::Outer) => (t0, t1),
                (Phase::Outer, Phase::Inner) => (t1, t0),
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "interface segment {j} does not separate the phases"
                    )))
                }
            };
            // The inner element must lie to the left of the directed segment
            // a→b, otherwise the chain is not counter-clockwise.
            let c = self.tris[inner]
                .into_iter()
                .find(|&v| v != a && v != b)
                .expect("element has a vertex off the edge");
            if cross2(self.verts[b] - self.verts[a], self.verts[c] - self.verts[a]) <= 0.0 {
                return Err(Error::InvalidMesh(
                    "interface chain is not counter-clockwise around the inner phase".into(),
                ));
            }
            seg_tri_inner.push(inner);
            seg_tri_outer.push(outer);
        }
        // Away from the interface, phases must not jump across an edge.
        for (e, inc) in self.edge_tris.iter().enumerate() {
            if let [Some(t0), Some(t1)] = inc {
                if !is_gamma_edge[e] && phase[*t0] != phase[*t1] {
                    let [a, b] = self.edges[e];
                    return Err(Error::InvalidMesh(format!(
                        "phase changes across edge ({a}, {b}) which is not on the interface"
                    )));
                }
            }
        }
        Ok(FittedData {
            phase,
            gamma_vertex,
            seg_edge,
            seg_tri_inner,
            seg_tri_outer,
        })
    }

    /// Uniform criss-cross triangulation of the rectangle `[min, max]`:
    /// `nx × ny` cells, each split into four triangles through its center.
    pub fn criss_cross(nx: usize, ny: usize, min: Vec2, max: Vec2) -> BulkMesh {
        assert!(nx > 0 && ny > 0 && max.x > min.x && max.y > min.y);
        let (dx, dy) = ((max.x - min.x) / nx as f64, (max.y - min.y) / ny as f64);
        let nvg = (nx + 1) * (ny + 1);
        let mut verts = Vec::with_capacity(nvg + nx * ny);
        for j in 0..=ny {
            for i in 0..=nx {
                verts.push(Vec2::new(min.x + i as f64 * dx, min.y + j as f64 * dy));
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                verts.push(Vec2::new(
                    min.x + (i as f64 + 0.5) * dx,
                    min.y + (j as f64 + 0.5) * dy,
                ));
            }
        }
        let mut tris = Vec::with_capacity(4 * nx * ny);
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        for j in 0..ny {
            for i in 0..nx {
                let (a, b) = (vid(i, j), vid(i + 1, j));
                let (c, d) = (vid(i + 1, j + 1), vid(i, j + 1));
                let m = nvg + j * nx + i;
                tris.extend_from_slice(&[[a, b, m], [b, c, m], [c, d, m], [d, a, m]]);
            }
        }
        Self::new(verts, tris, MeshMode::Unfitted).expect("criss-cross mesh is valid")
    }

    /// Vertex positions.
    pub fn vertices(&self) -> &[Vec2] {
        &self.verts
    }

    /// Number of vertices.
    pub fn vertex_count(&self) -> usize {
        self.verts.len()
    }

    /// Element connectivity (counter-clockwise triples).
    pub fn tris(&self) -> &[[usize; 3]] {
        &self.tris
    }

    /// Number of elements.
    pub fn tri_count(&self) -> usize {
        self.tris.len()
    }

    /// Unique edges as sorted vertex pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Number of edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge indices of element `t` in local order `(0,1), (1,2), (2,0)`.
    pub fn tri_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// Elements incident to edge `e` (second entry `None` on the boundary).
    pub fn edge_tris(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_tris[e]
    }

    /// Wall condition of vertex `v`, if it lies on the boundary.
    pub fn vertex_bc(&self, v: usize) -> Option<WallBc> {
        self.vertex_bc[v]
    }

    /// Wall condition of edge `e`, if it lies on the boundary.
    pub fn edge_bc(&self, e: usize) -> Option<WallBc> {
        self.edge_bc[e]
    }

    /// Mesh mode (unfitted, or fitted with its interface data).
    pub fn mode(&self) -> &MeshMode {
        &self.mode
    }

    /// Fitted-mode data, when present.
    pub fn fitted(&self) -> Option<&FittedData> {
        match &self.mode {
            MeshMode::Fitted(d) => Some(d),
            MeshMode::Unfitted => None,
        }
    }

    /// Bounding rectangle `(min, max)` of the mesh (the flow domain).
    pub fn bbox(&self) -> (Vec2, Vec2) {
        self.bbox
    }

    /// Diagonal length of the domain rectangle.
    pub fn diameter(&self) -> f64 {
        (self.bbox.1 - self.bbox.0).norm()
    }

    /// Geometric snapping tolerance used in classification and wall tests.
    pub fn snap_tol(&self) -> f64 {
        1e-12 * self.diameter()
    }

    /// Positions of the three vertices of element `t`.
    pub fn tri_verts(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.tris[t];
        [self.verts[a], self.verts[b], self.verts[c]]
    }

    /// Signed area of element `t` (positive by construction).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.tri_verts(t);
        0.5 * cross2(q - p, r - p)
    }

    /// Centroid of element `t`.
    pub fn centroid(&self, t: usize) -> Vec2 {
        let [p, q, r] = self.tri_verts(t);
        (p + q + r) / 3.0
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.tris.len() {
            let p = self.tri_verts(t);
            for i in 0..3 {
                let u = p[(i + 1) % 3] - p[i];
                let v = p[(i + 2) % 3] - p[i];
                let ang = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
                min = min.min(ang);
            }
        }
        min
    }

    /// Whether mesh quality has degraded enough (smallest angle below 10°)
    /// that a fitted computation should regenerate the mesh.
    pub fn remesh_needed(&self) -> bool {
        self.min_angle() < std::f64::consts::PI / 18.0
    }

    /// Returns a mesh with the same connectivity, markers, and mode but new
    /// vertex positions.
    ///
    /// Fails with [`Error::ElementInversion`] if the motion flattens or
    /// flips an element, and with [`Error::InvalidMesh`] if a boundary
    /// vertex leaves its wall (the mesh motion must slide along walls).
    pub fn with_positions(&self, verts: Vec<Vec2>) -> Result<BulkMesh> {
        if verts.len() != self.verts.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} vertex positions, got {}",
                self.verts.len(),
                verts.len()
            )));
        }
        for (t, tri) in self.tris.iter().enumerate() {
            let area = 0.5 * cross2(verts[tri[1]] - verts[tri[0]], verts[tri[2]] - verts[tri[0]]);
            if area <= 0.0 {
                return Err(Error::ElementInversion { elem: t, area });
            }
        }
        let snap = self.snap_tol();
        for (v, bc) in self.vertex_bc.iter().enumerate() {
            if bc.is_none() {
                continue;
            }
            let old = self.verts[v];
            let new = verts[v];
            let on_wall = |p: Vec2, wall_x: bool| {
                if wall_x {
                    (p.x - self.bbox.0.x).abs() <= snap || (p.x - self.bbox.1.x).abs() <= snap
                } else {
                    (p.y - self.bbox.0.y).abs() <= snap || (p.y - self.bbox.1.y).abs() <= snap
                }
            };
            for wall_x in [true, false] {
                if on_wall(old, wall_x) && !on_wall(new, wall_x) {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {v} moved off its wall"
                    )));
                }
            }
        }
        let mut out = self.clone();
        out.verts = verts;
        Ok(out)
    }

    /// Interface polygon of a fitted mesh, built from the current positions
    /// of the interface chain vertices.
    pub fn fitted_interface(&self) -> Result<InterfaceMesh> {
        let data = self.fitted().ok_or_else(|| {
            Error::InvalidArgument("mesh is not fitted to an interface".into())
        })?;
        InterfaceMesh::from_ccw_loop(
            data.gamma_vertex.iter().map(|&v| self.verts[v]).collect(),
        )
    }

    /// Classifies every element against an interface polygon.
    ///
    /// An element is `Cut` when some interface segment passes through it
    /// with positive length, otherwise `Inner`/`Outer` by containment of its
    /// centroid.
    pub fn classify(&self, gamma: &InterfaceMesh) -> Vec<TriClass> {
        let snap = self.snap_tol();
        let (glo, ghi) = gamma.bbox();
        let inflate = Vec2::new(snap, snap);
        let (glo, ghi) = (glo - inflate, ghi + inflate);
        let mut bins = SegmentBins::build(gamma, snap);
        let mut class = Vec::with_capacity(self.tris.len());
        for t in 0..self.tris.len() {
            let p = self.tri_verts(t);
            let (mut tlo, mut thi) = (p[0], p[0]);
            for q in &p[1..] {
                tlo.x = tlo.x.min(q.x);
                tlo.y = tlo.y.min(q.y);
                thi.x = thi.x.max(q.x);
                thi.y = thi.y.max(q.y);
            }
            let disjoint =
                thi.x < glo.x || tlo.x > ghi.x || thi.y < glo.y || tlo.y > ghi.y;
            let mut cut = false;
            if !disjoint {
                for j in bins.query(tlo, thi) {
                    let [a, b] = gamma.segment(j);
                    let (qa, qb) = (gamma.vertices()[a], gamma.vertices()[b]);
                    if let Some((t0, t1)) = segment_triangle_interval(p, qa, qb, snap) {
                        if (t1 - t0) * (qb - qa).norm() > snap {
                            cut = true;
                            break;
                        }
                    }
                }
            }
            class.push(if cut {
                TriClass::Cut
            } else if !disjoint && gamma.contains(self.centroid(t)) {
                TriClass::Inner
            } else {
                TriClass::Outer
            });
        }
        class
    }

    /// Reads a mesh from a text file (format written by
    /// [`write_text`](Self::write_text)).
    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let perr = |msg: String| Error::Parse {
            path: path.display().to_string(),
            msg,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| perr(format!("unexpected end of file, expected {what}")))
        };
        if next("header")?.trim() != "twophase-mesh" {
            return Err(perr("missing `twophase-mesh` header".into()));
        }
        let counts = next("vertex and element counts")?;
        let mut it = counts.split_whitespace();
        let nv: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr("bad vertex count".into()))?;
        let nt: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr("bad element count".into()))?;
        let mut verts = Vec::with_capacity(nv);
        for i in 0..nv {
            let line = next("vertex")?;
            let mut it = line.split_whitespace();
            let mut coord = || {
                it.next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| perr(format!("bad vertex {i}")))
            };
            let (x, y) = (coord()?, coord()?);
            verts.push(Vec2::new(x, y));
        }
        let mut tris = Vec::with_capacity(nt);
        for i in 0..nt {
            let line = next("element")?;
            let mut it = line.split_whitespace();
            let mut idx = || {
                it.next()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| perr(format!("bad element {i}")))
            };
            tris.push([idx()?, idx()?, idx()?]);
        }
        let mode = match next("mode")?.trim() {
            "unfitted" => MeshMode::Unfitted,
            "fitted" => {
                let mut phase = Vec::with_capacity(nt);
                for i in 0..nt {
                    phase.push(match next("phase")?.trim() {
                        "-" => Phase::Inner,
                        "+" => Phase::Outer,
                        s => return Err(perr(format!("bad phase `{s}` for element {i}"))),
                    });
                }
                let k: usize = next("interface vertex count")?
                    .trim()
                    .parse()
                    .map_err(|e| perr(format!("bad interface vertex count: {e}")))?;
                let mut gamma_vertex = Vec::with_capacity(k);
                for i in 0..k {
                    gamma_vertex.push(
                        next("interface vertex")?
                            .trim()
                            .parse()
                            .map_err(|e| perr(format!("bad interface vertex {i}: {e}")))?,
                    );
                }
                MeshMode::Fitted(FittedData {
                    phase,
                    gamma_vertex,
                    seg_edge: Vec::new(),
                    seg_tri_inner: Vec::new(),
                    seg_tri_outer: Vec::new(),
                })
            }
            s => return Err(perr(format!("bad mode `{s}`"))),
        };
        Self::new(verts, tris, mode)
    }

    /// Writes the mesh as text: header, counts, vertices, elements, mode,
    /// and for fitted meshes the phase labels and interface chain.
    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "twophase-mesh");
        let _ = writeln!(out, "{} {}", self.verts.len(), self.tris.len());
        for v in &self.verts {
            let _ = writeln!(out, "{:.17e} {:.17e}", v.x, v.y);
        }
        for t in &self.tris {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        match &self.mode {
            MeshMode::Unfitted => {
                let _ = writeln!(out, "unfitted");
            }
            MeshMode::Fitted(d) => {
                let _ = writeln!(out, "fitted");
                for p in &d.phase {
                    let _ = writeln!(out, "{}", if *p == Phase::Inner { "-" } else { "+" });
                }
                let _ = writeln!(out, "{}", d.gamma_vertex.len());
                for v in &d.gamma_vertex {
                    let _ = writeln!(out, "{v}");
                }
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Writes the triangulation as a legacy-ASCII VTK unstructured grid,
    /// with phase labels as cell data in fitted mode.
    pub fn write_vtk(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        out.push_str("# vtk DataFile Version 3.0\nbulk mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(out, "POINTS {} double", self.verts.len());
        for v in &self.verts {
            let _ = writeln!(out, "{:.17e} {:.17e} 0.0", v.x, v.y);
        }
        let nt = self.tris.len();
        let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
        for t in &self.tris {
            let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(out, "CELL_TYPES {nt}");
        for _ in 0..nt {
            let _ = writeln!(out, "5");
        }
        if let MeshMode::Fitted(d) = &self.mode {
            let _ = writeln!(out, "CELL_DATA {nt}");
            out.push_str("SCALARS phase int 1\nLOOKUP_TABLE default\n");
            for p in &d.phase {
                let _ = writeln!(out, "{}", if *p == Phase::Inner { 0 } else { 1 });
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Parameter interval of the segment `a + t (b − a)`, `t ∈ [0, 1]`, lying
/// inside the (counter-clockwise) triangle, with boundary fuzz `snap` in
/// physical length units. Returns `None` when the intersection is empty.
///
/// Shared by unfitted element classification and by the interface clipper,
/// so both agree on the same snapped geometry.
pub fn segment_triangle_interval(
    tri: [Vec2; 3],
    a: Vec2,
    b: Vec2,
    snap: f64,
) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        let q1 = tri[(i + 1) % 3];
        let q2 = tri[(i + 2) % 3];
        // Unnormalized barycentric: μ_i(x) = (q1 − x) × (q2 − x), positive
        // inside; dividing the threshold by the opposite edge length makes
        // the fuzz a physical distance.
        let mu_a = cross2(q1 - a, q2 - a);
        let mu_b = cross2(q1 - b, q2 - b);
        let thr = -snap * (q2 - q1).norm();
        let d = mu_b - mu_a;
        if d == 0.0 {
            if mu_a < thr {
                return None;
            }
            continue;
        }
        let tc = (thr - mu_a) / d;
        if d > 0.0 {
            t0 = t0.max(tc);
        } else {
            t1 = t1.min(tc);
        }
    }
    (t1 > t0).then_some((t0, t1))
}

/// Uniform spatial bins over the interface segments, used to cut candidate
/// pair generation from quadratic to near-linear.
pub(crate) struct SegmentBins {
    lo: Vec2,
    inv_cell: Vec2,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    stamp: Vec<u32>,
    epoch: u32,
    hits: Vec<usize>,
}

impl SegmentBins {
    pub(crate) fn build(gamma: &InterfaceMesh, snap: f64) -> Self {
        let (lo, hi) = gamma.bbox();
        let k = gamma.segment_count();
        let n = (k as f64).sqrt().ceil() as usize;
        let (nx, ny) = (n.clamp(1, 64), n.clamp(1, 64));
        let ext = hi - lo;
        let inv_cell = Vec2::new(
            if ext.x > 0.0 { nx as f64 / ext.x } else { 0.0 },
            if ext.y > 0.0 { ny as f64 / ext.y } else { 0.0 },
        );
        let mut bins = Self {
            lo,
            inv_cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
            stamp: vec![0; k],
            epoch: 0,
            hits: Vec::new(),
        };
        for j in 0..k {
            let [a, b] = gamma.segment(j);
            let (pa, pb) = (gamma.vertices()[a], gamma.vertices()[b]);
            let slo = Vec2::new(pa.x.min(pb.x) - snap, pa.y.min(pb.y) - snap);
            let shi = Vec2::new(pa.x.max(pb.x) + snap, pa.y.max(pb.y) + snap);
            let (r0, r1) = bins.cell_range(slo, shi);
            for cy in r0.1..=r1.1 {
                for cx in r0.0..=r1.0 {
                    bins.cells[cy * bins.nx + cx].push(j as u32);
                }
            }
        }
        bins
    }

    fn cell_range(&self, lo: Vec2, hi: Vec2) -> ((usize, usize), (usize, usize)) {
        let clampx = |x: f64| (((x - self.lo.x) * self.inv_cell.x) as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let clampy = |y: f64| (((y - self.lo.y) * self.inv_cell.y) as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        ((clampx(lo.x), clampy(lo.y)), (clampx(hi.x), clampy(hi.y)))
    }

    /// Indices of segments whose bins overlap the query box, deduplicated.
    pub(crate) fn query(&mut self, lo: Vec2, hi: Vec2) -> std::vec::Drain<'_, usize> {
        self.epoch += 1;
        self.hits.clear();
        let (r0, r1) = self.cell_range(lo, hi);
        for cy in r0.1..=r1.1 {
            for cx in r0.0..=r1.0 {
                for &j in &self.cells[cy * self.nx + cx] {
                    if self.stamp[j as usize] != self.epoch {
                        self.stamp[j as usize] = self.epoch;
                        self.hits.push(j as usize);
                    }
                }
            }
        }
        self.hits.drain(..)
    }
}

/// Discrete motion between two meshes with identical connectivity: the mesh
/// velocity, its per-element gradient, and the per-element Jacobian of the
/// backward map `x ↦ x − Δt w(x)` that carries the new mesh onto the old.
#[derive(Debug, Clone)]
pub struct AleMap {
    dt: f64,
    w: Vec<Vec2>,
    grad_w: Vec<Mat2>,
    jac: Vec<f64>,
}

impl AleMap {
    /// The identity map on a mesh (zero mesh velocity, unit Jacobians), used
    /// for the first time step and after remeshing.
    pub fn identity(mesh: &BulkMesh, dt: f64) -> AleMap {
        AleMap {
            dt,
            w: vec![Vec2::zeros(); mesh.vertex_count()],
            grad_w: vec![Mat2::zeros(); mesh.tri_count()],
            jac: vec![1.0; mesh.tri_count()],
        }
    }

    /// Builds the map for the motion from `old` to `new` over a time
    /// increment `dt`.
    ///
    /// The meshes must share connectivity. The backward map is affine on
    /// each element and carries the new element exactly onto the old one, so
    /// its Jacobian equals the element area ratio; this is asserted to
    /// near machine precision as a self-check.
    pub fn between(old: &BulkMesh, new: &BulkMesh, dt: f64) -> Result<AleMap> {
        if old.tris != new.tris || old.vertex_count() != new.vertex_count() {
            return Err(Error::InvalidArgument(
                "meshes do not share connectivity".into(),
            ));
        }
        if dt <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time increment must be positive, got {dt}"
            )));
        }
        let w: Vec<Vec2> = new
            .vertices()
            .iter()
            .zip(old.vertices())
            .map(|(n, o)| (n - o) / dt)
            .collect();
        let mut grad_w = Vec::with_capacity(new.tri_count());
        let mut jac = Vec::with_capacity(new.tri_count());
        for t in 0..new.tri_count() {
            let (gl, area_new) = grad_lambda(new.tri_verts(t));
            let tri = new.tris()[t];
            let mut g = Mat2::zeros();
            for k in 0..3 {
                // ∇w = Σ_k w_k ⊗ ∇λ_k on the new element.
                g += w[tri[k]] * gl[k].transpose();
            }
            let j = (Mat2::identity() - dt * g).determinant();
            let ratio = old.signed_area(t) / area_new;
            debug_assert!(
                (j - ratio).abs() <= 1e-12 * ratio.abs().max(1.0),
                "element {t}: Jacobian {j} vs area ratio {ratio}"
            );
            grad_w.push(g);
            jac.push(j);
        }
        Ok(AleMap { dt, w, grad_w, jac })
    }

    /// Time increment of the motion.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Mesh velocity at each vertex.
    pub fn w(&self) -> &[Vec2] {
        &self.w
    }

    /// Gradient of the mesh velocity on element `t` (constant there).
    pub fn grad_w(&self, t: usize) -> Mat2 {
        self.grad_w[t]
    }

    /// Divergence of the mesh velocity on element `t`.
    pub fn div_w(&self, t: usize) -> f64 {
        self.grad_w[t].trace()
    }

    /// Determinant of the mesh velocity gradient on element `t`.
    pub fn det_grad_w(&self, t: usize) -> f64 {
        self.grad_w[t].determinant()
    }

    /// Jacobian of the backward map on element `t`; equals the old/new area
    /// ratio.
    pub fn jacobian(&self, t: usize) -> f64 {
        self.jac[t]
    }

    /// Coefficients of a nodal field pulled back through the map.
    ///
    /// Because the backward map is the element-wise affine map matching
    /// vertices, it preserves barycentric coordinates, so a Lagrange field
    /// composed with the map has the *same* coefficient vector on the new
    /// mesh that the original field had on the old mesh. Kept as an explicit
    /// (identity) operation so call sites document where compositions occur.
    pub fn pullback_coeffs<T: Clone>(&self, coeffs: &[T]) -> Vec<T> {
        coeffs.to_vec()
    }
}

/// Audit of the change-of-variables identity for a mesh motion: for a
/// quadratic nodal field `φ` (vertex + edge-midpoint coefficients shared by
/// both meshes),
///
/// ```text
/// ∫_{new, filter} (φ ∘ backward-map) · J dx  −  ∫_{old, filter} φ dx,
/// ```
///
/// which vanishes identically because the per-element Jacobian is constant
/// and equals the area ratio. Returned as an absolute residual; the test
/// suite and the moving-mesh audits hold it below 1e-12 relative to the
/// field magnitude.
pub fn change_of_variables_residual(
    old: &BulkMesh,
    new: &BulkMesh,
    map: &AleMap,
    coeffs: &[f64],
    filter: Option<Phase>,
) -> f64 {
    assert_eq!(coeffs.len(), old.vertex_count() + old.edge_count());
    let rule = tri_rule(4);
    let phase_of = |mesh: &BulkMesh, t: usize| match mesh.fitted() {
        Some(d) => d.phase[t],
        None => Phase::Outer,
    };
    let elem_coeffs = |mesh: &BulkMesh, t: usize| {
        let tri = mesh.tris()[t];
        let te = mesh.tri_edges(t);
        [
            coeffs[tri[0]],
            coeffs[tri[1]],
            coeffs[tri[2]],
            coeffs[mesh.vertex_count() + te[0]],
            coeffs[mesh.vertex_count() + te[1]],
            coeffs[mesh.vertex_count() + te[2]],
        ]
    };
    let mut total = 0.0;
    for t in 0..new.tri_count() {
        if filter.is_some_and(|p| phase_of(new, t) != p) {
            continue;
        }
        // φ∘A at a barycentric point of the new element is φ at the same
        // barycentric point of the old element: same coefficients, same
        // shape values.
        let c = elem_coeffs(new, t);
        let mut s = 0.0;
        for (&l, &w) in rule.points.iter().zip(rule.weights) {
            let n = p2_values(l);
            s += w * (0..6).map(|k| c[k] * n[k]).sum::<f64>();
        }
        total += s * (map.jacobian(t) * new.signed_area(t) - old.signed_area(t));
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn criss_cross_counts_and_area() {
        let m = BulkMesh::criss_cross(2, 3, Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0));
        assert_eq!(m.vertex_count(), 12 + 6);
        assert_eq!(m.tri_count(), 24);
        // Euler characteristic of a disc: V − E + T = 1.
        assert_eq!(
            m.vertex_count() as isize - m.edge_count() as isize + m.tri_count() as isize,
            1
        );
        let total: f64 = (0..m.tri_count()).map(|t| m.signed_area(t)).sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-13);
        for t in 0..m.tri_count() {
            assert!(m.signed_area(t) > 0.0);
        }
        // Square cells split through the center: all angles 45° or 90°.
        let sq = BulkMesh::criss_cross(2, 4, Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0));
        assert_relative_eq!(sq.min_angle(), std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
        assert!(!m.remesh_needed() && !sq.remesh_needed());
    }

    #[test]
    fn wall_markers_on_rectangle() {
        let m = BulkMesh::criss_cross(3, 4, Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0));
        let mut noslip = 0;
        let mut freeslip = 0;
        for e in 0..m.edge_count() {
            match m.edge_bc(e) {
                Some(WallBc::NoSlip) => noslip += 1,
                Some(WallBc::FreeSlip) => freeslip += 1,
                None => {}
            }
        }
        assert_eq!(noslip, 2 * 3);
        assert_eq!(freeslip, 2 * 4);
        // Corners are fully clamped.
        for v in 0..m.vertex_count() {
            let p = m.vertices()[v];
            let corner = (p.x == 0.0 || p.x == 1.0) && (p.y == 0.0 || p.y == 2.0);
            if corner {
                assert_eq!(m.vertex_bc(v), Some(WallBc::NoSlip));
            }
        }
        // A vertex strictly inside a vertical wall is free-slip.
        let side = m
            .vertices()
            .iter()
            .position(|p| p.x == 0.0 && p.y > 0.0 && p.y < 2.0)
            .unwrap();
        assert_eq!(m.vertex_bc(side), Some(WallBc::FreeSlip));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        let verts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let ok = vec![[0usize, 1, 2], [0, 2, 3]];
        assert!(BulkMesh::new(verts.clone(), vec![[0, 1, 5], [0, 2, 3]], MeshMode::Unfitted)
            .is_err());
        assert!(BulkMesh::new(verts.clone(), vec![[0, 1, 1], [0, 2, 3]], MeshMode::Unfitted)
            .is_err());
        // Duplicated element (in either orientation).
        assert!(
            BulkMesh::new(verts.clone(), vec![[0, 1, 2], [0, 2, 1]], MeshMode::Unfitted).is_err()
        );
        // A boundary edge off the rectangle walls (drop one square half).
        assert!(BulkMesh::new(verts.clone(), vec![[0, 1, 2]], MeshMode::Unfitted).is_err());
        // Clockwise input is normalized, not rejected.
        let m = BulkMesh::new(verts, vec![[0, 2, 1], [0, 2, 3]], MeshMode::Unfitted).unwrap();
        assert!(m.signed_area(0) > 0.0 && m.signed_area(1) > 0.0);
        assert_eq!(m.tris()[0], ok[0]);
    }

    use crate::fixtures::picture_frame_parts as picture_frame;

    #[test]
    fn fitted_mesh_validation_and_derived_data() {
        let (verts, tris, data) = picture_frame();
        let m = BulkMesh::new(verts.clone(), tris.clone(), MeshMode::Fitted(data.clone())).unwrap();
        let d = m.fitted().unwrap();
        assert_eq!(d.seg_edge.len(), 4);
        for j in 0..4 {
            assert_eq!(d.phase[d.seg_tri_inner[j]], Phase::Inner);
            assert_eq!(d.phase[d.seg_tri_outer[j]], Phase::Outer);
        }
        let gamma = m.fitted_interface().unwrap();
        assert_relative_eq!(gamma.enclosed_area(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(gamma.perimeter(), 4.0, epsilon = 1e-14);

        // Clockwise interface chain is rejected.
        let mut cw = data.clone();
        cw.gamma_vertex = vec![7, 6, 5, 4];
        assert!(BulkMesh::new(verts.clone(), tris.clone(), MeshMode::Fitted(cw)).is_err());

        // A phase flip away from the interface is rejected.
        let mut bad = data.clone();
        bad.phase[0] = Phase::Inner;
        assert!(BulkMesh::new(verts.clone(), tris.clone(), MeshMode::Fitted(bad)).is_err());

        // An interface segment that is not an element edge is rejected.
        let mut offchain = data;
        offchain.gamma_vertex = vec![4, 5, 7, 6];
        assert!(BulkMesh::new(verts, tris, MeshMode::Fitted(offchain)).is_err());
    }

    #[test]
    fn classify_against_circle_matches_naive_oracle() {
        let m = BulkMesh::criss_cross(16, 32, Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0));
        // Center and radius chosen so no interface vertex lands on a mesh
        // line (that would be a legitimately ambiguous snapped config).
        let gamma = InterfaceMesh::circle(Vec2::new(0.513, 0.497), 0.23, 48).unwrap();
        let class = m.classify(&gamma);
        assert_eq!(class.len(), m.tri_count());
        // Naive oracle: exact segment/triangle intersection from orientation
        // predicates, no bins, no parameter intervals.
        let inside_tri = |p: [Vec2; 3], q: Vec2| {
            let s0 = cross2(p[1] - p[0], q - p[0]);
            let s1 = cross2(p[2] - p[1], q - p[1]);
            let s2 = cross2(p[0] - p[2], q - p[2]);
            s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0
        };
        let segs_cross = |a: Vec2, b: Vec2, c: Vec2, d: Vec2| {
            let d1 = cross2(b - a, c - a);
            let d2 = cross2(b - a, d - a);
            let d3 = cross2(d - c, a - c);
            let d4 = cross2(d - c, b - c);
            ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
        };
        let mut agree = 0;
        for t in 0..m.tri_count() {
            let p = m.tri_verts(t);
            let mut cut = false;
            for j in 0..gamma.segment_count() {
                let [a, b] = gamma.segment(j);
                let (qa, qb) = (gamma.vertices()[a], gamma.vertices()[b]);
                if inside_tri(p, qa) || inside_tri(p, qb) {
                    cut = true;
                    break;
                }
                for k in 0..3 {
                    if segs_cross(p[k], p[(k + 1) % 3], qa, qb) {
                        cut = true;
                        break;
                    }
                }
                if cut {
                    break;
                }
            }
            let expected = if cut {
                TriClass::Cut
            } else if gamma.contains(m.centroid(t)) {
                TriClass::Inner
            } else {
                TriClass::Outer
            };
            if class[t] == expected {
                agree += 1;
            }
        }
        // The snapped interval test may disagree with the oracle only on
        // degenerate touching configurations; this mesh/interface pair has
        // none, so demand exact agreement.
        assert_eq!(agree, m.tri_count());
        // Sanity: the inner region has roughly the circle's area.
        let inner: f64 = (0..m.tri_count())
            .filter(|&t| class[t] == TriClass::Inner)
            .map(|t| m.signed_area(t))
            .sum();
        let cut: f64 = (0..m.tri_count())
            .filter(|&t| class[t] == TriClass::Cut)
            .map(|t| m.signed_area(t))
            .sum();
        let polygon = gamma.enclosed_area();
        assert!(inner < polygon && polygon < inner + cut);
        // Every vertex of an inner element lies inside the polygon.
        for t in 0..m.tri_count() {
            if class[t] == TriClass::Inner {
                for q in m.tri_verts(t) {
                    assert!(gamma.contains(q));
                }
            }
        }
    }

    #[test]
    fn tiny_interface_inside_one_element_is_a_cut() {
        let m = BulkMesh::criss_cross(2, 2, Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        // Small circle strictly inside one triangle: that element is cut,
        // none are inner.
        let gamma = InterfaceMesh::circle(Vec2::new(0.25, 0.1), 0.03, 16).unwrap();
        let class = m.classify(&gamma);
        assert_eq!(class.iter().filter(|c| **c == TriClass::Cut).count(), 1);
        assert_eq!(class.iter().filter(|c| **c == TriClass::Inner).count(), 0);
    }

    #[test]
    fn segment_interval_basics() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        // Segment crossing the hypotenuse region.
        let (t0, t1) =
            segment_triangle_interval(tri, Vec2::new(-0.5, 0.25), Vec2::new(1.5, 0.25), 1e-12)
                .unwrap();
        assert_relative_eq!(t0, 0.25, epsilon = 1e-12);
        assert_relative_eq!(t1, 0.625, epsilon = 1e-12);
        // Fully outside.
        assert!(segment_triangle_interval(
            tri,
            Vec2::new(2.0, 2.0),
            Vec2::new(3.0, 2.0),
            1e-12
        )
        .is_none());
        // Fully inside.
        let (t0, t1) =
            segment_triangle_interval(tri, Vec2::new(0.1, 0.1), Vec2::new(0.2, 0.2), 1e-12)
                .unwrap();
        assert_abs_diff_eq!(t0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn with_positions_detects_inversion_and_wall_escape() {
        let m = BulkMesh::criss_cross(2, 2, Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        // Valid interior jiggle.
        let mut pos: Vec<Vec2> = m.vertices().to_vec();
        for (v, p) in pos.iter_mut().enumerate() {
            if m.vertex_bc(v).is_none() {
                *p += Vec2::new(0.02, -0.015);
            }
        }
        let moved = m.with_positions(pos.clone()).unwrap();
        assert_eq!(moved.tri_count(), m.tri_count());
        // Collapse a center vertex far across its cell → inversion.
        let mut bad = m.vertices().to_vec();
        let center = m
            .vertices()
            .iter()
            .position(|p| (p.x - 0.25).abs() < 1e-12 && (p.y - 0.25).abs() < 1e-12)
            .unwrap();
        bad[center] = Vec2::new(0.9, 0.9);
        assert!(matches!(
            m.with_positions(bad),
            Err(Error::ElementInversion { .. })
        ));
        // Slide a wall vertex off its wall → rejected.
        let mut off = m.vertices().to_vec();
        let wall = m
            .vertices()
            .iter()
            .position(|p| p.x == 0.0 && p.y == 0.5)
            .unwrap();
        off[wall] = Vec2::new(0.05, 0.5);
        assert!(m.with_positions(off).is_err());
        // Sliding along the wall is allowed.
        let mut slide = m.vertices().to_vec();
        slide[wall] = Vec2::new(0.0, 0.55);
        assert!(m.with_positions(slide).is_ok());
    }

    #[test]
    fn ale_map_jacobian_equals_area_ratio() {
        let m = BulkMesh::criss_cross(3, 3, Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        let dt = 0.05;
        let mut pos: Vec<Vec2> = m.vertices().to_vec();
        for (v, p) in pos.iter_mut().enumerate() {
            if m.vertex_bc(v).is_none() {
                let q = *p;
                *p += dt * Vec2::new(0.3 * (3.1 * q.y).sin(), -0.2 * (2.7 * q.x).cos());
            }
        }
        let new = m.with_positions(pos).unwrap();
        let map = AleMap::between(&m, &new, dt).unwrap();
        for t in 0..m.tri_count() {
            let ratio = m.signed_area(t) / new.signed_area(t);
            assert_relative_eq!(map.jacobian(t), ratio, epsilon = 1e-12);
            // tr(∇w · adj(I − τ∇w)) at τ = 0 is div w.
            assert_relative_eq!(map.div_w(t), map.grad_w(t).trace(), epsilon = 1e-14);
        }
        let id = AleMap::identity(&m, dt);
        assert!(id.w().iter().all(|w| w.norm() == 0.0));
        assert!((0..m.tri_count()).all(|t| id.jacobian(t) == 1.0));
    }

    #[test]
    fn change_of_variables_is_exact_for_quadratic_fields() {
        let (verts, tris, data) = picture_frame();
        let m = BulkMesh::new(verts, tris, MeshMode::Fitted(data)).unwrap();
        let dt = 0.1;
        let mut pos: Vec<Vec2> = m.vertices().to_vec();
        // Move the inner square (and thus the interface) without touching
        // the walls.
        for (v, p) in pos.iter_mut().enumerate() {
            if m.vertex_bc(v).is_none() {
                *p += Vec2::new(0.21, 0.17);
            }
        }
        let new = m.with_positions(pos).unwrap();
        let map = AleMap::between(&m, &new, dt).unwrap();
        // Quadratic nodal field with arbitrary coefficients.
        let n = m.vertex_count() + m.edge_count();
        let coeffs: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 - 8.0).collect();
        for filter in [None, Some(Phase::Inner), Some(Phase::Outer)] {
            let r = change_of_variables_residual(&m, &new, &map, &coeffs, filter);
            assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn text_roundtrip_fitted() {
        let (verts, tris, data) = picture_frame();
        let m = BulkMesh::new(verts, tris, MeshMode::Fitted(data)).unwrap();
        let dir = std::env::temp_dir().join("twophase-mesh-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mesh.txt");
        m.write_text(&path).unwrap();
        let back = BulkMesh::read_text(&path).unwrap();
        assert_eq!(back.tris(), m.tris());
        assert_eq!(back.fitted().unwrap().gamma_vertex, vec![4, 5, 6, 7]);
        for (a, b) in m.vertices().iter().zip(back.vertices()) {
            assert_eq!(a, b);
        }
        let _ = std::fs::remove_dir_all(&dir);
    }
}
