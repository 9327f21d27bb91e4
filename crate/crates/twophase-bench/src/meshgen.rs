//! Fitted bulk mesh generation.
//!
//! Builds a conforming triangulation of the rectangular flow domain whose
//! edge set contains every segment of a given interface polygon, with the
//! polygon vertices appearing verbatim as mesh vertices. The polygon edges
//! are inserted as constraint edges of a Delaunay triangulation which is
//! then refined by area and minimum-angle criteria; constraint edges are
//! never split, so short interface segments induce a mesh graded from fine
//! near the interface to the requested far-field size.
//!
//! The same generator serves initial mesh construction and mid-run
//! remeshing (where the interface polygon must be preserved exactly so the
//! solution transfer cannot perturb the conserved enclosed area).

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use twophase::interface::InterfaceMesh;
use twophase::mesh::{BulkMesh, FittedData, MeshMode, Phase};
use twophase::Vec2;

/// Minimum interior angle the generated mesh must satisfy (10°), matching
/// the remeshing trigger of the moving-mesh scheme.
pub const MIN_ANGLE: f64 = std::f64::consts::PI / 18.0;

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

/// Generates a fitted triangulation of the rectangle `[lo, hi]` around the
/// polygon `gamma`, with far-field element size `h` (wall spacing `h`,
/// interior triangle areas at most `h²/2`). Near the interface the element
/// size follows the polygon segment lengths.
///
/// Fails if the polygon is not simple, touches the walls, or if the
/// triangulator cannot reach the required quality.
pub fn generate_fitted_mesh(
    gamma: &InterfaceMesh,
    h: f64,
    lo: Vec2,
    hi: Vec2,
) -> Result<BulkMesh, String> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(format!("far-field size must be positive, got {h}"));
    }
    if !(lo.x < hi.x && lo.y < hi.y) {
        return Err("domain corners must satisfy lo < hi componentwise".into());
    }
    if !gamma.is_simple() {
        return Err("interface polygon is self-intersecting".into());
    }
    let margin = 1e-9 * (hi - lo).norm();
    for (j, q) in gamma.vertices().iter().enumerate() {
        if q.x <= lo.x + margin || q.x >= hi.x - margin || q.y <= lo.y + margin || q.y >= hi.y - margin
        {
            return Err(format!(
                "interface vertex {j} at ({}, {}) touches the domain boundary",
                q.x, q.y
            ));
        }
    }

    // Triangulate at decreasing quality targets until refinement completes;
    // the result must still clear the 10° floor, checked below.
    let mut last_err = String::new();
    for angle_deg in [30.0, 26.0, 22.0] {
        match try_generate(gamma, h, lo, hi, angle_deg) {
            Ok(mesh) => {
                let min_angle = mesh.min_angle();
                if min_angle < MIN_ANGLE {
                    last_err = format!(
                        "refined mesh has minimum angle {:.3}° < 10° (target {angle_deg}°)",
                        min_angle.to_degrees()
                    );
                    continue;
                }
                return Ok(mesh);
            }
            Err(e) => last_err = e,
        }
    }
    Err(format!("mesh generation failed: {last_err}"))
}

fn try_generate(
    gamma: &InterfaceMesh,
    h: f64,
    lo: Vec2,
    hi: Vec2,
    angle_deg: f64,
) -> Result<BulkMesh, String> {
    let mut cdt = Cdt::new();
    let insert = |cdt: &mut Cdt, p: Vec2| -> Result<spade::handles::FixedVertexHandle, String> {
        cdt.insert(Point2::new(p.x, p.y))
            .map_err(|e| format!("cannot insert mesh point ({}, {}): {e:?}", p.x, p.y))
    };

    // Wall points: corners plus equispaced points along each side. Interior
    // side points are convex combinations with one exact coordinate, so they
    // stay exactly on the wall and the hull of the point set is the
    // rectangle itself.
    for corner in [
        lo,
        Vec2::new(hi.x, lo.y),
        hi,
        Vec2::new(lo.x, hi.y),
    ] {
        insert(&mut cdt, corner)?;
    }
    for (a, b) in [
        (lo, Vec2::new(hi.x, lo.y)),
        (Vec2::new(hi.x, lo.y), hi),
        (hi, Vec2::new(lo.x, hi.y)),
        (Vec2::new(lo.x, hi.y), lo),
    ] {
        let n = ((b - a).norm() / h).ceil().max(1.0) as usize;
        for i in 1..n {
            let t = i as f64 / n as f64;
            let p = Vec2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            insert(&mut cdt, p)?;
        }
    }

    // Interface vertices, coordinates taken verbatim. A duplicate insert
    // returns the existing handle without growing the triangulation, which
    // here can only mean a degenerate polygon.
    let mut gamma_handles = Vec::with_capacity(gamma.vertex_count());
    for &q in gamma.vertices() {
        let before = cdt.num_vertices();
        let handle = insert(&mut cdt, q)?;
        if cdt.num_vertices() == before {
            return Err(format!(
                "interface vertex ({}, {}) coincides with another mesh point",
                q.x, q.y
            ));
        }
        gamma_handles.push(handle);
    }
    for j in 0..gamma.vertex_count() {
        cdt.add_constraint(gamma_handles[j], gamma_handles[(j + 1) % gamma.vertex_count()]);
    }

    let result = cdt.refine(
        RefinementParameters::<f64>::new()
            .keep_constraint_edges()
            .with_angle_limit(AngleLimit::from_deg(angle_deg))
            .with_max_allowed_area(0.5 * h * h)
            .with_max_additional_vertices(400_000),
    );
    if !result.refinement_complete {
        return Err(format!(
            "refinement hit its vertex budget before reaching quality {angle_deg}°"
        ));
    }

    // Extract vertices by stable handle index (refinement only appends).
    let mut verts = vec![Vec2::zeros(); cdt.num_vertices()];
    for v in cdt.vertices() {
        let p = v.position();
        verts[v.fix().index()] = Vec2::new(p.x, p.y);
    }
    let gamma_vertex: Vec<usize> = gamma_handles.iter().map(|h| h.index()).collect();
    for (j, &vi) in gamma_vertex.iter().enumerate() {
        if verts[vi] != gamma.vertices()[j] {
            return Err("triangulator moved an interface vertex".into());
        }
    }

    let mut tris = Vec::new();
    let mut phase = Vec::new();
    for f in cdt.inner_faces() {
        let [a, b, c] = f.vertices().map(|v| v.fix().index());
        let (pa, pb, pc) = (verts[a], verts[b], verts[c]);
        let signed = 0.5 * ((pb.x - pa.x) * (pc.y - pa.y) - (pb.y - pa.y) * (pc.x - pa.x));
        if signed > 0.0 {
            tris.push([a, b, c]);
        } else {
            tris.push([a, c, b]);
        }
        let centroid = (pa + pb + pc) / 3.0;
        phase.push(if gamma.contains(centroid) {
            Phase::Inner
        } else {
            Phase::Outer
        });
    }

    let data = FittedData {
        phase,
        gamma_vertex,
        seg_edge: Vec::new(),
        seg_tri_inner: Vec::new(),
        seg_tri_outer: Vec::new(),
    };
    BulkMesh::new(verts, tris, MeshMode::Fitted(data))
        .map_err(|e| format!("triangulation rejected: {e}"))
}
