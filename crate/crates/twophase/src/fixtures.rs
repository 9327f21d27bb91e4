//! Test fixtures shared across the unit test modules.

use crate::mesh::{BulkMesh, FittedData, MeshMode, Phase};
use crate::Vec2;

/// Raw data of the picture-frame fitted mesh: a unit square bubble inside a
/// 3×3 box, bubble split into two elements, ring of eight outer elements.
/// The interface chain is the square `(1,1)-(2,1)-(2,2)-(1,2)` traversed
/// counter-clockwise.
pub(crate) fn picture_frame_parts() -> (Vec<Vec2>, Vec<[usize; 3]>, FittedData) {
    let verts = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(3.0, 0.0),
        Vec2::new(3.0, 3.0),
        Vec2::new(0.0, 3.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(2.0, 1.0),
        Vec2::new(2.0, 2.0),
        Vec2::new(1.0, 2.0),
    ];
    let tris = vec![
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
        [4, 5, 6],
        [4, 6, 7],
    ];
    let mut phase = vec![Phase::Outer; 10];
    phase[8] = Phase::Inner;
    phase[9] = Phase::Inner;
    let data = FittedData {
        phase,
        gamma_vertex: vec![4, 5, 6, 7],
        seg_edge: Vec::new(),
        seg_tri_inner: Vec::new(),
        seg_tri_outer: Vec::new(),
    };
    (verts, tris, data)
}

/// The picture-frame mesh, built and validated.
pub(crate) fn picture_frame_mesh() -> BulkMesh {
    let (verts, tris, data) = picture_frame_parts();
    BulkMesh::new(verts, tris, MeshMode::Fitted(data)).unwrap()
}

/// Structured fitted mesh of the rectangle `[lo, hi]` around a star-shaped
/// interface polygon `gamma` (counter-clockwise): `inner_rings` concentric
/// rings triangulate the enclosed phase down to the vertex centroid,
/// `outer_layers` rings interpolate between the polygon and its radial
/// projection onto the rectangle boundary, and one triangle per rectangle
/// corner closes the gaps. The interface vertices are reproduced verbatim,
/// so `fitted_interface()` returns exactly `gamma`.
///
/// Requires the polygon to be star-shaped about its vertex centroid with the
/// centroid inside the rectangle, and enough vertices that no two rectangle
/// corners fall in the same angular gap.
pub(crate) fn fitted_mesh_around(
    gamma: &[Vec2],
    inner_rings: usize,
    outer_layers: usize,
    lo: Vec2,
    hi: Vec2,
) -> BulkMesh {
    let k = gamma.len();
    assert!(k >= 8 && inner_rings >= 1 && outer_layers >= 1);
    let center = gamma.iter().sum::<Vec2>() / k as f64;
    let (m, n) = (inner_rings, outer_layers);

    let mut verts: Vec<Vec2> = vec![center];
    for i in 1..=m {
        let s = i as f64 / m as f64;
        for kk in 0..k {
            verts.push(if i == m {
                gamma[kk]
            } else {
                center + s * (gamma[kk] - center)
            });
        }
    }
    // Radial projection of each interface vertex onto the rectangle.
    let snap = 1e-12 * (hi - lo).norm();
    let hit = |d: Vec2| -> Vec2 {
        let mut t = f64::INFINITY;
        if d.x > 0.0 {
            t = t.min((hi.x - center.x) / d.x);
        }
        if d.x < 0.0 {
            t = t.min((lo.x - center.x) / d.x);
        }
        if d.y > 0.0 {
            t = t.min((hi.y - center.y) / d.y);
        }
        if d.y < 0.0 {
            t = t.min((lo.y - center.y) / d.y);
        }
        assert!(t.is_finite() && t > 0.0, "degenerate boundary ray");
        let mut p = center + t * d;
        if (p.x - lo.x).abs() <= snap {
            p.x = lo.x;
        }
        if (p.x - hi.x).abs() <= snap {
            p.x = hi.x;
        }
        if (p.y - lo.y).abs() <= snap {
            p.y = lo.y;
        }
        if (p.y - hi.y).abs() <= snap {
            p.y = hi.y;
        }
        Vec2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y))
    };
    let hits: Vec<Vec2> = (0..k).map(|kk| hit(gamma[kk] - center)).collect();
    for j in 1..=n {
        let s = j as f64 / n as f64;
        for kk in 0..k {
            verts.push(if j == n {
                hits[kk]
            } else {
                gamma[kk] + s * (hits[kk] - gamma[kk])
            });
        }
    }
    let ring = |i: usize, kk: usize| 1 + (i - 1) * k + kk % k;
    let layer = |j: usize, kk: usize| 1 + m * k + (j - 1) * k + kk % k;

    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut phase: Vec<Phase> = Vec::new();
    for kk in 0..k {
        tris.push([0, ring(1, kk), ring(1, kk + 1)]);
        phase.push(Phase::Inner);
    }
    for i in 1..m {
        for kk in 0..k {
            tris.push([ring(i, kk), ring(i, kk + 1), ring(i + 1, kk + 1)]);
            tris.push([ring(i, kk), ring(i + 1, kk + 1), ring(i + 1, kk)]);
            phase.extend([Phase::Inner; 2]);
        }
    }
    for kk in 0..k {
        tris.push([ring(m, kk), ring(m, kk + 1), layer(1, kk + 1)]);
        tris.push([ring(m, kk), layer(1, kk + 1), layer(1, kk)]);
        phase.extend([Phase::Outer; 2]);
    }
    for j in 1..n {
        for kk in 0..k {
            tris.push([layer(j, kk), layer(j, kk + 1), layer(j + 1, kk + 1)]);
            tris.push([layer(j, kk), layer(j + 1, kk + 1), layer(j + 1, kk)]);
            phase.extend([Phase::Outer; 2]);
        }
    }
    // One triangle per rectangle corner, slotted into the angular gap of the
    // outermost layer that brackets it.
    let tau = std::f64::consts::TAU;
    let ang = |p: Vec2| {
        let a = (p - center).y.atan2((p - center).x);
        if a < 0.0 {
            a + tau
        } else {
            a
        }
    };
    let hit_ang: Vec<f64> = hits.iter().map(|&p| ang(p)).collect();
    let mut used_gap = vec![false; k];
    for corner in [
        Vec2::new(lo.x, lo.y),
        Vec2::new(hi.x, lo.y),
        Vec2::new(hi.x, hi.y),
        Vec2::new(lo.x, hi.y),
    ] {
        if hits.iter().any(|&h| (h - corner).norm() <= snap) {
            continue; // a boundary ray passes through this corner
        }
        let ac = ang(corner);
        let gap = (0..k)
            .find(|&kk| {
                let (a0, a1) = (hit_ang[kk], hit_ang[(kk + 1) % k]);
                if a0 <= a1 {
                    ac >= a0 && ac < a1
                } else {
                    ac >= a0 || ac < a1
                }
            })
            .expect("corner not bracketed by boundary vertices");
        assert!(!used_gap[gap], "two rectangle corners share an angular gap");
        used_gap[gap] = true;
        let ci = verts.len();
        verts.push(corner);
        tris.push([layer(n, gap), ci, layer(n, gap + 1)]);
        phase.push(Phase::Outer);
    }

    let data = FittedData {
        phase,
        gamma_vertex: (0..k).map(|kk| ring(m, kk)).collect(),
        seg_edge: Vec::new(),
        seg_tri_inner: Vec::new(),
        seg_tri_outer: Vec::new(),
    };
    BulkMesh::new(verts, tris, MeshMode::Fitted(data)).unwrap()
}

/// [`fitted_mesh_around`] a regular `k`-gon inscribed in the circle of
/// radius `r` about `center` (the same polygon `InterfaceMesh::circle`
/// produces).
pub(crate) fn fitted_disk_mesh(
    center: Vec2,
    r: f64,
    k: usize,
    inner_rings: usize,
    outer_layers: usize,
    lo: Vec2,
    hi: Vec2,
) -> BulkMesh {
    let gamma: Vec<Vec2> = (0..k)
        .map(|kk| {
            let th = std::f64::consts::TAU * kk as f64 / k as f64;
            center + r * Vec2::new(th.cos(), th.sin())
        })
        .collect();
    fitted_mesh_around(&gamma, inner_rings, outer_layers, lo, hi)
}
