//! Lagrange shape functions on triangles in barycentric form.
//!
//! Local node numbering used throughout the crate:
//!
//! ```text
//! P1: nodes 0, 1, 2 at the vertices.
//! P2: nodes 0, 1, 2 at the vertices, then midpoints
//!     3 = edge (0,1),  4 = edge (1,2),  5 = edge (2,0).
//! ```

use crate::{cross2, Vec2};

/// P1 (affine) shape function values at a barycentric point — the
/// barycentric coordinates themselves.
#[inline]
pub fn p1_values(l: (f64, f64, f64)) -> [f64; 3] {
    [l.0, l.1, l.2]
}

/// P2 (quadratic) shape function values at a barycentric point.
#[inline]
pub fn p2_values(l: (f64, f64, f64)) -> [f64; 6] {
    let (l0, l1, l2) = l;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// Derivatives `∂N_k/∂λ_i` of the P2 shape functions.
#[inline]
pub fn p2_bary_derivs(l: (f64, f64, f64)) -> [[f64; 3]; 6] {
    let (l0, l1, l2) = l;
    [
        [4.0 * l0 - 1.0, 0.0, 0.0],
        [0.0, 4.0 * l1 - 1.0, 0.0],
        [0.0, 0.0, 4.0 * l2 - 1.0],
        [4.0 * l1, 4.0 * l0, 0.0],
        [0.0, 4.0 * l2, 4.0 * l1],
        [4.0 * l2, 0.0, 4.0 * l0],
    ]
}

/// Gradients of the barycentric coordinates on the triangle with (counter-
/// clockwise) vertices `p`, together with the signed area.
///
/// `∇λ_i = rot_{+90}(p_{i+2} − p_{i+1}) / (2A)`.
#[inline]
pub fn grad_lambda(p: [Vec2; 3]) -> ([Vec2; 3], f64) {
    let area = 0.5 * cross2(p[1] - p[0], p[2] - p[0]);
    let rot90 = |v: Vec2| Vec2::new(-v.y, v.x);
    let s = 1.0 / (2.0 * area);
    (
        [
            s * rot90(p[2] - p[1]),
            s * rot90(p[0] - p[2]),
            s * rot90(p[1] - p[0]),
        ],
        area,
    )
}

/// Barycentric coordinates of a physical point `x` in the triangle with
/// counter-clockwise vertices `p`:
/// `λ_i(x) = (p_{i+1} − x) × (p_{i+2} − x) / (2A)`.
///
/// The coordinates always sum to one; points outside the triangle give
/// negative components.
#[inline]
pub fn barycentric_coords(p: [Vec2; 3], x: Vec2) -> (f64, f64, f64) {
    let inv2a = 1.0 / cross2(p[1] - p[0], p[2] - p[0]);
    let l0 = cross2(p[1] - x, p[2] - x) * inv2a;
    let l1 = cross2(p[2] - x, p[0] - x) * inv2a;
    (l0, l1, 1.0 - l0 - l1)
}

/// Physical gradients of the P2 shape functions at a barycentric point.
#[inline]
pub fn p2_grads(l: (f64, f64, f64), gl: [Vec2; 3]) -> [Vec2; 6] {
    let d = p2_bary_derivs(l);
    let mut out = [Vec2::zeros(); 6];
    for k in 0..6 {
        out[k] = d[k][0] * gl[0] + d[k][1] * gl[1] + d[k][2] * gl[2];
    }
    out
}

/// Barycentric coordinates of the six P2 nodes in local order.
pub const P2_NODE_BARY: [(f64, f64, f64); 6] = [
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (0.5, 0.5, 0.0),
    (0.0, 0.5, 0.5),
    (0.5, 0.0, 0.5),
];

/// Local edge numbering matching the P2 midpoint nodes: edge `k` of a
/// triangle connects local vertices `P2_EDGE_VERTS[k]`, and its midpoint
/// carries local node `3 + k`.
pub const P2_EDGE_VERTS: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];
