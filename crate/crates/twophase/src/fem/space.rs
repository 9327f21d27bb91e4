//! Mixed velocity/pressure function spaces on a bulk mesh.
//!
//! The velocity space is vector-valued P2 (one scalar node per vertex and
//! per edge midpoint, two components per node). Node `i < nv` is vertex
//! `i`; node `nv + e` is the midpoint of edge `e`. The degree of freedom of
//! node `n`, component `c` is `2n + c`.
//!
//! Wall conditions from the mesh become homogeneous Dirichlet constraints:
//! no-slip clamps both components, free-slip only the wall-normal (x)
//! component.
//!
//! Three pressure spaces are supported: continuous P1, discontinuous P0,
//! and their sum P1+P0. The sum overlaps in the constants, so one P0 dof
//! (element 0) is dropped to keep a basis; what remains still spans the full
//! sum, in particular every piecewise-constant phase indicator.

use crate::fem::elements::{grad_lambda, p1_values, p2_grads, p2_values};
use crate::mesh::{BulkMesh, WallBc};
use crate::{Mat2, Vec2};

/// Pressure discretization paired with the P2 velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureSpace {
    /// Continuous piecewise linear.
    P1,
    /// Discontinuous piecewise constant.
    P0,
    /// Their sum (one constant dof dropped for linear independence).
    P1P0,
}

/// Dof layout and wall constraints for one velocity/pressure pair on a
/// fixed mesh. Rebuilt whenever the mesh changes connectivity.
#[derive(Debug, Clone)]
pub struct MixedSpace {
    nv: usize,
    ne: usize,
    nt: usize,
    pressure: PressureSpace,
    /// Constraint flags over the velocity dofs (`2 (nv + ne)` entries).
    constrained: Vec<bool>,
}

impl MixedSpace {
    pub fn new(mesh: &BulkMesh, pressure: PressureSpace) -> Self {
        let (nv, ne, nt) = (mesh.vertex_count(), mesh.edge_count(), mesh.tri_count());
        let mut constrained = vec![false; 2 * (nv + ne)];
        let mut apply = |node: usize, bc: WallBc| match bc {
            WallBc::NoSlip => {
                constrained[2 * node] = true;
                constrained[2 * node + 1] = true;
            }
            // Vertical walls: clamp the normal (x) component only.
            WallBc::FreeSlip => constrained[2 * node] = true,
        };
        for v in 0..nv {
            if let Some(bc) = mesh.vertex_bc(v) {
                apply(v, bc);
            }
        }
        for e in 0..ne {
            if let Some(bc) = mesh.edge_bc(e) {
                apply(nv + e, bc);
            }
        }
        Self {
            nv,
            ne,
            nt,
            pressure,
            constrained,
        }
    }

    /// Scalar velocity nodes (vertices plus edge midpoints).
    pub fn velocity_node_count(&self) -> usize {
        self.nv + self.ne
    }

    /// Velocity dofs (two components per node).
    pub fn velocity_dofs(&self) -> usize {
        2 * (self.nv + self.ne)
    }

    /// Pressure dofs.
    pub fn pressure_dofs(&self) -> usize {
        match self.pressure {
            PressureSpace::P1 => self.nv,
            PressureSpace::P0 => self.nt,
            PressureSpace::P1P0 => self.nv + self.nt - 1,
        }
    }

    /// Pressure space kind.
    pub fn pressure(&self) -> PressureSpace {
        self.pressure
    }

    /// Dof index of a velocity node/component.
    #[inline]
    pub fn vdof(&self, node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    /// Whether a velocity dof is clamped by a wall condition.
    #[inline]
    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    /// Constraint flags for all velocity dofs.
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// The six velocity nodes of element `t` in local order (three vertices,
    /// then midpoints of edges `(0,1), (1,2), (2,0)`).
    #[inline]
    pub fn velocity_elem_nodes(&self, mesh: &BulkMesh, t: usize) -> [usize; 6] {
        let tri = mesh.tris()[t];
        let te = mesh.tri_edges(t);
        [
            tri[0],
            tri[1],
            tri[2],
            self.nv + te[0],
            self.nv + te[1],
            self.nv + te[2],
        ]
    }

    /// Pressure dofs of element `t` and the matching basis values at a
    /// barycentric point. Returns `(dofs, values, count)`; only the first
    /// `count` entries are meaningful.
    #[inline]
    pub fn pressure_elem_basis(
        &self,
        mesh: &BulkMesh,
        t: usize,
        l: (f64, f64, f64),
    ) -> ([usize; 4], [f64; 4], usize) {
        let tri = mesh.tris()[t];
        match self.pressure {
            PressureSpace::P1 => {
                let v = p1_values(l);
                ([tri[0], tri[1], tri[2], 0], [v[0], v[1], v[2], 0.0], 3)
            }
            PressureSpace::P0 => ([t, 0, 0, 0], [1.0, 0.0, 0.0, 0.0], 1),
            PressureSpace::P1P0 => {
                let v = p1_values(l);
                if t == 0 {
                    ([tri[0], tri[1], tri[2], 0], [v[0], v[1], v[2], 0.0], 3)
                } else {
                    (
                        [tri[0], tri[1], tri[2], self.nv + t - 1],
                        [v[0], v[1], v[2], 1.0],
                        4,
                    )
                }
            }
        }
    }

    /// Interpolates a vector field at the velocity nodes (vertex positions
    /// and edge midpoints). Constraints are not applied; pass fields that
    /// respect them where that matters.
    pub fn interpolate_velocity(&self, mesh: &BulkMesh, f: impl Fn(Vec2) -> Vec2) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.velocity_dofs()];
        for (v, p) in mesh.vertices().iter().enumerate() {
            let val = f(*p);
            coeffs[self.vdof(v, 0)] = val.x;
            coeffs[self.vdof(v, 1)] = val.y;
        }
        for (e, [a, b]) in mesh.edges().iter().enumerate() {
            let mid = 0.5 * (mesh.vertices()[*a] + mesh.vertices()[*b]);
            let val = f(mid);
            coeffs[self.vdof(self.nv + e, 0)] = val.x;
            coeffs[self.vdof(self.nv + e, 1)] = val.y;
        }
        coeffs
    }

    /// Velocity value at a barycentric point of element `t`.
    pub fn velocity_at(
        &self,
        mesh: &BulkMesh,
        coeffs: &[f64],
        t: usize,
        l: (f64, f64, f64),
    ) -> Vec2 {
        let nodes = self.velocity_elem_nodes(mesh, t);
        let n = p2_values(l);
        let mut out = Vec2::zeros();
        for k in 0..6 {
            out.x += coeffs[self.vdof(nodes[k], 0)] * n[k];
            out.y += coeffs[self.vdof(nodes[k], 1)] * n[k];
        }
        out
    }

    /// Velocity gradient (`grad[i][j] = ∂u_i/∂x_j`) at a barycentric point
    /// of element `t`.
    pub fn velocity_grad_at(
        &self,
        mesh: &BulkMesh,
        coeffs: &[f64],
        t: usize,
        l: (f64, f64, f64),
    ) -> Mat2 {
        let nodes = self.velocity_elem_nodes(mesh, t);
        let (gl, _) = grad_lambda(mesh.tri_verts(t));
        let g = p2_grads(l, gl);
        let mut out = Mat2::zeros();
        for k in 0..6 {
            let ux = coeffs[self.vdof(nodes[k], 0)];
            let uy = coeffs[self.vdof(nodes[k], 1)];
            out.m11 += ux * g[k].x;
            out.m12 += ux * g[k].y;
            out.m21 += uy * g[k].x;
            out.m22 += uy * g[k].y;
        }
        out
    }

    /// Pressure value at a barycentric point of element `t`.
    pub fn pressure_at(
        &self,
        mesh: &BulkMesh,
        coeffs: &[f64],
        t: usize,
        l: (f64, f64, f64),
    ) -> f64 {
        let (dofs, vals, n) = self.pressure_elem_basis(mesh, t, l);
        (0..n).map(|k| coeffs[dofs[k]] * vals[k]).sum()
    }
}
