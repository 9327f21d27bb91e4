//! Finite element infrastructure: quadrature rules, Lagrange shape
//! functions, mixed velocity/pressure spaces, form assembly, and the sparse
//! direct solver wrapper.

pub mod assembly;
pub mod elements;
pub mod quadrature;
pub mod solver;
pub mod space;
