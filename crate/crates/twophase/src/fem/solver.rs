//! Sparse system accumulation and the direct solver wrapper.
//!
//! [`SparseSystem`] collects triplets and a right-hand side while silently
//! dropping contributions to constrained (wall) dofs; those receive identity
//! rows instead, pinning them to zero.
//!
//! [`DirectSolver`] wraps a sparse LU factorization. A factorization of a
//! previous, nearby matrix can be reused as a preconditioner for iterative
//! refinement (defect correction); the solver measures the true residual
//! and refactors automatically when reuse does not converge fast enough.
//! Every returned solution is residual-checked.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

use crate::{Error, Result};

/// Pins the underlying linear algebra to a single thread so repeated runs
/// reduce floating-point sums in the same order and produce bit-identical
/// results.
pub fn force_sequential_linear_algebra() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Accumulator for one linear system `A x = b` with homogeneous constraints.
#[derive(Clone)]
pub struct SparseSystem {
    n: usize,
    trips: Vec<Triplet<usize, usize, f64>>,
    rhs: Vec<f64>,
    constrained: Vec<bool>,
    /// Identity rows for constrained dofs already appended to `trips`.
    finalized: bool,
}

impl SparseSystem {
    /// Creates an empty `n × n` system.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            trips: Vec::new(),
            rhs: vec![0.0; n],
            constrained: vec![false; n],
            finalized: false,
        }
    }

    /// Size of the system.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Marks a dof as constrained to zero: its row becomes an identity row
    /// and all contributions to or from it are dropped.
    pub fn constrain(&mut self, dof: usize) {
        self.constrained[dof] = true;
        self.rhs[dof] = 0.0;
    }

    /// Whether a dof is constrained.
    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    /// Adds `v` at `(r, c)` unless the entry touches a constrained dof.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 && !self.constrained[r] && !self.constrained[c] {
            self.trips.push(Triplet::new(r, c, v));
        }
    }

    /// Adds `v` to the right-hand side at `r` unless constrained.
    #[inline]
    pub fn add_rhs(&mut self, r: usize, v: f64) {
        if !self.constrained[r] {
            self.rhs[r] += v;
        }
    }

    /// Right-hand side access (e.g. for norms).
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Number of accumulated triplets (before merging duplicates).
    pub fn triplet_count(&self) -> usize {
        self.trips.len()
    }

    /// Builds the compressed matrix, with identity rows on constrained dofs.
    fn matrix(&mut self) -> Result<SparseColMat<usize, f64>> {
        if !self.finalized {
            for d in 0..self.n {
                if self.constrained[d] {
                    self.trips.push(Triplet::new(d, d, 1.0));
                    self.rhs[d] = 0.0;
                }
            }
            self.finalized = true;
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &self.trips)
            .map_err(|e| Error::Solver(format!("building sparse matrix: {e:?}")))
    }

    /// Residual `b − A x` computed from the raw triplets (duplicates sum,
    /// matching the compressed matrix exactly in exact arithmetic).
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.rhs.clone();
        for t in &self.trips {
            r[t.row] -= t.val * x[t.col];
        }
        r
    }

    /// Matrix-vector product from the raw triplets (test oracle).
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.trips {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    /// Infinity norm of the matrix (row sums of absolute values).
    fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0f64; self.n];
        for t in &self.trips {
            rows[t.row] += t.val.abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Writes the system in MatrixMarket coordinate format together with the
    /// right-hand side (as comment-separated vector block); a debugging aid
    /// for failed solves.
    pub fn dump_matrix_market(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{} {} {}", self.n, self.n, self.trips.len());
        for t in &self.trips {
            let _ = writeln!(out, "{} {} {:.17e}", t.row + 1, t.col + 1, t.val);
        }
        let _ = writeln!(out, "% rhs");
        for v in &self.rhs {
            let _ = writeln!(out, "{v:.17e}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Direct solver with factorization reuse across nearby systems.
#[derive(Default)]
pub struct DirectSolver {
    factor: Option<(usize, Lu<usize, f64>)>,
    /// Numeric factorizations performed (diagnostic).
    pub factor_count: usize,
}

/// Relative residual accepted from a solve.
const RESIDUAL_TOL: f64 = 1e-10;
/// Relative residual below which refinement stops early (machine level; the
/// conservation identities are only as exact as the solved rows, so
/// refinement continues well past the acceptance threshold while it helps).
const REFINE_TARGET: f64 = 1e-15;
/// Refinement steps tried on a factorization before giving up on it.
const MAX_REFINE: usize = 12;

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops any stored factorization (forces a fresh factorization next
    /// solve).
    pub fn invalidate(&mut self) {
        self.factor = None;
    }

    /// Solves the accumulated system, reusing the previous factorization as
    /// a preconditioner when available.
    ///
    /// The result always satisfies
    /// `‖b − A x‖_∞ ≤ tol (‖A‖_∞ ‖x‖_∞ + ‖b‖_∞)` with `tol = 1e-10`,
    /// otherwise an error is returned.
    pub fn solve(&mut self, sys: &mut SparseSystem) -> Result<Vec<f64>> {
        let n = sys.dim();
        let a = sys.matrix()?;
        let bnorm = sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let anorm = sys.norm_inf();
        let scale = |x: &[f64]| {
            let xnorm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (anorm * xnorm + bnorm).max(f64::MIN_POSITIVE)
        };
        let ok = |x: &[f64], r: &[f64]| {
            // A singular factorization yields ±inf components and a NaN
            // residual; `f64::max` ignores NaN, so finiteness is checked
            // explicitly before the backward-error bound.
            if !x.iter().all(|v| v.is_finite()) {
                return false;
            }
            let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            rnorm.is_finite() && rnorm <= RESIDUAL_TOL * scale(x)
        };
        // Iterative refinement until the residual reaches machine level or
        // stops halving. Returns the final residual so callers can accept.
        let refine = |lu: &Lu<usize, f64>, x: &mut Vec<f64>, r: &mut Vec<f64>| {
            let mut rprev = f64::INFINITY;
            for _ in 0..MAX_REFINE {
                let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !rnorm.is_finite()
                    || rnorm >= 0.5 * rprev
                    || rnorm <= REFINE_TARGET * scale(x)
                {
                    break;
                }
                rprev = rnorm;
                let dx = lu_solve(lu, r);
                for i in 0..n {
                    x[i] += dx[i];
                }
                *r = sys.residual(x);
            }
        };

        // Try defect correction with the stored factorization.
        if let Some((fn_, lu)) = &self.factor {
            if *fn_ == n {
                let mut x = lu_solve(lu, &sys.rhs);
                let mut r = sys.residual(&x);
                refine(lu, &mut x, &mut r);
                if ok(&x, &r) {
                    return Ok(x);
                }
            }
        }

        // Fresh factorization.
        let sym = SymbolicLu::try_new(a.symbolic())
            .map_err(|e| Error::Solver(format!("symbolic factorization: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(sym, a.as_ref())
            .map_err(|e| Error::Solver(format!("numeric factorization: {e:?}")))?;
        self.factor_count += 1;
        let mut x = lu_solve(&lu, &sys.rhs);
        let mut r = sys.residual(&x);
        refine(&lu, &mut x, &mut r);
        self.factor = Some((n, lu));
        if !ok(&x, &r) {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Solver(
                    "factorization produced a non-finite solution (singular matrix)".into(),
                ));
            }
            let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::Solver(format!(
                "residual {rnorm:.3e} exceeds tolerance (‖A‖∞ = {anorm:.3e}, ‖b‖∞ = {bnorm:.3e})"
            )));
        }
        Ok(x)
    }
}

fn lu_solve(lu: &Lu<usize, f64>, b: &[f64]) -> Vec<f64> {
    let rhs = faer::Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}
