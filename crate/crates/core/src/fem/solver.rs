use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};

use super::SparseOperator;
use crate::error::{Error, Result};

/// Relative residual every solve must reach.
pub const SOLVE_TOL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 8;
const FLOOR_FACTOR: f64 = 4.0;

static SEQUENTIAL: Once = Once::new();

/// Ensembles already run members in parallel, so the factorization itself
/// stays single-threaded.
fn init_faer() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

fn as_faer(a: &SparseOperator) -> SparseColMatRef<'_, usize, f64> {
    let n = a.dim();
    let sym = SymbolicSparseColMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
    SparseColMatRef::new(sym, a.values())
}

/// Symbolic Cholesky analysis, reusable for every operator with the same
/// pattern.
pub fn analyze(a: &SparseOperator) -> Result<SymbolicLlt<usize>> {
    init_faer();
    SymbolicLlt::try_new(as_faer(a).symbolic(), Side::Lower).map_err(|_| Error::NotPositiveDefinite)
}

/// Sparse Cholesky factorization with iterative refinement.
pub struct SpdSolver<'a> {
    a: &'a SparseOperator,
    llt: Llt<usize, f64>,
}

impl<'a> SpdSolver<'a> {
    pub fn new(a: &'a SparseOperator) -> Result<Self> {
        let symbolic = analyze(a)?;
        Self::with_symbolic(a, symbolic)
    }

    pub fn with_symbolic(a: &'a SparseOperator, symbolic: SymbolicLlt<usize>) -> Result<Self> {
        init_faer();
        let llt = Llt::try_new_with_symbolic(symbolic, as_faer(a), Side::Lower).map_err(|_| Error::NotPositiveDefinite)?;
        Ok(SpdSolver { a, llt })
    }

    /// Solves `A x = b` for every right-hand side.
    pub fn solve_many(&self, rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let n = self.a.dim();
        let k = rhs.len();
        for b in rhs {
            if b.len() != n {
                return Err(Error::ShapeMismatch { expected: n, found: b.len() });
            }
        }
        let b = Mat::<f64>::from_fn(n, k, |i, j| rhs[j][i]);
        let x = self.llt.solve(&b);
        let mut out: Vec<Vec<f64>> = (0..k).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect();
        for (j, xj) in out.iter_mut().enumerate() {
            let bnorm = norm(rhs[j]);
            if bnorm == 0.0 {
                xj.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            let mut refinements = 0;
            loop {
                let r = accurate_residual(self.a, xj, rhs[j]);
                let rel = norm(&r) / bnorm;
                if !rel.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                if rel <= SOLVE_TOL {
                    break;
                }
                // Already at the round-off floor of the operator: further
                // passes only shuffle the last bits of x.
                if refinements >= 2 && rel <= FLOOR_FACTOR * residual_floor(self.a, xj, rhs[j]) {
                    break;
                }
                if refinements == MAX_REFINEMENTS {
                    return Err(Error::NotConverged { residual: rel, iterations: refinements });
                }
                let rm = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
                let d = self.llt.solve(&rm);
                for (i, v) in xj.iter_mut().enumerate() {
                    *v += d[(i, 0)];
                }
                refinements += 1;
            }
        }
        Ok(out)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(&[b])?.pop().expect("one right-hand side"))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One-shot SPD solve with relative residual at most [`SOLVE_TOL`].
pub fn solve_spd(a: &SparseOperator, b: &[f64]) -> Result<Vec<f64>> {
    SpdSolver::new(a)?.solve(b)
}

/// `b − Ax` with every row evaluated in doubled precision (error-free
/// products and sums), so that round-off in the residual itself does not
/// mask the refinement on operators with widely spread entries.
fn accurate_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.dim())
        .map(|i| {
            let (cols, vals) = a.row(i);
            let (mut hi, mut lo) = (b[i], 0.0);
            for (&j, &aij) in cols.iter().zip(vals) {
                let p = -aij * x[j];
                let pe = (-aij).mul_add(x[j], -p);
                let s = hi + p;
                let bp = s - hi;
                let se = (hi - (s - bp)) + (p - bp);
                hi = s;
                lo += se + pe;
            }
            hi + lo
        })
        .collect()
}

/// Round-off floor of the relative residual: `u ‖|A| |x|‖ / ‖b‖` with `u`
/// the unit round-off. No double-precision `x` can be certified below it.
pub fn residual_floor(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax: Vec<f64> = (0..a.dim())
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter().zip(vals).map(|(&j, v)| (v * x[j]).abs()).sum()
        })
        .collect();
    0.5 * f64::EPSILON * norm(&ax) / norm(b).max(f64::MIN_POSITIVE)
}

/// Relative residual `‖Ax − b‖ / ‖b‖`.
pub fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    norm(&accurate_residual(a, x, b)) / norm(b).max(f64::MIN_POSITIVE)
}
