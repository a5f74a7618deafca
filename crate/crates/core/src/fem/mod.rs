//! Global assembly of the sixth-order velocity operator and the curve load,
//! and the sparse SPD solve.

mod assembly;
mod dofmap;
mod solver;
mod sparse;

pub use assembly::{
    assemble_curve_rhs, assemble_operator, assemble_scalar, cell_m, centroid_gradient_norms, curve_load,
    element_matrix, evaluate_in_cell, interpolate, AssemblyContext, CurveLoad,
};
pub use dofmap::DofMap;
pub use solver::{analyze, relative_residual, residual_floor, solve_spd, SpdSolver, SOLVE_TOL};
pub use sparse::{SparseOperator, SparsityPattern};
