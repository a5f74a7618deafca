use nalgebra::DMatrix;

use super::derivs::{derivative_transform, N_DERIVS};
use super::reference::{ReferenceElement, Tabulation};
use super::{apply_node, CellGeometry, ElementKind};
use crate::error::{Error, Result};
use crate::mesh::Point;

const DUALITY_TOL: f64 = 1e-9;

/// `V = E V^C D` and `M = V^T` for one cell.
#[derive(Clone, Debug)]
pub struct TransformMatrices {
    pub kind: ElementKind,
    pub d: DMatrix<f64>,
    pub vc: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

/// Rows of the completed node set where each edge block starts. The
/// standard completion is `[vertices(9), (nn, nt, tt) x 3]`; the robust one
/// inserts `(n, t) x 3` before the second-derivative blocks.
fn completed_layout(kind: ElementKind) -> (Option<usize>, usize) {
    match kind {
        ElementKind::Standard => (None, 9),
        ElementKind::Robust => (Some(9), 15),
    }
}

fn build_d(kind: ElementKind, geom: &CellGeometry) -> DMatrix<f64> {
    let (first, second) = completed_layout(kind);
    let n = kind.n_dofs();
    let nn_col = n - 3;
    let mut d = DMatrix::zeros(kind.n_completed(), n);
    for r in 0..9 {
        d[(r, r)] = 1.0;
    }
    for i in 0..3 {
        let (a, b) = geom.ends[i];
        let (nrm, tan) = (geom.edges[i].n, geom.edges[i].t);
        if let Some(base) = first {
            let r = base + 2 * i;
            d[(r, 9 + i)] = 1.0;
            d[(r + 1, 3 * a)] = -1.0;
            d[(r + 1, 3 * b)] = 1.0;
        }
        let r = second + 3 * i;
        d[(r, nn_col + i)] = 1.0;
        for (row, dir) in [(r + 1, nrm), (r + 2, tan)] {
            d[(row, 3 * a + 1)] = -dir.x;
            d[(row, 3 * a + 2)] = -dir.y;
            d[(row, 3 * b + 1)] = dir.x;
            d[(row, 3 * b + 2)] = dir.y;
        }
    }
    d
}

fn build_vc(kind: ElementKind, geom: &CellGeometry) -> DMatrix<f64> {
    let (first, second) = completed_layout(kind);
    let mut vc = DMatrix::zeros(kind.n_completed(), kind.n_completed());
    let jt = geom.j.transpose();
    for v in 0..3 {
        vc[(3 * v, 3 * v)] = 1.0;
        vc.view_mut((3 * v + 1, 3 * v + 1), (2, 2)).copy_from(&jt);
    }
    for i in 0..3 {
        if let Some(base) = first {
            vc.view_mut((base + 2 * i, base + 2 * i), (2, 2)).copy_from(&geom.b1[i]);
        }
        let r = second + 3 * i;
        vc.view_mut((r, r), (3, 3)).copy_from(&geom.b2[i]);
    }
    vc
}

fn build_e(kind: ElementKind) -> DMatrix<f64> {
    let (first, second) = completed_layout(kind);
    let mut rows: Vec<usize> = (0..9).collect();
    if let Some(base) = first {
        rows.extend((0..3).map(|i| base + 2 * i));
    }
    rows.extend((0..3).map(|i| second + 3 * i));
    let mut e = DMatrix::zeros(kind.n_dofs(), kind.n_completed());
    for (r, &c) in rows.iter().enumerate() {
        e[(r, c)] = 1.0;
    }
    e
}

/// `V` written out entry by entry: Jacobian blocks at the vertices, `±β` and
/// `B^{2,i}_{11}` in the second-moment rows, `±B^{1,i}_{12}` and
/// `B^{1,i}_{11}` in the robust first-moment rows.
pub fn closed_form_v(kind: ElementKind, geom: &CellGeometry) -> DMatrix<f64> {
    let n = kind.n_dofs();
    let mut v = DMatrix::zeros(n, n);
    for k in 0..3 {
        v[(3 * k, 3 * k)] = 1.0;
        for r in 0..2 {
            for c in 0..2 {
                v[(3 * k + 1 + r, 3 * k + 1 + c)] = geom.j[(c, r)];
            }
        }
    }
    let nn_row = n - 3;
    for i in 0..3 {
        let (a, b) = geom.ends[i];
        if kind == ElementKind::Robust {
            let r = 9 + i;
            v[(r, r)] = geom.b1[i][(0, 0)];
            v[(r, 3 * a)] -= geom.b1[i][(0, 1)];
            v[(r, 3 * b)] += geom.b1[i][(0, 1)];
        }
        let r = nn_row + i;
        let beta = geom.beta[i];
        v[(r, r)] = geom.b2[i][(0, 0)];
        v[(r, 3 * a + 1)] -= beta.x;
        v[(r, 3 * a + 2)] -= beta.y;
        v[(r, 3 * b + 1)] += beta.x;
        v[(r, 3 * b + 2)] += beta.y;
    }
    v
}

/// Builds all transformation matrices. With `check_duality` set, the
/// physical basis is verified against the physical node functionals.
pub fn transform(re: &ReferenceElement, geom: &CellGeometry, check_duality: bool) -> Result<TransformMatrices> {
    let kind = re.kind();
    let d = build_d(kind, geom);
    let vc = build_vc(kind, geom);
    let e = build_e(kind);
    let v = &e * &vc * &d;
    let m = v.transpose();
    if check_duality {
        let err = duality_error(re, geom, &m);
        if !(err <= DUALITY_TOL) {
            return Err(Error::DualityFailure(err));
        }
    }
    Ok(TransformMatrices { kind, d, vc, e, v, m })
}

/// Physical basis derivative table of function `i` at a physical point.
fn eval_physical(re: &ReferenceElement, geom: &CellGeometry, m: &DMatrix<f64>, t: &[[f64; 10]; 10], i: usize, x: Point) -> [f64; 10] {
    let xh = geom.to_reference(x);
    let mut out = [0.0; 10];
    for j in 0..re.n_dofs() {
        let mij = m[(i, j)];
        if mij == 0.0 {
            continue;
        }
        let r = re.eval_basis(j, xh);
        for (row, o) in out.iter_mut().enumerate() {
            let dphys: f64 = (0..10).map(|c| t[row][c] * r[c]).sum();
            *o += mij * dphys;
        }
    }
    out
}

/// Max `|n_i(ψ_j) − δ_ij|` over the physical nodes (un-averaged edge
/// moments) and the physical basis `ψ = M ψ̂∘F^{-1}`.
pub fn duality_error(re: &ReferenceElement, geom: &CellGeometry, m: &DMatrix<f64>) -> f64 {
    let t = derivative_transform(&geom.j_inv);
    let n = re.n_dofs();
    let mut worst: f64 = 0.0;
    for (i, &node) in re.nodes().iter().enumerate() {
        for j in 0..n {
            let value = apply_node(node, &geom.vertices, &geom.edges, false, &|x| eval_physical(re, geom, m, &t, j, x));
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((value - expected).abs());
        }
    }
    worst
}

/// Physical basis values and derivatives (up to `max_order`) at physical
/// points of the cell.
pub fn physical_tabulate(
    re: &ReferenceElement,
    m: &DMatrix<f64>,
    geom: &CellGeometry,
    points: &[Point],
    max_order: usize,
) -> Result<Tabulation> {
    let tol = 1e-10;
    let mut ref_points = Vec::with_capacity(points.len());
    for &x in points {
        let xh = geom.to_reference(x);
        if xh.x < -tol || xh.y < -tol || xh.x + xh.y > 1.0 + tol {
            return Err(Error::PointOutsideCell { x: x.x, y: x.y });
        }
        ref_points.push(xh);
    }
    let reference = re.tabulate(&ref_points, max_order);
    Ok(push_forward(&reference, m, geom, max_order))
}

/// Applies the chain rule and the `M` recombination to a reference table.
pub(crate) fn push_forward(reference: &Tabulation, m: &DMatrix<f64>, geom: &CellGeometry, max_order: usize) -> Tabulation {
    let nd = N_DERIVS[max_order];
    let n = reference.n_basis;
    let t = derivative_transform(&geom.j_inv);
    let mut out = Tabulation::zeros(reference.n_points, nd, n);
    let mut phys = vec![0.0; nd * n];
    for q in 0..reference.n_points {
        phys.iter_mut().for_each(|x| *x = 0.0);
        for row in 0..nd {
            // Derivatives of a given order only mix with the same order.
            let (lo, hi) = order_range(row);
            for c in lo..hi {
                let w = t[row][c];
                if w == 0.0 {
                    continue;
                }
                let src = reference.row(q, c);
                for j in 0..n {
                    phys[row * n + j] += w * src[j];
                }
            }
        }
        for row in 0..nd {
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += m[(i, j)] * phys[row * n + j];
                }
                out.set(q, row, i, s);
            }
        }
    }
    out
}

fn order_range(row: usize) -> (usize, usize) {
    match row {
        0 => (0, 1),
        1..=2 => (1, 3),
        3..=5 => (3, 6),
        _ => (6, 10),
    }
}
