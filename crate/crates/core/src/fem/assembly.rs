use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;

use super::{DofMap, SparseOperator, SparsityPattern};
use crate::element::{
    apply_node, build_reference_element, cell_geometry, closed_form_v, derivative_transform, physical_tabulate,
    CellGeometry, EdgeFrame, ElementKind, Node, ReferenceElement, Tabulation,
};
use crate::error::{Error, Result};
use crate::mesh::{deformation_gradient, CurveLoop, Mesh, Point};
use crate::quadrature::{gauss_legendre, triangle_rule_for_degree, LineRule, QuadratureRule};

/// Reference data shared by every assembly: the standard element, a
/// degree-8 triangle rule with the basis tabulated on it, and the edge rule.
pub struct AssemblyContext {
    reference: ReferenceElement,
    rule: QuadratureRule,
    table: Tabulation,
    line: LineRule,
}

impl AssemblyContext {
    pub fn new() -> Result<Self> {
        let reference = build_reference_element(ElementKind::Standard)?;
        let rule = triangle_rule_for_degree(8);
        let points: Vec<Point> = rule.points.iter().map(|p| Point::new(p[0], p[1])).collect();
        let table = reference.tabulate(&points, 3);
        Ok(AssemblyContext { reference, rule, table, line: gauss_legendre(4) })
    }

    pub fn shared() -> &'static AssemblyContext {
        static CONTEXT: OnceLock<AssemblyContext> = OnceLock::new();
        CONTEXT.get_or_init(|| AssemblyContext::new().expect("standard Wu-Xu element is well conditioned"))
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn edge_rule(&self) -> &LineRule {
        &self.line
    }
}

/// `M = V^T` of a cell.
pub fn cell_m(geom: &CellGeometry) -> DMatrix<f64> {
    closed_form_v(ElementKind::Standard, geom).transpose()
}

/// Element matrix of
/// `∫ u v + 3α ∇u·∇v + 3α² Δu Δv + α³ ∇Δu·∇Δv`, row-major 12×12.
pub fn element_matrix(ctx: &AssemblyContext, geom: &CellGeometry, alpha: f64) -> [f64; 144] {
    let v = closed_form_v(ElementKind::Standard, geom);
    let t = derivative_transform(&geom.j_inv);
    let coef = [1.0, 3.0 * alpha, 3.0 * alpha, 3.0 * alpha * alpha, alpha.powi(3), alpha.powi(3)];
    // Rows of T that build each feature from reference derivatives.
    let mut feature_rows = [[0.0; 10]; 6];
    feature_rows[0][0] = 1.0;
    for c in 0..10 {
        feature_rows[1][c] = t[1][c];
        feature_rows[2][c] = t[2][c];
        feature_rows[3][c] = t[3][c] + t[5][c];
        feature_rows[4][c] = t[6][c] + t[8][c];
        feature_rows[5][c] = t[7][c] + t[9][c];
    }
    let ranges = [(0, 1), (1, 3), (1, 3), (3, 6), (6, 10), (6, 10)];
    let jac = geom.det.abs();
    let mut k = [0.0; 144];
    for (q, &w) in ctx.rule.weights.iter().enumerate() {
        // Features of the pulled-back reference functions.
        let mut f = [[0.0; 12]; 6];
        for (feat, &(lo, hi)) in ranges.iter().enumerate() {
            for c in lo..hi {
                let a = feature_rows[feat][c];
                if a == 0.0 {
                    continue;
                }
                for (fj, &r) in f[feat].iter_mut().zip(ctx.table.row(q, c)) {
                    *fj += a * r;
                }
            }
        }
        // Physical basis: ψ_i = Σ_j V_ji ψ̂_j.
        let mut phys = [[0.0; 12]; 6];
        for feat in 0..6 {
            for j in 0..12 {
                let fj = f[feat][j];
                if fj == 0.0 {
                    continue;
                }
                for i in 0..12 {
                    phys[feat][i] += v[(j, i)] * fj;
                }
            }
        }
        let wq = w * jac;
        for feat in 0..6 {
            let c = wq * coef[feat];
            let p = &phys[feat];
            for i in 0..12 {
                let ci = c * p[i];
                for l in 0..12 {
                    k[12 * i + l] += ci * p[l];
                }
            }
        }
    }
    k
}

/// Scalar operator without boundary conditions.
pub fn assemble_scalar(ctx: &AssemblyContext, pattern: &SparsityPattern, mesh: &Mesh, alpha: f64) -> Result<SparseOperator> {
    let elements = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| Ok(element_matrix(ctx, &cell_geometry(mesh, c)?, alpha)))
        .collect::<Result<Vec<_>>>()?;
    let mut op = pattern.empty_operator();
    let values = op.values_mut();
    for (slots, elem) in pattern.cell_slots.iter().zip(&elements) {
        for (s, e) in slots.iter().zip(elem) {
            values[*s] += e;
        }
    }
    Ok(op)
}

/// Vector operator (two interleaved components) with the boundary DOFs
/// clamped.
pub fn assemble_operator(mesh: &Mesh, dofmap: &DofMap, alpha: f64) -> Result<SparseOperator> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha = {alpha} must be positive")));
    }
    let pattern = SparsityPattern::new(mesh, dofmap);
    let mut op = assemble_scalar(AssemblyContext::shared(), &pattern, mesh, alpha)?;
    op.apply_dirichlet(dofmap.boundary_mask());
    Ok(op.interleave())
}

/// Curve load split by component, in scalar numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveLoad {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl CurveLoad {
    pub fn interleaved(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).flat_map(|(&a, &b)| [a, b]).collect()
    }
}

/// Load of the momentum `F̄^{-T} n0 p` on the current curve, weighted by the
/// template facet lengths. Each adjacent cell receives half of the load.
pub fn curve_load(
    ctx: &AssemblyContext,
    mesh0: &Mesh,
    mesh_t: &Mesh,
    curve: &CurveLoop,
    momentum: &[f64],
    dofmap: &DofMap,
) -> Result<CurveLoad> {
    if momentum.len() != curve.len() {
        return Err(Error::ShapeMismatch { expected: curve.len(), found: momentum.len() });
    }
    let n = dofmap.n_scalar();
    let mut load = CurveLoad { x: vec![0.0; n], y: vec![0.0; n] };
    let line = &ctx.line;
    for (k, &p) in momentum.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let e = curve.facets()[k];
        let adj = mesh_t.edge_cells(e);
        let cells = [Some(adj.first), adj.second];
        let mut f_sum = Matrix2::zeros();
        let mut count = 0.0;
        for &c in cells.iter().flatten() {
            f_sum += deformation_gradient(mesh0, mesh_t, c)?;
            count += 1.0;
        }
        let f_bar = f_sum / count;
        let det = f_bar.determinant();
        let f_inv_t = f_bar
            .try_inverse()
            .ok_or(Error::SingularCell { cell: adj.first, det })?
            .transpose();
        let g = f_inv_t * curve.template_normals()[k] * p;
        let (a, b) = curve.facet_vertices(k);
        let (pa, pb) = (mesh_t.vertex(a), mesh_t.vertex(b));
        let points: Vec<Point> = line.points.iter().map(|&s| pa + (pb - pa) * s).collect();
        let scale = curve.template_lengths()[k] / count;
        for &c in cells.iter().flatten() {
            let geom = cell_geometry(mesh_t, c)?;
            let m = cell_m(&geom);
            let tab = physical_tabulate(&ctx.reference, &m, &geom, &points, 0)?;
            let dofs = dofmap.cell_dofs(mesh_t, c);
            for (q, &w) in line.weights.iter().enumerate() {
                for (i, &dof) in dofs.iter().enumerate() {
                    let phi = scale * w * tab.get(q, 0, i);
                    load.x[dof] += phi * g.x;
                    load.y[dof] += phi * g.y;
                }
            }
        }
    }
    for s in 0..n {
        if dofmap.is_boundary(s) {
            load.x[s] = 0.0;
            load.y[s] = 0.0;
        }
    }
    Ok(load)
}

/// Interleaved right-hand side for the vector operator.
pub fn assemble_curve_rhs(
    mesh0: &Mesh,
    mesh_t: &Mesh,
    curve: &CurveLoop,
    momentum: &[f64],
    dofmap: &DofMap,
) -> Result<Vec<f64>> {
    Ok(curve_load(AssemblyContext::shared(), mesh0, mesh_t, curve, momentum, dofmap)?.interleaved())
}

/// Scalar DOFs of a smooth function given by its derivative table (up to
/// order 2 is read). Edge moments are un-averaged integrals along the edge.
pub fn interpolate(mesh: &Mesh, dofmap: &DofMap, f: &dyn Fn(Point) -> [f64; 10]) -> Vec<f64> {
    let mut dofs = vec![0.0; dofmap.n_scalar()];
    for (v, &x) in mesh.vertices().iter().enumerate() {
        let d = f(x);
        let s = dofmap.vertex_dof(v);
        dofs[s..s + 3].copy_from_slice(&d[..3]);
    }
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        let frame = EdgeFrame::new(mesh.vertex(a), mesh.vertex(b));
        let vertices = [frame.a, frame.b, frame.a];
        dofs[dofmap.edge_dof(e)] =
            apply_node(Node::NormalNormalMoment { edge: 0 }, &vertices, &[frame; 3], false, f);
    }
    dofs
}

/// Derivative tables (up to `max_order`) of a scalar field at points of one
/// cell.
pub fn evaluate_in_cell(
    ctx: &AssemblyContext,
    mesh: &Mesh,
    dofmap: &DofMap,
    dofs: &[f64],
    cell: usize,
    points: &[Point],
    max_order: usize,
) -> Result<Vec<Vec<f64>>> {
    let geom = cell_geometry(mesh, cell)?;
    let tab = physical_tabulate(&ctx.reference, &cell_m(&geom), &geom, points, max_order)?;
    let cd = dofmap.cell_dofs(mesh, cell);
    Ok((0..points.len())
        .map(|q| {
            (0..tab.n_derivs)
                .map(|d| cd.iter().enumerate().map(|(i, &s)| dofs[s] * tab.get(q, d, i)).sum())
                .collect()
        })
        .collect())
}

/// Frobenius norm of the velocity gradient at every cell centroid.
pub fn centroid_gradient_norms(ctx: &AssemblyContext, mesh: &Mesh, dofmap: &DofMap, ux: &[f64], uy: &[f64]) -> Result<Vec<f64>> {
    (0..mesh.n_cells())
        .map(|c| {
            let [a, b, d] = mesh.cell_points(c);
            let centroid = [(a + b + d) / 3.0];
            let gx = &evaluate_in_cell(ctx, mesh, dofmap, ux, c, &centroid, 1)?[0];
            let gy = &evaluate_in_cell(ctx, mesh, dofmap, uy, c, &centroid, 1)?[0];
            Ok((gx[1] * gx[1] + gx[2] * gx[2] + gy[1] * gy[1] + gy[2] * gy[2]).sqrt())
        })
        .collect()
}
