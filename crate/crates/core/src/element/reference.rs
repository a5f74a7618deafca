use nalgebra::DMatrix;

use super::derivs::{deriv_index, N_DERIVS};
use super::{apply_node, EdgeFrame, ElementKind, Node};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::poly::Poly2;

const MAX_CONDITION: f64 = 1e12;

/// Nodal basis on the unit triangle `(0,0), (1,0), (0,1)`. Reference edge
/// moments are averaged over the edge.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    kind: ElementKind,
    nodes: Vec<Node>,
    vertices: [Point; 3],
    edges: [EdgeFrame; 3],
    /// Column `j` holds the spanning-set coefficients of basis function `j`.
    coefficients: DMatrix<f64>,
    /// `derivatives[j][d]` is derivative `d` of basis function `j`.
    derivatives: Vec<[Poly2; 10]>,
    condition: f64,
}

/// Values and derivatives of every basis function at a list of points.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub n_points: usize,
    pub n_derivs: usize,
    pub n_basis: usize,
    data: Vec<f64>,
}

impl Tabulation {
    pub(crate) fn zeros(n_points: usize, n_derivs: usize, n_basis: usize) -> Self {
        Tabulation { n_points, n_derivs, n_basis, data: vec![0.0; n_points * n_derivs * n_basis] }
    }

    #[inline]
    fn offset(&self, point: usize, deriv: usize, basis: usize) -> usize {
        (point * self.n_derivs + deriv) * self.n_basis + basis
    }

    #[inline]
    pub fn get(&self, point: usize, deriv: usize, basis: usize) -> f64 {
        self.data[self.offset(point, deriv, basis)]
    }

    #[inline]
    pub(crate) fn set(&mut self, point: usize, deriv: usize, basis: usize, value: f64) {
        let i = self.offset(point, deriv, basis);
        self.data[i] = value;
    }

    /// All basis values of one derivative at one point.
    pub fn row(&self, point: usize, deriv: usize) -> &[f64] {
        let i = self.offset(point, deriv, 0);
        &self.data[i..i + self.n_basis]
    }
}

fn spanning_set(kind: ElementKind) -> Vec<Poly2> {
    let mut set = Vec::new();
    for degree in 0..=3 {
        for j in 0..=degree {
            set.push(Poly2::monomial(degree - j, j));
        }
    }
    let bubble = Poly2::monomial(1, 0) * Poly2::monomial(0, 1) * Poly2::linear(1.0, -1.0, -1.0);
    set.push(bubble * Poly2::monomial(1, 0));
    set.push(bubble * Poly2::monomial(0, 1));
    if kind == ElementKind::Robust {
        let b2 = bubble * bubble;
        set.push(b2);
        set.push(b2 * Poly2::monomial(1, 0));
        set.push(b2 * Poly2::monomial(0, 1));
    }
    set
}

fn derivative_polys(p: &Poly2) -> [Poly2; 10] {
    let mut out: [Poly2; 10] = Default::default();
    for order in 0..=3 {
        for py in 0..=order {
            out[deriv_index(order - py, py)] = p.derivative(order - py, py);
        }
    }
    out
}

fn eval_table(polys: &[Poly2; 10], p: Point) -> [f64; 10] {
    let mut out = [0.0; 10];
    for (o, q) in out.iter_mut().zip(polys) {
        *o = q.eval(p.x, p.y);
    }
    out
}

/// Reference vertices and edges; edge `i` joins the two vertices other than
/// `i`, oriented from the lower local index to the higher.
pub(crate) fn reference_frames() -> ([Point; 3], [EdgeFrame; 3]) {
    let v = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
    let edges = [EdgeFrame::new(v[1], v[2]), EdgeFrame::new(v[0], v[2]), EdgeFrame::new(v[0], v[1])];
    (v, edges)
}

pub fn build_reference_element(kind: ElementKind) -> Result<ReferenceElement> {
    let nodes = Node::list(kind);
    let span = spanning_set(kind);
    let n = nodes.len();
    debug_assert_eq!(span.len(), n);
    let (vertices, edges) = reference_frames();
    let span_derivs: Vec<[Poly2; 10]> = span.iter().map(derivative_polys).collect();
    let vandermonde = DMatrix::from_fn(n, n, |i, j| {
        apply_node(nodes[i], &vertices, &edges, true, &|p| eval_table(&span_derivs[j], p))
    });
    let sv = vandermonde.clone().singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    let coefficients = vandermonde.try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let derivatives = (0..n)
        .map(|j| {
            let mut p = Poly2::zero();
            for (k, s) in span.iter().enumerate() {
                p = p + s.scale(coefficients[(k, j)]);
            }
            derivative_polys(&p)
        })
        .collect();
    Ok(ReferenceElement { kind, nodes, vertices, edges, coefficients, derivatives, condition })
}

impl ReferenceElement {
    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn n_dofs(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn vertices(&self) -> &[Point; 3] {
        &self.vertices
    }

    pub fn edges(&self) -> &[EdgeFrame; 3] {
        &self.edges
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Condition number of the generalized Vandermonde matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Derivative table (all 10 entries) of basis function `j` at `p`.
    pub fn eval_basis(&self, j: usize, p: Point) -> [f64; 10] {
        eval_table(&self.derivatives[j], p)
    }

    /// Applies reference node `i` to a function given by its derivative table.
    pub fn apply_node(&self, i: usize, f: &dyn Fn(Point) -> [f64; 10]) -> f64 {
        apply_node(self.nodes[i], &self.vertices, &self.edges, true, f)
    }

    pub fn tabulate(&self, points: &[Point], max_order: usize) -> Tabulation {
        assert!(max_order <= 3, "derivatives above order 3 are not tabulated");
        let nd = N_DERIVS[max_order];
        let mut tab = Tabulation::zeros(points.len(), nd, self.n_dofs());
        for (q, p) in points.iter().enumerate() {
            for j in 0..self.n_dofs() {
                for d in 0..nd {
                    tab.set(q, d, j, self.derivatives[j][d].eval(p.x, p.y));
                }
            }
        }
        tab
    }
}
