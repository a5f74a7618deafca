//! The Wu-Xu H³-nonconforming triangle and its robust variant.
//!
//! Reference basis functions are built once on the unit triangle. Physical
//! basis functions are combinations of pulled-back reference functions with
//! weights `M = V^T`, since the element is not affine-equivalent.

mod derivs;
mod geometry;
mod reference;
mod transform;

use crate::mesh::Point;
use crate::quadrature::gauss_legendre;

pub use derivs::{deriv_index, derivative_transform, N_DERIVS};
pub use geometry::{cell_geometry, cell_geometry_with_ids, CellGeometry};
pub use reference::{build_reference_element, ReferenceElement, Tabulation};
pub use transform::{closed_form_v, duality_error, physical_tabulate, transform, TransformMatrices};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// `P3 + b P1`, 12 DOFs.
    Standard,
    /// `P3 + b P1 + b² P1`, 15 DOFs.
    Robust,
}

impl ElementKind {
    pub fn n_dofs(self) -> usize {
        match self {
            ElementKind::Standard => 12,
            ElementKind::Robust => 15,
        }
    }

    /// Size of the completed node set.
    pub fn n_completed(self) -> usize {
        match self {
            ElementKind::Standard => 18,
            ElementKind::Robust => 24,
        }
    }
}

/// One degree of freedom. Vertices and edges are local to the cell; edge `i`
/// is opposite vertex `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Value { vertex: usize },
    /// Cartesian derivative, component 0 = x, 1 = y.
    Gradient { vertex: usize, component: usize },
    /// Moment of the first normal derivative along an edge.
    NormalMoment { edge: usize },
    /// Moment of the second normal derivative along an edge.
    NormalNormalMoment { edge: usize },
}

impl Node {
    pub fn list(kind: ElementKind) -> Vec<Node> {
        let mut nodes = Vec::with_capacity(kind.n_dofs());
        for vertex in 0..3 {
            nodes.push(Node::Value { vertex });
            nodes.push(Node::Gradient { vertex, component: 0 });
            nodes.push(Node::Gradient { vertex, component: 1 });
        }
        if kind == ElementKind::Robust {
            nodes.extend((0..3).map(|edge| Node::NormalMoment { edge }));
        }
        nodes.extend((0..3).map(|edge| Node::NormalNormalMoment { edge }));
        nodes
    }
}

/// Oriented edge: tangent `t` from `a` to `b`, normal `n = (t_y, -t_x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeFrame {
    pub a: Point,
    pub b: Point,
    pub t: Point,
    pub n: Point,
    pub length: f64,
}

impl EdgeFrame {
    pub fn new(a: Point, b: Point) -> Self {
        let d = b - a;
        let length = d.norm();
        let t = d / length;
        EdgeFrame { a, b, t, n: Point::new(t.y, -t.x), length }
    }
}

/// Applies a node functional to a function given by its derivative table
/// (ordered as in [`deriv_index`], up to order 2). With `averaged` set, edge
/// moments are divided by the edge length.
pub fn apply_node(
    node: Node,
    vertices: &[Point; 3],
    edges: &[EdgeFrame; 3],
    averaged: bool,
    f: &dyn Fn(Point) -> [f64; 10],
) -> f64 {
    match node {
        Node::Value { vertex } => f(vertices[vertex])[0],
        Node::Gradient { vertex, component } => f(vertices[vertex])[1 + component],
        Node::NormalMoment { edge } | Node::NormalNormalMoment { edge } => {
            let e = &edges[edge];
            let rule = gauss_legendre(4);
            let mut sum = 0.0;
            for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                let d = f(e.a + (e.b - e.a) * s);
                let n = e.n;
                let value = match node {
                    Node::NormalMoment { .. } => n.x * d[1] + n.y * d[2],
                    _ => n.x * n.x * d[3] + 2.0 * n.x * n.y * d[4] + n.y * n.y * d[5],
                };
                sum += w * value;
            }
            if averaged {
                sum
            } else {
                sum * e.length
            }
        }
    }
}
