use nalgebra::{Matrix2, Matrix3};

use super::reference::reference_frames;
use super::EdgeFrame;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Per-cell geometric data for the basis transformation.
///
/// `j` is the Jacobian of the affine map from the reference triangle,
/// `j[(r, c)] = ∂x_r/∂x̂_c`. Physical edges are oriented from the lower
/// global vertex id to the higher one, so neighbouring cells agree on the
/// edge frame.
#[derive(Clone, Debug)]
pub struct CellGeometry {
    pub vertices: [Point; 3],
    pub j: Matrix2<f64>,
    pub j_inv: Matrix2<f64>,
    pub det: f64,
    pub edges: [EdgeFrame; 3],
    /// Local vertex indices `(a, b)` of each edge in tangent direction.
    pub ends: [(usize, usize); 3],
    /// Rows `n_i`, `t_i`.
    pub g: [Matrix2<f64>; 3],
    pub gamma: [Matrix3<f64>; 3],
    pub gamma_inv: [Matrix3<f64>; 3],
    pub theta: Matrix3<f64>,
    pub theta_inv: Matrix3<f64>,
    pub b1: [Matrix2<f64>; 3],
    pub b2: [Matrix3<f64>; 3],
    pub beta: [Point; 3],
}

fn frame_matrix(e: &EdgeFrame) -> Matrix2<f64> {
    Matrix2::new(e.n.x, e.n.y, e.t.x, e.t.y)
}

/// nt-coordinates of the Hessian to Cartesian `[xx, xy, yy]`.
pub(crate) fn gamma(e: &EdgeFrame) -> Matrix3<f64> {
    let (n, t) = (e.n, e.t);
    Matrix3::new(
        n.x * n.x, 2.0 * n.x * t.x, t.x * t.x,
        n.x * n.y, n.x * t.y + n.y * t.x, t.x * t.y,
        n.y * n.y, 2.0 * n.y * t.y, t.y * t.y,
    )
}

pub(crate) fn gamma_inv(e: &EdgeFrame) -> Matrix3<f64> {
    let (n, t) = (e.n, e.t);
    Matrix3::new(
        n.x * n.x, 2.0 * n.x * n.y, n.y * n.y,
        n.x * t.x, n.x * t.y + n.y * t.x, n.y * t.y,
        t.x * t.x, 2.0 * t.x * t.y, t.y * t.y,
    )
}

/// Maps the Hessian triple `[xx, xy, yy]` on one side of an affine map with
/// Jacobian `a` (`a[(r, c)] = ∂y_r/∂z_c`) to the triple on the other side.
fn hessian_map(a: &Matrix2<f64>) -> Matrix3<f64> {
    Matrix3::new(
        a[(0, 0)] * a[(0, 0)], 2.0 * a[(0, 0)] * a[(1, 0)], a[(1, 0)] * a[(1, 0)],
        a[(0, 1)] * a[(0, 0)], a[(0, 1)] * a[(1, 0)] + a[(0, 0)] * a[(1, 1)], a[(1, 0)] * a[(1, 1)],
        a[(0, 1)] * a[(0, 1)], 2.0 * a[(0, 1)] * a[(1, 1)], a[(1, 1)] * a[(1, 1)],
    )
}

pub fn cell_geometry(mesh: &Mesh, cell: usize) -> Result<CellGeometry> {
    let geom = cell_geometry_with_ids(mesh.cell_points(cell), mesh.cell(cell))
        .map_err(|e| match e {
            Error::SingularCell { det, .. } => Error::SingularCell { cell, det },
            other => other,
        })?;
    Ok(geom)
}

/// Geometry of a standalone triangle; `ids` only fix edge orientation.
pub fn cell_geometry_with_ids(vertices: [Point; 3], ids: [usize; 3]) -> Result<CellGeometry> {
    let j = Matrix2::from_columns(&[vertices[1] - vertices[0], vertices[2] - vertices[0]]);
    let det = j.determinant();
    let scale = (vertices[1] - vertices[0])
        .norm()
        .max((vertices[2] - vertices[1]).norm())
        .max((vertices[0] - vertices[2]).norm());
    if !(det.abs() >= 1e-14 * scale * scale) {
        return Err(Error::SingularCell { cell: usize::MAX, det });
    }
    let j_inv = j.try_inverse().ok_or(Error::SingularCell { cell: usize::MAX, det })?;
    let (_, ref_edges) = reference_frames();
    let theta = hessian_map(&j_inv);
    let theta_inv = hessian_map(&j);

    let mut ends = [(0, 0); 3];
    let mut edges = [EdgeFrame::new(Point::zeros(), Point::x()); 3];
    let mut g = [Matrix2::zeros(); 3];
    let mut gam = [Matrix3::zeros(); 3];
    let mut gam_inv = [Matrix3::zeros(); 3];
    let mut b1 = [Matrix2::zeros(); 3];
    let mut b2 = [Matrix3::zeros(); 3];
    let mut beta = [Point::zeros(); 3];
    for i in 0..3 {
        let (p, q) = ((i + 1) % 3, (i + 2) % 3);
        let (a, b) = if ids[p] < ids[q] { (p, q) } else { (q, p) };
        ends[i] = (a, b);
        let e = EdgeFrame::new(vertices[a], vertices[b]);
        edges[i] = e;
        g[i] = frame_matrix(&e);
        gam[i] = gamma(&e);
        gam_inv[i] = gamma_inv(&e);
        let re = &ref_edges[i];
        b1[i] = frame_matrix(re) * j.transpose() * g[i].transpose() / e.length;
        b2[i] = gamma_inv(re) * theta_inv * gam[i] / e.length;
        beta[i] = e.n * b2[i][(0, 1)] + e.t * b2[i][(0, 2)];
    }
    Ok(CellGeometry {
        vertices,
        j,
        j_inv,
        det,
        edges,
        ends,
        g,
        gamma: gam,
        gamma_inv: gam_inv,
        theta,
        theta_inv,
        b1,
        b2,
        beta,
    })
}

impl CellGeometry {
    /// Reference coordinates of a physical point.
    pub fn to_reference(&self, x: Point) -> Point {
        self.j_inv * (x - self.vertices[0])
    }

    pub fn to_physical(&self, xh: Point) -> Point {
        self.vertices[0] + self.j * xh
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_cell() -> CellGeometry {
        cell_geometry_with_ids([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], [0, 1, 2]).unwrap()
    }

    #[test]
    fn identity_cell() {
        let geom = reference_cell();
        assert!((geom.j - Matrix2::identity()).norm() < 1e-15);
        for i in 0..3 {
            let expected = Matrix3::identity() / geom.edges[i].length;
            assert!((geom.b2[i] - expected).norm() < 1e-12);
            assert!(geom.beta[i].norm() < 1e-12);
        }
    }

    #[test]
    fn inverses_and_orthogonality() {
        let geom = cell_geometry_with_ids(
            [Point::new(0.1, 0.2), Point::new(1.3, 0.15), Point::new(0.4, 1.1)],
            [7, 3, 5],
        )
        .unwrap();
        assert!((geom.theta * geom.theta_inv - Matrix3::identity()).norm() < 1e-12);
        for i in 0..3 {
            assert!((geom.g[i] * geom.g[i].transpose() - Matrix2::identity()).norm() < 1e-12);
            assert!((geom.gamma[i] * geom.gamma_inv[i] - Matrix3::identity()).norm() < 1e-12);
        }
        // Edge 0 joins local vertices 1 and 2 (global 3 and 5).
        assert_eq!(geom.ends[0], (1, 2));
        assert_eq!(geom.ends[1], (2, 0));
    }

    #[test]
    fn scaling_cell() {
        let s = 2.5;
        let geom = cell_geometry_with_ids([Point::new(0.0, 0.0), Point::new(s, 0.0), Point::new(0.0, s)], [0, 1, 2])
            .unwrap();
        let reference = reference_cell();
        // Θ carries ∂x̂/∂x, so Θ = s^{-2} times its reference pattern.
        assert!((geom.theta - reference.theta / (s * s)).norm() < 1e-12);
        assert!((geom.theta_inv - reference.theta_inv * (s * s)).norm() < 1e-12);
        for i in 0..3 {
            assert!((geom.edges[i].length - s * reference.edges[i].length).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_cell_rejected() {
        let r = cell_geometry_with_ids([Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)], [0, 1, 2]);
        assert!(matches!(r, Err(Error::SingularCell { .. })));
    }
}
