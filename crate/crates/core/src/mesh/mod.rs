//! Triangulations of the square domain with an embedded closed curve.
//!
//! Connectivity lives in a shared [`Topology`]; a [`Mesh`] pairs it with one
//! set of vertex coordinates, so moving the mesh only replaces coordinates.

mod export;
mod generate;
mod msh;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub use export::{read_curve_csv, write_curve_csv, write_mesh_snapshot};
pub(crate) use export::csv_error;
pub use generate::{generate_template_mesh, MeshGenConfig};
pub use msh::{load_msh, parse_msh, write_msh, CURVE_TAG, DOMAIN_TAG};

pub type Point = Vector2<f64>;

/// Cells adjacent to an edge: one on the boundary, two in the interior.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeCells {
    pub first: usize,
    pub second: Option<usize>,
}

#[derive(Debug)]
pub struct Topology {
    cells: Vec<[usize; 3]>,
    /// Lower vertex index first.
    edges: Vec<[usize; 2]>,
    /// Local edge `i` is opposite local vertex `i`.
    cell_edges: Vec<[usize; 3]>,
    edge_cells: Vec<EdgeCells>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
    edge_lookup: HashMap<(usize, usize), usize>,
}

impl Topology {
    fn build(n_vertices: usize, cells: Vec<[usize; 3]>) -> Result<Self> {
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_lookup = HashMap::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        let mut adjacency: Vec<Vec<usize>> = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= n_vertices) {
                return Err(Error::GenerationFailure(format!("cell {c} references a missing vertex")));
            }
            let mut local = [0usize; 3];
            for i in 0..3 {
                let (a, b) = (cell[(i + 1) % 3], cell[(i + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    adjacency.push(Vec::new());
                    edges.len() - 1
                });
                adjacency[e].push(c);
                local[i] = e;
            }
            cell_edges.push(local);
        }
        let mut edge_cells = Vec::with_capacity(edges.len());
        let mut boundary_edge = vec![false; edges.len()];
        let mut boundary_vertex = vec![false; n_vertices];
        for (e, adj) in adjacency.iter().enumerate() {
            match adj.as_slice() {
                [a] => {
                    edge_cells.push(EdgeCells { first: *a, second: None });
                    boundary_edge[e] = true;
                    boundary_vertex[edges[e][0]] = true;
                    boundary_vertex[edges[e][1]] = true;
                }
                [a, b] => edge_cells.push(EdgeCells { first: *a, second: Some(*b) }),
                _ => {
                    return Err(Error::GenerationFailure(format!(
                        "edge {:?} borders {} cells",
                        edges[e],
                        adj.len()
                    )))
                }
            }
        }
        Ok(Topology { cells, edges, cell_edges, edge_cells, boundary_vertex, boundary_edge, edge_lookup })
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    topology: Arc<Topology>,
    vertices: Vec<Point>,
}

impl Mesh {
    /// Builds a mesh from vertex coordinates and vertex triples. Clockwise
    /// triples are reoriented; degenerate cells are rejected.
    pub fn from_cells(vertices: Vec<Point>, mut cells: Vec<[usize; 3]>) -> Result<Self> {
        let scale = bounding_box_diagonal(&vertices).max(f64::MIN_POSITIVE);
        for (c, cell) in cells.iter_mut().enumerate() {
            if cell.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::GenerationFailure(format!("cell {c} references a missing vertex")));
            }
            let area = signed_area(&vertices, *cell);
            if area.abs() <= 1e-14 * scale * scale {
                return Err(Error::GenerationFailure(format!("cell {c} is degenerate (area {area:e})")));
            }
            if area < 0.0 {
                cell.swap(1, 2);
            }
        }
        let topology = Topology::build(vertices.len(), cells)?;
        Ok(Mesh { topology: Arc::new(topology), vertices })
    }

    /// Same connectivity, new coordinates. Orientation is checked.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::ShapeMismatch { expected: self.vertices.len(), found: vertices.len() });
        }
        let mesh = Mesh { topology: Arc::clone(&self.topology), vertices };
        mesh.check_orientation()?;
        Ok(mesh)
    }

    pub fn shares_topology(&self, other: &Mesh) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.topology.cells
    }

    pub fn cell(&self, c: usize) -> [usize; 3] {
        self.topology.cells[c]
    }

    pub fn cell_points(&self, c: usize) -> [Point; 3] {
        let [a, b, d] = self.topology.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.topology.edges
    }

    pub fn cell_edges(&self, c: usize) -> [usize; 3] {
        self.topology.cell_edges[c]
    }

    pub fn edge_cells(&self, e: usize) -> EdgeCells {
        self.topology.edge_cells[e]
    }

    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.topology.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.topology.boundary_vertex[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.topology.boundary_edge[e]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.topology.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn signed_area(&self, c: usize) -> f64 {
        signed_area(&self.vertices, self.topology.cells[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.signed_area(c)).sum()
    }

    /// Largest edge length over all cells (the cell diameter for triangles).
    pub fn max_diameter(&self) -> f64 {
        self.topology
            .edges
            .iter()
            .map(|&[a, b]| (self.vertices[b] - self.vertices[a]).norm())
            .fold(0.0, f64::max)
    }

    fn check_orientation(&self) -> Result<()> {
        for c in 0..self.n_cells() {
            let area = self.signed_area(c);
            if area <= 0.0 || !area.is_finite() {
                return Err(Error::TangledMesh { cell: c, area });
            }
        }
        Ok(())
    }

    /// Edge matrix `[x1 - x0, x2 - x0]` (columns).
    pub fn edge_matrix(&self, c: usize) -> Matrix2<f64> {
        let [p0, p1, p2] = self.cell_points(c);
        Matrix2::from_columns(&[p1 - p0, p2 - p0])
    }

    pub fn cell_scale(&self, c: usize) -> f64 {
        let [p0, p1, p2] = self.cell_points(c);
        (p1 - p0).norm().max((p2 - p1).norm()).max((p0 - p2).norm())
    }
}

fn signed_area(vertices: &[Point], [a, b, c]: [usize; 3]) -> f64 {
    let (p, q, r) = (vertices[a], vertices[b], vertices[c]);
    0.5 * ((q - p).perp(&(r - p)))
}

fn bounding_box_diagonal(points: &[Point]) -> f64 {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Shoelace area of a closed polygon (positive when counterclockwise).
pub fn polygon_area(points: &[Point]) -> f64 {
    let n = points.len();
    (0..n).map(|i| points[i].perp(&points[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Deformation gradient `F_K = E_t E_0^{-1}` of the piecewise-linear
/// coordinate map on one cell.
pub fn deformation_gradient(mesh0: &Mesh, mesh_t: &Mesh, cell: usize) -> Result<Matrix2<f64>> {
    let e0 = mesh0.edge_matrix(cell);
    let det = e0.determinant();
    let scale = mesh0.cell_scale(cell);
    if det.abs() < 1e-14 * scale * scale {
        return Err(Error::SingularCell { cell, det });
    }
    let inv = e0.try_inverse().ok_or(Error::SingularCell { cell, det })?;
    Ok(mesh_t.edge_matrix(cell) * inv)
}

/// Moves every vertex by `dt * velocity`. Boundary vertices must be at rest
/// and every cell must keep positive area.
pub fn displace(mesh_t: &Mesh, velocities: &[Point], dt: f64) -> Result<Mesh> {
    if velocities.len() != mesh_t.n_vertices() {
        return Err(Error::ShapeMismatch { expected: mesh_t.n_vertices(), found: velocities.len() });
    }
    for (v, u) in velocities.iter().enumerate() {
        if mesh_t.is_boundary_vertex(v) && u.norm() > 0.0 {
            return Err(Error::BoundaryVelocity { vertex: v });
        }
    }
    let moved = mesh_t.vertices.iter().zip(velocities).map(|(x, u)| x + u * dt).collect();
    mesh_t.with_vertices(moved)
}

/// The template curve as an oriented loop of interior mesh edges.
///
/// Template quantities (lengths, normals, midpoints) are computed once from
/// the mesh the loop was built on and never updated.
#[derive(Clone, Debug)]
pub struct CurveLoop {
    /// Loop vertices in counterclockwise order; facet `k` runs from
    /// `vertices[k]` to `vertices[k + 1]`.
    vertices: Vec<usize>,
    facets: Vec<usize>,
    /// +1 when the facet direction agrees with the stored edge direction
    /// (lower to higher vertex index), -1 otherwise.
    orientation: Vec<f64>,
    lengths: Vec<f64>,
    normals: Vec<Point>,
    midpoints: Vec<Point>,
}

impl CurveLoop {
    /// Chains mesh edges into one counterclockwise cycle.
    pub fn from_edges(mesh: &Mesh, edges: &[usize]) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::CurveNotClosed("no curve edges".into()));
        }
        let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
        for &e in edges {
            if e >= mesh.n_edges() {
                return Err(Error::CurveNotClosed(format!("edge {e} does not exist")));
            }
            let [a, b] = mesh.edges()[e];
            if mesh.is_boundary_edge(e) || mesh.is_boundary_vertex(a) || mesh.is_boundary_vertex(b) {
                return Err(Error::CurveOnBoundary { edge: e });
            }
            incident.entry(a).or_default().push(e);
            incident.entry(b).or_default().push(e);
        }
        if let Some((v, list)) = incident.iter().find(|(_, l)| l.len() != 2) {
            return Err(Error::CurveNotClosed(format!("vertex {v} has {} curve edges", list.len())));
        }
        let start_edge = edges[0];
        let [start, mut current] = mesh.edges()[start_edge];
        let mut vertices = vec![start];
        let mut facets = vec![start_edge];
        let mut prev_edge = start_edge;
        while current != start {
            vertices.push(current);
            let next = incident[&current].iter().copied().find(|&e| e != prev_edge).unwrap();
            let [a, b] = mesh.edges()[next];
            facets.push(next);
            current = if a == current { b } else { a };
            prev_edge = next;
            if facets.len() > edges.len() {
                break;
            }
        }
        if facets.len() != edges.len() {
            return Err(Error::CurveNotClosed(format!(
                "edges form several cycles ({} of {} reached from edge {start_edge})",
                facets.len(),
                edges.len()
            )));
        }
        let points: Vec<Point> = vertices.iter().map(|&v| mesh.vertex(v)).collect();
        if polygon_area(&points) < 0.0 {
            vertices.reverse();
            let n = vertices.len();
            facets = (0..n)
                .map(|k| mesh.find_edge(vertices[k], vertices[(k + 1) % n]).unwrap())
                .collect();
        }
        let n = vertices.len();
        let mut orientation = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut midpoints = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (vertices[k], vertices[(k + 1) % n]);
            let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
            let d = pb - pa;
            let len = d.norm();
            if len <= 0.0 {
                return Err(Error::CurveNotClosed(format!("facet {k} has zero length")));
            }
            let t = d / len;
            orientation.push(if a < b { 1.0 } else { -1.0 });
            lengths.push(len);
            normals.push(Point::new(t.y, -t.x));
            midpoints.push((pa + pb) * 0.5);
        }
        Ok(CurveLoop { vertices, facets, orientation, lengths, normals, midpoints })
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn facets(&self) -> &[usize] {
        &self.facets
    }

    pub fn orientation(&self) -> &[f64] {
        &self.orientation
    }

    /// Endpoints (start, end) of facet `k` in loop direction.
    pub fn facet_vertices(&self, k: usize) -> (usize, usize) {
        (self.vertices[k], self.vertices[(k + 1) % self.vertices.len()])
    }

    pub fn template_lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn template_normals(&self) -> &[Point] {
        &self.normals
    }

    pub fn template_midpoints(&self) -> &[Point] {
        &self.midpoints
    }

    pub fn perimeter(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Current polygon of the curve on a (possibly moved) mesh.
    pub fn polygon(&self, mesh: &Mesh) -> Vec<Point> {
        self.vertices.iter().map(|&v| mesh.vertex(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> Mesh {
        // 3x3 vertex grid on [0,2]^2, split along the diagonal.
        let mut vertices = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                vertices.push(Point::new(i as f64, j as f64));
            }
        }
        let mut cells = Vec::new();
        for j in 0..2 {
            for i in 0..2 {
                let v = j * 3 + i;
                cells.push([v, v + 1, v + 4]);
                cells.push([v, v + 4, v + 3]);
            }
        }
        Mesh::from_cells(vertices, cells).unwrap()
    }

    #[test]
    fn topology_invariants() {
        let mesh = two_by_two();
        assert_eq!(mesh.n_cells(), 8);
        assert_eq!(mesh.n_edges(), 16);
        for c in 0..mesh.n_cells() {
            assert!(mesh.signed_area(c) > 0.0);
            let cell = mesh.cell(c);
            for (i, &e) in mesh.cell_edges(c).iter().enumerate() {
                let [a, b] = mesh.edges()[e];
                assert!(a < b);
                assert!(!mesh.edges()[e].contains(&cell[i]), "edge {i} must be opposite vertex {i}");
            }
        }
        for e in 0..mesh.n_edges() {
            let adj = mesh.edge_cells(e);
            assert_eq!(adj.second.is_none(), mesh.is_boundary_edge(e));
        }
        assert!(!mesh.is_boundary_vertex(4));
        assert_eq!((0..9).filter(|&v| mesh.is_boundary_vertex(v)).count(), 8);
    }

    #[test]
    fn clockwise_cells_are_reoriented() {
        let vertices = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let mesh = Mesh::from_cells(vertices, vec![[0, 2, 1]]).unwrap();
        assert!(mesh.signed_area(0) > 0.0);
    }

    #[test]
    fn deformation_gradient_identity_and_scaling() {
        let mesh = two_by_two();
        let scaled = mesh.with_vertices(mesh.vertices().iter().map(|p| p * 2.0).collect()).unwrap();
        for c in 0..mesh.n_cells() {
            let f = deformation_gradient(&mesh, &mesh, c).unwrap();
            assert!((f - Matrix2::identity()).norm() < 1e-15);
            let f2 = deformation_gradient(&mesh, &scaled, c).unwrap();
            assert!((f2 - Matrix2::identity() * 2.0).norm() < 1e-14);
        }
    }

    #[test]
    fn deformation_gradient_recovers_affine_map() {
        let mesh = two_by_two();
        let a = Matrix2::new(1.3, 0.4, -0.2, 0.9);
        let shift = Point::new(0.7, -1.1);
        let moved = mesh.with_vertices(mesh.vertices().iter().map(|p| a * p + shift).collect()).unwrap();
        for c in 0..mesh.n_cells() {
            let f = deformation_gradient(&mesh, &moved, c).unwrap();
            assert!((f - a).abs().max() < 1e-12);
        }
    }

    #[test]
    fn displace_rules() {
        let mesh = two_by_two();
        let zero = vec![Point::zeros(); 9];
        let same = displace(&mesh, &zero, 0.5).unwrap();
        assert_eq!(same.vertices(), mesh.vertices());

        let mut bad = zero.clone();
        bad[0] = Point::new(0.1, 0.0);
        assert!(matches!(displace(&mesh, &bad, 0.1), Err(Error::BoundaryVelocity { vertex: 0 })));

        // Pushing the centre vertex past its neighbours inverts cells.
        let mut push = zero;
        push[4] = Point::new(1.0, 0.0);
        assert!(displace(&mesh, &push, 0.5).is_ok());
        assert!(matches!(displace(&mesh, &push, 1.5), Err(Error::TangledMesh { .. })));
    }

    #[test]
    fn curve_loop_rejects_boundary_and_open_chains() {
        let mesh = two_by_two();
        let boundary = mesh.find_edge(0, 1).unwrap();
        assert!(matches!(CurveLoop::from_edges(&mesh, &[boundary]), Err(Error::CurveOnBoundary { .. })));
        assert!(matches!(CurveLoop::from_edges(&mesh, &[]), Err(Error::CurveNotClosed(_))));
    }
}
