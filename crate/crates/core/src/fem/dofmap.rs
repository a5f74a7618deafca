use crate::mesh::Mesh;

/// Global numbering for one scalar component of the standard Wu-Xu space:
/// vertex `v` owns `3v, 3v+1, 3v+2` (value, ∂x, ∂y) and edge `e` owns
/// `3·n_vertices + e` (second normal moment). Vector fields interleave the
/// two components, `2s + component`.
#[derive(Clone, Debug)]
pub struct DofMap {
    n_vertices: usize,
    n_edges: usize,
    boundary: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.n_vertices();
        let mut boundary = vec![false; 3 * nv + mesh.n_edges()];
        for v in 0..nv {
            if mesh.is_boundary_vertex(v) {
                boundary[3 * v..3 * v + 3].iter_mut().for_each(|b| *b = true);
            }
        }
        for e in 0..mesh.n_edges() {
            if mesh.is_boundary_edge(e) {
                boundary[3 * nv + e] = true;
            }
        }
        DofMap { n_vertices: nv, n_edges: mesh.n_edges(), boundary }
    }

    pub fn n_scalar(&self) -> usize {
        3 * self.n_vertices + self.n_edges
    }

    pub fn n_vector(&self) -> usize {
        2 * self.n_scalar()
    }

    pub fn vertex_dof(&self, v: usize) -> usize {
        3 * v
    }

    pub fn edge_dof(&self, e: usize) -> usize {
        3 * self.n_vertices + e
    }

    pub fn vector_index(scalar: usize, component: usize) -> usize {
        2 * scalar + component
    }

    /// Scalar DOFs of a cell in element order.
    pub fn cell_dofs(&self, mesh: &Mesh, cell: usize) -> [usize; 12] {
        let vs = mesh.cell(cell);
        let es = mesh.cell_edges(cell);
        let mut out = [0; 12];
        for k in 0..3 {
            out[3 * k] = 3 * vs[k];
            out[3 * k + 1] = 3 * vs[k] + 1;
            out[3 * k + 2] = 3 * vs[k] + 2;
            out[9 + k] = self.edge_dof(es[k]);
        }
        out
    }

    pub fn is_boundary(&self, scalar: usize) -> bool {
        self.boundary[scalar]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }
}
