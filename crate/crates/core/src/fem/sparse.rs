use std::sync::Arc;

use nalgebra::DMatrix;

use super::DofMap;
use crate::mesh::Mesh;

/// Symmetric sparse matrix, both triangles stored, compressed by rows with
/// sorted column indices. Because it is symmetric the same arrays also
/// describe it column-wise.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Arc<Vec<usize>>,
    col_idx: Arc<Vec<usize>>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub(crate) fn from_parts(n: usize, row_ptr: Arc<Vec<usize>>, col_idx: Arc<Vec<usize>>, values: Vec<f64>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        SparseOperator { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji| / max |a_ij|`.
    pub fn symmetry_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst / self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                m[(i, j)] = a;
            }
        }
        m
    }

    /// Clamps the masked DOFs: their rows and columns are zeroed and the
    /// diagonal set to one.
    pub fn apply_dirichlet(&mut self, mask: &[bool]) {
        assert_eq!(mask.len(), self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if mask[i] || mask[j] {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    /// Two uncoupled copies of a scalar operator, interleaved as `2s + c`.
    pub fn interleave(&self) -> SparseOperator {
        let n = 2 * self.n;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(2 * self.nnz());
        let mut values = Vec::with_capacity(2 * self.nnz());
        row_ptr.push(0);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for c in 0..2 {
                col_idx.extend(cols.iter().map(|&j| 2 * j + c));
                values.extend_from_slice(vals);
                row_ptr.push(col_idx.len());
            }
        }
        SparseOperator::from_parts(n, Arc::new(row_ptr), Arc::new(col_idx), values)
    }
}

/// Sparsity pattern of the scalar operator together with the value slot of
/// every element-matrix entry. Depends on connectivity only.
#[derive(Debug)]
pub struct SparsityPattern {
    pub(crate) n: usize,
    pub(crate) row_ptr: Arc<Vec<usize>>,
    pub(crate) col_idx: Arc<Vec<usize>>,
    pub(crate) cell_slots: Vec<[usize; 144]>,
}

impl SparsityPattern {
    pub fn new(mesh: &Mesh, dofmap: &DofMap) -> Self {
        let n = dofmap.n_scalar();
        let cell_dofs: Vec<[usize; 12]> = (0..mesh.n_cells()).map(|c| dofmap.cell_dofs(mesh, c)).collect();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for dofs in &cell_dofs {
            for &i in dofs {
                rows[i].extend_from_slice(dofs);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let cell_slots = cell_dofs
            .iter()
            .map(|dofs| {
                let mut slots = [0usize; 144];
                for (a, &i) in dofs.iter().enumerate() {
                    let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                    for (b, &j) in dofs.iter().enumerate() {
                        slots[12 * a + b] = row_ptr[i] + row.binary_search(&j).expect("pattern covers cell");
                    }
                }
                slots
            })
            .collect();
        SparsityPattern { n, row_ptr: Arc::new(row_ptr), col_idx: Arc::new(col_idx), cell_slots }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub(crate) fn empty_operator(&self) -> SparseOperator {
        SparseOperator::from_parts(self.n, Arc::clone(&self.row_ptr), Arc::clone(&self.col_idx), vec![0.0; self.nnz()])
    }
}
