use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

use super::NodeId;

/// Label of a polyphase node in a compound matrix.
///
/// `Source(s)` is the internal node behind the Thévenin impedance of slack `s`;
/// it only exists in augmented grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKey {
    Source(NodeId),
    Node(NodeId),
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKey::Source(id) => write!(f, "TE{id}"),
            NodeKey::Node(id) => write!(f, "{id}"),
        }
    }
}

/// Dense complex matrix with explicit per-node `P x P` block structure.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    rows: Vec<NodeKey>,
    cols: Vec<NodeKey>,
    phases: usize,
    data: CMatrix,
}

impl BlockMatrix {
    pub fn new(rows: Vec<NodeKey>, cols: Vec<NodeKey>, phases: usize, data: CMatrix) -> Result<Self> {
        if data.nrows() != rows.len() * phases || data.ncols() != cols.len() * phases {
            return Err(Error::InvalidModel(format!(
                "block matrix of shape {}x{} does not fit {}x{} nodes with {} phases",
                data.nrows(),
                data.ncols(),
                rows.len(),
                cols.len(),
                phases
            )));
        }
        Ok(Self { rows, cols, phases, data })
    }

    pub fn zeros(rows: Vec<NodeKey>, cols: Vec<NodeKey>, phases: usize) -> Self {
        let data = CMatrix::zeros(rows.len() * phases, cols.len() * phases);
        Self { rows, cols, phases, data }
    }

    pub fn rows(&self) -> &[NodeKey] {
        &self.rows
    }

    pub fn cols(&self) -> &[NodeKey] {
        &self.cols
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    /// Rows and columns carry the same node ordering.
    pub fn is_square_ordered(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row_position(&self, key: NodeKey) -> Option<usize> {
        self.rows.iter().position(|k| *k == key)
    }

    pub fn col_position(&self, key: NodeKey) -> Option<usize> {
        self.cols.iter().position(|k| *k == key)
    }

    /// Copy of the `P x P` block relating row node `m` and column node `n`.
    pub fn block(&self, m: NodeKey, n: NodeKey) -> Option<CMatrix> {
        let i = self.row_position(m)?;
        let j = self.col_position(n)?;
        let p = self.phases;
        Some(self.data.view((i * p, j * p), (p, p)).into_owned())
    }

    /// Entry for (row node, row phase) x (col node, col phase), phases zero-based.
    pub fn entry(&self, m: NodeKey, p: usize, n: NodeKey, q: usize) -> Option<Complex64> {
        if p >= self.phases || q >= self.phases {
            return None;
        }
        let i = self.row_position(m)?;
        let j = self.col_position(n)?;
        Some(self.data[(i * self.phases + p, j * self.phases + q)])
    }

    pub(crate) fn add_block_at(&mut self, i: usize, j: usize, block: &CMatrix) {
        let p = self.phases;
        let mut view = self.data.view_mut((i * p, j * p), (p, p));
        view += block;
    }

    pub(crate) fn set_block_at(&mut self, i: usize, j: usize, block: &CMatrix) {
        let p = self.phases;
        self.data.view_mut((i * p, j * p), (p, p)).copy_from(block);
    }

    /// Sub-matrix over the given row and column nodes, in the given order.
    pub fn select(&self, rows: &[NodeKey], cols: &[NodeKey]) -> Result<BlockMatrix> {
        let row_pos = positions(&self.rows, rows)?;
        let col_pos = positions(&self.cols, cols)?;
        let p = self.phases;
        let mut data = CMatrix::zeros(rows.len() * p, cols.len() * p);
        for (bi, &i) in row_pos.iter().enumerate() {
            for (bj, &j) in col_pos.iter().enumerate() {
                data.view_mut((bi * p, bj * p), (p, p))
                    .copy_from(&self.data.view((i * p, j * p), (p, p)));
            }
        }
        Ok(BlockMatrix { rows: rows.to_vec(), cols: cols.to_vec(), phases: p, data })
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        &self.data * v
    }
}

fn positions(ordering: &[NodeKey], wanted: &[NodeKey]) -> Result<Vec<usize>> {
    let index: HashMap<NodeKey, usize> = ordering.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    wanted
        .iter()
        .map(|k| {
            index
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidModel(format!("node {k} is not part of the matrix ordering")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_addressing() {
        let keys = vec![NodeKey::Node(1), NodeKey::Node(2)];
        let data = CMatrix::from_fn(4, 4, |i, j| Complex64::new((10 * i + j) as f64, 0.0));
        let m = BlockMatrix::new(keys.clone(), keys, 2, data).unwrap();
        let b = m.block(NodeKey::Node(2), NodeKey::Node(1)).unwrap();
        assert_eq!(b[(0, 0)].re, 20.0);
        assert_eq!(b[(1, 1)].re, 31.0);
        assert_eq!(m.entry(NodeKey::Node(1), 1, NodeKey::Node(2), 0).unwrap().re, 12.0);
        assert!(m.block(NodeKey::Node(3), NodeKey::Node(1)).is_none());
    }

    #[test]
    fn select_reorders() {
        let keys = vec![NodeKey::Node(1), NodeKey::Node(2), NodeKey::Node(3)];
        let data = CMatrix::from_fn(3, 3, |i, j| Complex64::new((10 * i + j) as f64, 0.0));
        let m = BlockMatrix::new(keys.clone(), keys, 1, data).unwrap();
        let s = m.select(&[NodeKey::Node(3), NodeKey::Node(1)], &[NodeKey::Node(2)]).unwrap();
        assert_eq!(s.matrix()[(0, 0)].re, 21.0);
        assert_eq!(s.matrix()[(1, 0)].re, 1.0);
        assert!(m.select(&[NodeKey::Node(9)], &[NodeKey::Node(1)]).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let keys = vec![NodeKey::Node(1)];
        assert!(BlockMatrix::new(keys.clone(), keys, 3, CMatrix::zeros(2, 2)).is_err());
    }
}
