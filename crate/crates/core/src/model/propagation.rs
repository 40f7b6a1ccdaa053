//! Normalized message-passing operator `Ŝ = D̃⁻¹(A + I)`.
//!
//! Row normalization is used so that a node's propagated row depends only on
//! the rows and degrees of nodes within its k-hop computation graph. With the
//! symmetric variant `D̃^{-1/2}(A+I)D̃^{-1/2}` the degree of a neighbor's
//! neighbor also enters, which widens the affected region by one hop.

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::Matrix;

/// CSR operator with self-loops inserted at their sorted position.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl PropagationOperator {
    pub fn new(g: &AttributedGraph) -> Self {
        let n = g.num_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(g.col_indices().len() + n);
        let mut vals = Vec::with_capacity(g.col_indices().len() + n);
        offsets.push(0);
        for v in 0..n {
            let nb = g.neighbors(v);
            let w = 1.0 / (nb.len() + 1) as f64;
            let split = nb.partition_point(|&u| u < v);
            for &u in &nb[..split] {
                cols.push(u);
                vals.push(w);
            }
            cols.push(v);
            vals.push(w);
            for &u in &nb[split..] {
                cols.push(u);
                vals.push(w);
            }
            offsets.push(cols.len());
        }
        Self {
            offsets,
            cols,
            vals,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `(neighbor, weight)` pairs of row `v`, self-loop included.
    pub fn row(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let n = self.num_nodes();
        let d = x.cols();
        let mut out = Matrix::zeros(n, d);
        for v in 0..n {
            let row = out.row_mut(v);
            for (u, w) in self.row(v) {
                for (o, xi) in row.iter_mut().zip(x.row(u)) {
                    *o += w * xi;
                }
            }
        }
        out
    }

    pub fn apply_times(&self, x: &Matrix, times: usize) -> Matrix {
        let mut cur = x.clone();
        for _ in 0..times {
            cur = self.apply(&cur);
        }
        cur
    }
}

/// `Ŝᵏ X` for the graph's feature matrix.
pub fn propagate(g: &AttributedGraph, k: usize) -> Result<Matrix> {
    if k < 1 {
        return Err(Error::Config("propagation depth k must be >= 1".into()));
    }
    Ok(PropagationOperator::new(g).apply_times(g.features(), k))
}
