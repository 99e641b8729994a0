//! Constant linear operators (graph propagation matrices) applied on the tape.

use super::Matrix;

/// Compressed sparse row storage.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &Matrix) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn matmul(&self, x: &Matrix) -> Matrix {
        let n = x.cols();
        let mut out = Matrix::zeros(self.rows, n);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let src = x.row(c);
                let dst = out.row_mut(r);
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        out
    }

    pub fn transposed_matmul(&self, g: &Matrix) -> Matrix {
        let n = g.cols();
        let mut out = Matrix::zeros(self.cols, n);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let src = g.row(r);
                let dst = out.row_mut(c);
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        out
    }
}

/// A fixed matrix that left-multiplies a tape variable.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearOperator {
    Dense(Matrix),
    Sparse(CsrMatrix),
}

impl LinearOperator {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            LinearOperator::Dense(m) => m.shape(),
            LinearOperator::Sparse(s) => (s.rows, s.cols),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        match self {
            LinearOperator::Dense(m) => m.matmul(x),
            LinearOperator::Sparse(s) => s.matmul(x),
        }
    }

    pub fn apply_transposed(&self, g: &Matrix) -> Matrix {
        match self {
            LinearOperator::Dense(m) => m.transposed_matmul(g),
            LinearOperator::Sparse(s) => s.transposed_matmul(g),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            LinearOperator::Dense(m) => m.clone(),
            LinearOperator::Sparse(s) => s.to_dense(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_paths_agree() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0, 0.0], vec![1.0, 0.0, 3.0]]);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let g = Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]);
        let dense = LinearOperator::Dense(a.clone());
        let sparse = LinearOperator::Sparse(CsrMatrix::from_dense(&a));
        assert_eq!(dense.apply(&x), sparse.apply(&x));
        assert_eq!(dense.apply_transposed(&g), sparse.apply_transposed(&g));
        assert_eq!(sparse.to_dense(), a);
    }
}
