use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenpairs sorted by
/// descending eigenvalue. Column `j` of the returned matrix pairs with value `j`.
pub(crate) fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(order.iter());
    (values, vectors)
}

/// Symmetrizes in place by averaging mirrored entries.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Accumulates `alpha * sum_c h_c h_c'` into a `d x d` target from columns
/// pushed one at a time, folding them in with one matrix product per batch.
pub(crate) struct OuterSum {
    stack: DMatrix<f64>,
    used: usize,
    alpha: f64,
}

impl OuterSum {
    const BATCH: usize = 256;

    pub fn new(d: usize, alpha: f64) -> Self {
        Self {
            stack: DMatrix::zeros(d, Self::BATCH),
            used: 0,
            alpha,
        }
    }

    /// Returns a zeroed column to fill, flushing into `target` when full.
    pub fn next_column(&mut self, target: &mut DMatrix<f64>) -> nalgebra::DVectorViewMut<'_, f64> {
        if self.used == Self::BATCH {
            self.flush(target);
        }
        self.used += 1;
        self.stack.column_mut(self.used - 1)
    }

    pub fn flush(&mut self, target: &mut DMatrix<f64>) {
        if self.used > 0 {
            let h = self.stack.columns(0, self.used);
            target.gemm(self.alpha, &h, &h.transpose(), 1.0);
            self.stack.columns_mut(0, self.used).fill(0.0);
            self.used = 0;
        }
    }
}
