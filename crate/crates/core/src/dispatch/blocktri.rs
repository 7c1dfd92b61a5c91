//! Symmetric block-tridiagonal matrices and their block Cholesky factor.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Symmetric matrix with `num_blocks` diagonal blocks of size `block` and
/// the sub-diagonal blocks `lower[k] = A[k + 1][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    pub lower: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn zeros(num_blocks: usize, block: usize) -> Self {
        BlockTridiagonal {
            diag: vec![DMatrix::zeros(block, block); num_blocks],
            lower: vec![DMatrix::zeros(block, block); num_blocks.saturating_sub(1)],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.diag.first().map_or(0, |d| d.nrows())
    }

    pub fn dim(&self) -> usize {
        self.num_blocks() * self.block_size()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let b = self.block_size();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for (k, d) in self.diag.iter().enumerate() {
            out.view_mut((k * b, k * b), (b, b)).copy_from(d);
        }
        for (k, l) in self.lower.iter().enumerate() {
            out.view_mut(((k + 1) * b, k * b), (b, b)).copy_from(l);
            out.view_mut((k * b, (k + 1) * b), (b, b)).copy_from(&l.transpose());
        }
        out
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let b = self.block_size();
        let mut y = DVector::zeros(self.dim());
        for (k, d) in self.diag.iter().enumerate() {
            let xk = x.rows(k * b, b);
            let mut yk = y.rows_mut(k * b, b);
            yk.gemv(1.0, d, &xk, 1.0);
        }
        for (k, l) in self.lower.iter().enumerate() {
            let xk = x.rows(k * b, b).clone_owned();
            let xk1 = x.rows((k + 1) * b, b).clone_owned();
            y.rows_mut((k + 1) * b, b).gemv(1.0, l, &xk, 1.0);
            y.rows_mut(k * b, b).gemv_tr(1.0, l, &xk1, 1.0);
        }
        y
    }

    /// Cholesky factor of `A + shift·I`, or `None` if that matrix is not
    /// numerically positive definite.
    pub fn factor(&self, shift: f64) -> Option<BlockCholesky> {
        let b = self.block_size();
        let mut diag: Vec<DMatrix<f64>> = Vec::with_capacity(self.num_blocks());
        let mut coupling: Vec<DMatrix<f64>> = Vec::with_capacity(self.lower.len());
        for k in 0..self.num_blocks() {
            let mut a = self.diag[k].clone();
            for i in 0..b {
                a[(i, i)] += shift;
            }
            if k > 0 {
                // C_k = B_k L_{k-1}^{-T}, so that A_k -= C_k C_kᵀ.
                let x = diag[k - 1].solve_lower_triangular(&self.lower[k - 1].transpose())?;
                let c = x.transpose();
                a.gemm(-1.0, &c, &x, 1.0);
                coupling.push(c);
            }
            let chol = Cholesky::new(a)?;
            let l = chol.l();
            if l.diagonal().iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return None;
            }
            diag.push(l);
        }
        Some(BlockCholesky { diag, coupling })
    }
}

/// Lower block-bidiagonal factor `L` with `L Lᵀ = A + shift·I`.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    diag: Vec<DMatrix<f64>>,
    coupling: Vec<DMatrix<f64>>,
}

impl BlockCholesky {
    pub fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let nb = self.diag.len();
        if nb == 0 {
            return Some(DVector::zeros(0));
        }
        let b = self.diag[0].nrows();
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut r = rhs.rows(k * b, b).clone_owned();
            if k > 0 {
                r.gemv(-1.0, &self.coupling[k - 1], &y[k - 1], 1.0);
            }
            y.push(self.diag[k].solve_lower_triangular(&r)?);
        }
        let mut x = DVector::zeros(nb * b);
        let mut next: Option<DVector<f64>> = None;
        for k in (0..nb).rev() {
            let mut r = y[k].clone();
            if let Some(xn) = &next {
                r.gemv_tr(-1.0, &self.coupling[k], xn, 1.0);
            }
            let xk = self.diag[k].tr_solve_lower_triangular(&r)?;
            x.rows_mut(k * b, b).copy_from(&xk);
            next = Some(xk);
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}
