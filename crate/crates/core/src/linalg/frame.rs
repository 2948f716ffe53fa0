use nalgebra::DMatrix;

use super::{singular_extremes, LinalgError, RANK_TOL};

/// An `n x k` matrix with orthonormal columns, standing for the point
/// `span(columns)` of the Grassmannian `Gr_k(R^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    cols: DMatrix<f64>,
}

impl Frame {
    /// Canonical orthonormal frame of `span(basis)`: Householder QR with the
    /// signs fixed so that `R` has a positive diagonal.
    pub fn orthonormalize(basis: &DMatrix<f64>) -> Result<Frame, LinalgError> {
        let (n, k) = basis.shape();
        if k > n {
            return Err(LinalgError::RankDeficient { sigma_min: 0.0 });
        }
        if k == 0 {
            return Ok(Frame::from_orthonormal(DMatrix::zeros(n, 0)));
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::RankDeficient { sigma_min: f64::NAN });
        }
        let (smin, _) = singular_extremes(basis);
        if !(smin > RANK_TOL) {
            return Err(LinalgError::RankDeficient { sigma_min: smin });
        }
        let qr = basis.clone().qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..k {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Ok(Frame::from_orthonormal(q))
    }

    /// Wraps a matrix already known to have orthonormal columns.
    pub fn from_orthonormal(cols: DMatrix<f64>) -> Frame {
        Frame { cols }
    }

    /// `span{e_i : i in idx}` with columns in the given order.
    pub fn standard(n: usize, idx: &[usize]) -> Frame {
        let mut m = DMatrix::zeros(n, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        Frame::from_orthonormal(m)
    }

    pub fn ambient_dim(&self) -> usize {
        self.cols.nrows()
    }

    pub fn dim(&self) -> usize {
        self.cols.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cols
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.cols
    }

    /// Orthogonal projector `F F^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        self.matrix() * self.matrix().transpose()
    }

    /// `max |F^T F - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.matrix();
        let k = self.dim();
        (m.transpose() * m - DMatrix::<f64>::identity(k, k)).amax()
    }

    /// Same subspace, opposite orientation (first column negated).
    pub fn flipped(&self) -> Frame {
        let mut m = self.cols.clone();
        if m.ncols() > 0 {
            m.column_mut(0).neg_mut();
        }
        Frame::from_orthonormal(m)
    }
}
