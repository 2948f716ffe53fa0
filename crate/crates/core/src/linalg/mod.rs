//! Subspace and frame arithmetic on real matrices.
//!
//! Subspaces of `R^n` are carried as orthonormal frames ([`Frame`]); projectors
//! are derived on demand. Everything here is a pure function of its inputs.

pub(crate) mod band;
mod frame;
mod schur;

pub use band::{BandLu, BandMatrix};
pub use frame::Frame;
pub use schur::{spectral_split, SpectralSplit, DEFAULT_HYPERBOLICITY};

use nalgebra::DMatrix;
use thiserror::Error;

/// Relative threshold `sigma_min / sigma_max` below which a square matrix is
/// treated as singular by [`det_sign`].
pub const DEFAULT_EPS_TRANS: f64 = 1e-6;

/// Absolute threshold on the smallest singular value of a basis.
pub const RANK_TOL: f64 = 1e-12;

/// Largest gap accepted by [`align_frame`].
pub const ALIGN_MAX_GAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("basis is rank deficient (sigma_min = {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not hyperbolic: min |Re mu| = {min_real_part:e}")]
    NotHyperbolic { min_real_part: f64 },
    #[error("consecutive subspaces too far apart for alignment (gap = {gap:.3})")]
    GapTooLarge { gap: f64 },
    #[error("real Schur decomposition did not converge")]
    SchurFailed,
}

/// Sign of a determinant, or `Degenerate` when the matrix is numerically singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetSign {
    Positive,
    Negative,
    Degenerate,
}

impl DetSign {
    pub fn from_value(x: f64) -> Self {
        if x > 0.0 {
            DetSign::Positive
        } else if x < 0.0 {
            DetSign::Negative
        } else {
            DetSign::Degenerate
        }
    }

    /// `+1`, `-1` or `None` for degenerate.
    pub fn as_i8(self) -> Option<i8> {
        match self {
            DetSign::Positive => Some(1),
            DetSign::Negative => Some(-1),
            DetSign::Degenerate => None,
        }
    }

    pub fn is_degenerate(self) -> bool {
        self == DetSign::Degenerate
    }
}

/// Operator-norm distance `||P_U - P_V||` of the orthogonal projectors.
///
/// Subspaces of different dimension are at distance 1. The result is exactly
/// symmetric in its arguments.
pub fn gap_distance(u: &Frame, v: &Frame) -> Result<f64, LinalgError> {
    if u.ambient_dim() != v.ambient_dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "gap_distance between subspaces of R^{} and R^{}",
            u.ambient_dim(),
            v.ambient_dim()
        )));
    }
    if u.dim() != v.dim() {
        return Ok(1.0);
    }
    if u.dim() == 0 || u.dim() == u.ambient_dim() {
        return Ok(0.0);
    }
    // Evaluate in a fixed argument order so that d(U, V) == d(V, U) bitwise.
    let (a, b) = if lexicographic_le(u.matrix(), v.matrix()) {
        (u, v)
    } else {
        (v, u)
    };
    // ||(I - P_A) P_B|| = ||P_A - P_B|| for equal dimensions, and the residual
    // form stays accurate for nearly equal subspaces.
    let bm = b.matrix();
    let am = a.matrix();
    let residual = bm - am * (am.transpose() * bm);
    Ok(largest_singular_value(&residual).min(1.0))
}

fn lexicographic_le(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    a.len() <= b.len()
}

/// `M = [v_1 | ... | v_k | w_1 | ... | w_{n-k}]`.
pub fn pair_matrix(v: &Frame, w: &Frame) -> Result<DMatrix<f64>, LinalgError> {
    let n = v.ambient_dim();
    if w.ambient_dim() != n || v.dim() + w.dim() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "pair_matrix needs dimensions k and n-k in a common R^n, got {}x{} and {}x{}",
            n,
            v.dim(),
            w.ambient_dim(),
            w.dim()
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    m.columns_mut(0, v.dim()).copy_from(v.matrix());
    m.columns_mut(v.dim(), w.dim()).copy_from(w.matrix());
    Ok(m)
}

/// Sign of `det(m)`, with `Degenerate` when `sigma_min <= eps_trans * sigma_max`.
pub fn det_sign(m: &DMatrix<f64>, eps_trans: f64) -> DetSign {
    assert!(m.is_square(), "det_sign requires a square matrix");
    if m.nrows() == 0 {
        return DetSign::Positive;
    }
    let (smin, smax) = singular_extremes(m);
    if !(smax > 0.0) || smin <= eps_trans * smax {
        return DetSign::Degenerate;
    }
    match lu_det_sign(m) {
        1 => DetSign::Positive,
        -1 => DetSign::Negative,
        _ => DetSign::Degenerate,
    }
}

/// Determinant sign from a partially pivoted LU factorization, `0` for an exact
/// zero pivot. No conditioning check.
pub fn lu_det_sign(m: &DMatrix<f64>) -> i8 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut sign = 1i8;
    for j in 0..n {
        let mut p = j;
        let mut best = a[(j, j)].abs();
        for i in j + 1..n {
            if a[(i, j)].abs() > best {
                best = a[(i, j)].abs();
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return 0;
        }
        if p != j {
            a.swap_rows(p, j);
            sign = -sign;
        }
        let pivot = a[(j, j)];
        if pivot < 0.0 {
            sign = -sign;
        }
        for i in j + 1..n {
            let f = a[(i, j)] / pivot;
            if f != 0.0 {
                for c in j + 1..n {
                    let v = a[(j, c)];
                    a[(i, c)] -= f * v;
                }
            }
        }
    }
    sign
}

/// Rotate `next` within its own span so that its columns are as close as
/// possible to those of `prev` (orthogonal Procrustes).
pub fn align_frame(prev: &Frame, next: &Frame) -> Result<Frame, LinalgError> {
    if prev.ambient_dim() != next.ambient_dim() || prev.dim() != next.dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "align_frame between {}x{} and {}x{}",
            prev.ambient_dim(),
            prev.dim(),
            next.ambient_dim(),
            next.dim()
        )));
    }
    let gap = gap_distance(prev, next)?;
    if gap >= ALIGN_MAX_GAP {
        return Err(LinalgError::GapTooLarge { gap });
    }
    Ok(align_unchecked(prev, next))
}

/// Procrustes alignment without the gap precondition.
pub(crate) fn align_unchecked(prev: &Frame, next: &Frame) -> Frame {
    if next.dim() == 0 {
        return next.clone();
    }
    let cross = next.matrix().transpose() * prev.matrix();
    let q = polar_factor(&cross);
    Frame::from_orthonormal(next.matrix() * q)
}

/// Orthogonal factor `U V^T` of the SVD `m = U S V^T`.
fn polar_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Canonical frame of `span(v)^perp`.
pub fn orthogonal_complement(v: &Frame) -> Frame {
    let n = v.ambient_dim();
    let k = v.dim();
    if k == n {
        return Frame::from_orthonormal(DMatrix::zeros(n, 0));
    }
    if k == 0 {
        return Frame::from_orthonormal(DMatrix::identity(n, n));
    }
    let mut aug = DMatrix::zeros(n, k + n);
    aug.columns_mut(0, k).copy_from(v.matrix());
    aug.columns_mut(k, n).copy_from(&DMatrix::identity(n, n));
    let q = aug.qr().q();
    let tail = q.columns(k, n - k).into_owned();
    Frame::orthonormalize(&tail).unwrap_or_else(|_| Frame::from_orthonormal(tail))
}

/// Orthonormal columns spanning a given subspace, as the `n x k` matrix of
/// the canonical frame of `span(basis)`.
pub fn orthonormalize(basis: &DMatrix<f64>) -> Result<Frame, LinalgError> {
    Frame::orthonormalize(basis)
}

/// `(sigma_min, sigma_max)` of a (possibly rectangular) matrix.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.clone().singular_values();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &s in sv.iter() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

pub(crate) fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_extremes(m).1
}

/// Smallest singular value of the pair matrix scaled by the largest one.
pub fn transversality_margin(v: &Frame, w: &Frame) -> Result<f64, LinalgError> {
    let m = pair_matrix(v, w)?;
    let (lo, hi) = singular_extremes(&m);
    Ok(if hi > 0.0 { lo / hi } else { 0.0 })
}

/// Direct sum `V_1 (+) V_2` in `R^{n_1 + n_2}`.
pub fn direct_sum(a: &Frame, b: &Frame) -> Frame {
    let (n1, k1) = (a.ambient_dim(), a.dim());
    let (n2, k2) = (b.ambient_dim(), b.dim());
    let mut m = DMatrix::zeros(n1 + n2, k1 + k2);
    m.view_mut((0, 0), (n1, k1)).copy_from(a.matrix());
    m.view_mut((n1, k1), (n2, k2)).copy_from(b.matrix());
    Frame::from_orthonormal(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use std::f64::consts::PI;

    fn line(x: f64, y: f64) -> Frame {
        Frame::orthonormalize(&DMatrix::from_column_slice(2, 1, &[x, y])).unwrap()
    }

    #[test]
    fn gap_examples() {
        let e1 = line(1.0, 0.0);
        let e2 = line(0.0, 1.0);
        assert_eq!(gap_distance(&e1, &e1).unwrap(), 0.0);
        assert!((gap_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let l = line((PI / 6.0).cos(), (PI / 6.0).sin());
        assert!((gap_distance(&e1, &l).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gap_dimension_mismatch() {
        let a = Frame::standard(2, &[0]);
        let b = Frame::standard(3, &[0]);
        assert!(matches!(
            gap_distance(&a, &b),
            Err(LinalgError::DimensionMismatch(_))
        ));
        let c = Frame::standard(3, &[0, 1]);
        assert_eq!(gap_distance(&b, &c).unwrap(), 1.0);
    }

    #[test]
    fn pair_matrix_examples() {
        let m = pair_matrix(&Frame::standard(2, &[0]), &Frame::standard(2, &[1])).unwrap();
        assert_eq!(m, DMatrix::identity(2, 2));
        for &t in &[0.3, 1.2, 2.5] {
            let v = line(f64::cos(t), f64::sin(t));
            let m = pair_matrix(&v, &Frame::standard(2, &[1])).unwrap();
            assert!((m.determinant() - t.cos()).abs() < 1e-14);
        }
        assert!(pair_matrix(&Frame::standard(3, &[0]), &Frame::standard(3, &[1])).is_err());
    }

    #[test]
    fn det_sign_examples() {
        assert_eq!(det_sign(&DMatrix::identity(3, 3), DEFAULT_EPS_TRANS), DetSign::Positive);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, -1.0]));
        assert_eq!(det_sign(&d, DEFAULT_EPS_TRANS), DetSign::Negative);
        let s = dmatrix![1.0, 1.0; 1.0, 1.0];
        assert_eq!(det_sign(&s, DEFAULT_EPS_TRANS), DetSign::Degenerate);
    }

    #[test]
    fn det_sign_is_scale_free() {
        let m = dmatrix![1e-9, 0.0; 0.0, -2e-9];
        assert_eq!(det_sign(&m, DEFAULT_EPS_TRANS), DetSign::Negative);
    }

    #[test]
    fn align_examples() {
        let prev = line(0.6, 0.8);
        assert!(gap_distance(&align_frame(&prev, &prev).unwrap(), &prev).unwrap() < 1e-15);
        let neg = Frame::from_orthonormal(-prev.matrix());
        let aligned = align_frame(&prev, &neg).unwrap();
        assert!((aligned.matrix() - prev.matrix()).amax() < 1e-15);
        assert!(matches!(
            align_frame(&line(1.0, 0.0), &line(0.0, 1.0)),
            Err(LinalgError::GapTooLarge { .. })
        ));
    }

    #[test]
    fn rotating_line_alignment_sweep() {
        // Canonical frames of a rotating line flip sign whenever the first
        // coordinate passes zero; aligned frames never do.
        let mut prev = line(1.0, 0.0);
        let mut t = 0.0;
        while t < 2.0 * PI {
            t += 0.01;
            let next = line(t.cos(), t.sin());
            let aligned = align_frame(&prev, &next).unwrap();
            let dot = (aligned.matrix().transpose() * prev.matrix())[(0, 0)];
            assert!(dot > 0.0, "t = {t}");
            prev = aligned;
        }
    }

    #[test]
    fn complement_examples() {
        let c = orthogonal_complement(&Frame::standard(2, &[0]));
        assert!(gap_distance(&c, &Frame::standard(2, &[1])).unwrap() < 1e-15);
        let c = orthogonal_complement(&line(1.0, 1.0));
        assert!(gap_distance(&c, &line(1.0, -1.0)).unwrap() < 1e-15);
        let full = orthogonal_complement(&Frame::standard(3, &[0, 1, 2]));
        assert_eq!(full.dim(), 0);
    }

    #[test]
    fn direct_sum_blocks() {
        let s = direct_sum(&line(1.0, 1.0), &Frame::standard(3, &[2]));
        assert_eq!((s.ambient_dim(), s.dim()), (5, 2));
        assert!((s.matrix()[(4, 1)] - 1.0).abs() < 1e-15);
    }
}
