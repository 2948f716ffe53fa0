//! Invariant subspaces of hyperbolic matrices from a reordered real Schur form.
//!
//! `S = Q T Q^T` with `T` quasi upper triangular. Diagonal blocks are swapped
//! (direct Sylvester swap of 1x1/2x2 blocks) until every block with the
//! selected sign of real part sits on top; the leading columns of `Q` then
//! span the corresponding invariant subspace.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use super::{Frame, LinalgError};

/// Default hyperbolicity threshold on `min |Re mu|`.
pub const DEFAULT_HYPERBOLICITY: f64 = 1e-8;

const SCHUR_MAX_ITER: usize = 10_000;

/// Positive and negative spectral subspaces of a hyperbolic matrix.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    /// Span of the generalized eigenvectors with `Re mu > 0`.
    pub v_plus: Frame,
    /// Span of the generalized eigenvectors with `Re mu < 0`.
    pub v_minus: Frame,
    /// `min |Re mu|` over the spectrum.
    pub gap: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

/// Splits `R^n` into the invariant subspaces of `s` belonging to the right and
/// left half planes.
pub fn spectral_split(s: &DMatrix<f64>, delta: f64) -> Result<SpectralSplit, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "spectral_split needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NotHyperbolic {
            min_real_part: f64::NAN,
        });
    }
    let n = s.nrows();
    if n == 0 {
        let empty = Frame::from_orthonormal(DMatrix::zeros(0, 0));
        return Ok(SpectralSplit {
            v_plus: empty.clone(),
            v_minus: empty,
            gap: f64::INFINITY,
            eigenvalues: Vec::new(),
        });
    }
    let base = RealSchur::new(s)?;
    let eigenvalues = base.eigenvalues();
    let gap = eigenvalues
        .iter()
        .map(|mu| mu.re.abs())
        .fold(f64::INFINITY, f64::min);
    if !(gap > delta) {
        return Err(LinalgError::NotHyperbolic { min_real_part: gap });
    }

    let mut plus = base.clone();
    let p = plus.reorder(|re| re > 0.0)?;
    let mut minus = base;
    let m = minus.reorder(|re| re < 0.0)?;
    debug_assert_eq!(p + m, n);

    let v_plus = Frame::orthonormalize(&plus.q.columns(0, p).into_owned())?;
    let v_minus = Frame::orthonormalize(&minus.q.columns(0, m).into_owned())?;
    Ok(SpectralSplit {
        v_plus,
        v_minus,
        gap,
        eigenvalues,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct RealSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// Sizes (1 or 2) of the diagonal blocks from top to bottom.
    pub blocks: Vec<usize>,
}

impl RealSchur {
    pub fn new(s: &DMatrix<f64>) -> Result<Self, LinalgError> {
        let schur = Schur::try_new(s.clone(), f64::EPSILON, SCHUR_MAX_ITER)
            .ok_or(LinalgError::SchurFailed)?;
        let (q, t) = schur.unpack();
        let mut rs = RealSchur {
            q,
            t,
            blocks: Vec::new(),
        };
        rs.identify_blocks();
        Ok(rs)
    }

    fn identify_blocks(&mut self) {
        let n = self.t.nrows();
        let mut i = 0;
        self.blocks.clear();
        while i < n {
            if i + 1 < n {
                let sub = self.t[(i + 1, i)];
                let scale = self.t[(i, i)].abs() + self.t[(i + 1, i + 1)].abs();
                if sub.abs() > f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                    if self.split_real_pair(i) {
                        self.blocks.push(1);
                        i += 1;
                    } else {
                        self.blocks.push(2);
                        i += 2;
                    }
                    continue;
                }
                self.t[(i + 1, i)] = 0.0;
            }
            self.blocks.push(1);
            i += 1;
        }
    }

    /// Triangularizes a 2x2 diagonal block with real eigenvalues by a Givens
    /// rotation. Returns false when the eigenvalues are complex.
    fn split_real_pair(&mut self, i: usize) -> bool {
        let (a, b, c, d) = (
            self.t[(i, i)],
            self.t[(i, i + 1)],
            self.t[(i + 1, i)],
            self.t[(i + 1, i + 1)],
        );
        let half = 0.5 * (a - d);
        let disc = half * half + b * c;
        if disc < 0.0 {
            return false;
        }
        let mu = 0.5 * (a + d) + if half >= 0.0 { disc.sqrt() } else { -disc.sqrt() };
        let v1 = (b, mu - a);
        let v2 = (mu - d, c);
        let (x, y) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) {
            v1
        } else {
            v2
        };
        let r = x.hypot(y);
        if r == 0.0 {
            return false;
        }
        let (cs, sn) = (x / r, y / r);
        let mut g = DMatrix::identity(2, 2);
        g[(0, 0)] = cs;
        g[(1, 0)] = sn;
        g[(0, 1)] = -sn;
        g[(1, 1)] = cs;
        self.apply_similarity(i, &g);
        self.t[(i + 1, i)] = 0.0;
        true
    }

    /// `T <- G^T T G` and `Q <- Q G` where `G` acts on rows/cols `i..i+g.nrows()`.
    fn apply_similarity(&mut self, i: usize, g: &DMatrix<f64>) {
        let m = g.nrows();
        let n = self.t.nrows();
        let rows = g.transpose() * self.t.view((i, 0), (m, n));
        self.t.view_mut((i, 0), (m, n)).copy_from(&rows);
        let cols = self.t.view((0, i), (n, m)) * g;
        self.t.view_mut((0, i), (n, m)).copy_from(&cols);
        let qc = self.q.view((0, i), (n, m)) * g;
        self.q.view_mut((0, i), (n, m)).copy_from(&qc);
    }

    fn block_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.blocks.len());
        let mut s = 0;
        for &b in &self.blocks {
            starts.push(s);
            s += b;
        }
        starts
    }

    fn block_real_part(&self, start: usize, size: usize) -> f64 {
        if size == 1 {
            self.t[(start, start)]
        } else {
            0.5 * (self.t[(start, start)] + self.t[(start + 1, start + 1)])
        }
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        let mut out = Vec::with_capacity(self.t.nrows());
        for (start, &size) in self.block_starts().iter().zip(&self.blocks) {
            let i = *start;
            if size == 1 {
                out.push(Complex::new(self.t[(i, i)], 0.0));
            } else {
                let (a, b, c, d) = (
                    self.t[(i, i)],
                    self.t[(i, i + 1)],
                    self.t[(i + 1, i)],
                    self.t[(i + 1, i + 1)],
                );
                let re = 0.5 * (a + d);
                let half = 0.5 * (a - d);
                let im = (-(half * half + b * c)).max(0.0).sqrt();
                out.push(Complex::new(re, im));
                out.push(Complex::new(re, -im));
            }
        }
        out
    }

    /// Moves every block whose real part satisfies `select` to the top and
    /// returns the dimension of the selected invariant subspace.
    pub fn reorder(&mut self, select: impl Fn(f64) -> bool) -> Result<usize, LinalgError> {
        loop {
            let starts = self.block_starts();
            let flags: Vec<bool> = starts
                .iter()
                .zip(&self.blocks)
                .map(|(&s, &b)| select(self.block_real_part(s, b)))
                .collect();
            let pos = (0..flags.len().saturating_sub(1)).find(|&j| !flags[j] && flags[j + 1]);
            match pos {
                None => {
                    let dim = self
                        .blocks
                        .iter()
                        .zip(&flags)
                        .filter(|(_, &f)| f)
                        .map(|(&b, _)| b)
                        .sum();
                    return Ok(dim);
                }
                Some(j) => {
                    self.swap_adjacent(starts[j], self.blocks[j], self.blocks[j + 1])?;
                    self.blocks.swap(j, j + 1);
                }
            }
        }
    }

    /// Swaps the adjacent diagonal blocks `A` (p x p at `i`) and `B` (q x q).
    fn swap_adjacent(&mut self, i: usize, p: usize, q: usize) -> Result<(), LinalgError> {
        let a = self.t.view((i, i), (p, p)).into_owned();
        let b = self.t.view((i + p, i + p), (q, q)).into_owned();
        let c = self.t.view((i, i + p), (p, q)).into_owned();

        // A X - X B = -C, so that [X; I] spans the invariant subspace of B.
        let dim = p * q;
        let mut k = DMatrix::zeros(dim, dim);
        for col_b in 0..q {
            for row_a in 0..p {
                let r = col_b * p + row_a;
                for j in 0..p {
                    k[(r, col_b * p + j)] += a[(row_a, j)];
                }
                for l in 0..q {
                    k[(r, l * p + row_a)] -= b[(l, col_b)];
                }
            }
        }
        let rhs = DVector::from_iterator(dim, c.iter().map(|x| -x));
        let x = k.lu().solve(&rhs).ok_or(LinalgError::SchurFailed)?;

        let m = p + q;
        let mut z = DMatrix::zeros(m, m + q);
        for col in 0..q {
            for row in 0..p {
                z[(row, col)] = x[col * p + row];
            }
            z[(p + col, col)] = 1.0;
        }
        z.view_mut((0, q), (m, m)).copy_from(&DMatrix::identity(m, m));
        let g = z.qr().q();
        self.apply_similarity(i, &g);
        for r in i + q..i + m {
            for cidx in i..i + q {
                self.t[(r, cidx)] = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gap_distance;
    use nalgebra::dmatrix;

    fn line(x: f64, y: f64) -> Frame {
        Frame::orthonormalize(&dmatrix![x; y]).unwrap()
    }

    fn invariance_defect(s: &DMatrix<f64>, f: &Frame) -> f64 {
        let v = f.matrix();
        (s * v - v * (v.transpose() * s * v)).amax()
    }

    #[test]
    fn diagonal_split() {
        let sp = spectral_split(&dmatrix![-2.0, 0.0; 0.0, 3.0], DEFAULT_HYPERBOLICITY).unwrap();
        assert!(gap_distance(&sp.v_minus, &line(1.0, 0.0)).unwrap() < 1e-14);
        assert!(gap_distance(&sp.v_plus, &line(0.0, 1.0)).unwrap() < 1e-14);
        assert!((sp.gap - 2.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_swap_split() {
        let sp = spectral_split(&dmatrix![0.0, 1.0; 1.0, 0.0], DEFAULT_HYPERBOLICITY).unwrap();
        assert!(gap_distance(&sp.v_plus, &line(1.0, 1.0)).unwrap() < 1e-14);
        assert!(gap_distance(&sp.v_minus, &line(1.0, -1.0)).unwrap() < 1e-14);
        assert!((sp.gap - 1.0).abs() < 1e-14);
    }

    #[test]
    fn upper_triangular_split_matches_eigenvector_solve() {
        // Eigenvector for -1 of [[1,5],[0,-1]]: (1-(-1)) x + 5 y = 0 -> (5, -2).
        let sp = spectral_split(&dmatrix![1.0, 5.0; 0.0, -1.0], DEFAULT_HYPERBOLICITY).unwrap();
        assert!(gap_distance(&sp.v_plus, &line(1.0, 0.0)).unwrap() < 1e-14);
        assert!(gap_distance(&sp.v_minus, &line(5.0, -2.0)).unwrap() < 1e-14);
    }

    #[test]
    fn center_is_rejected() {
        let r = spectral_split(&dmatrix![0.0, 1.0; -1.0, 0.0], DEFAULT_HYPERBOLICITY);
        assert!(matches!(r, Err(LinalgError::NotHyperbolic { .. })));
    }

    #[test]
    fn complex_blocks_are_reordered() {
        // Focus with Re = -1 above a saddle pair; the 2x2 block must move.
        let s = dmatrix![
            -1.0, 3.0, 0.5, 0.2;
            -3.0, -1.0, 0.1, 0.7;
            0.0, 0.0, 2.0, 1.0;
            0.0, 0.0, 0.0, -0.5
        ];
        let sp = spectral_split(&s, DEFAULT_HYPERBOLICITY).unwrap();
        assert_eq!(sp.v_plus.dim(), 1);
        assert_eq!(sp.v_minus.dim(), 3);
        assert!(invariance_defect(&s, &sp.v_plus) < 1e-10);
        assert!(invariance_defect(&s, &sp.v_minus) < 1e-10);
        assert!((sp.gap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_matrices_split_consistently() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(2..7);
            let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            let Ok(sp) = spectral_split(&s, 1e-3) else {
                continue;
            };
            assert_eq!(sp.v_plus.dim() + sp.v_minus.dim(), n);
            let pos = sp.eigenvalues.iter().filter(|mu| mu.re > 0.0).count();
            assert_eq!(sp.v_plus.dim(), pos);
            let scale = s.amax().max(1.0);
            assert!(invariance_defect(&s, &sp.v_plus) < 1e-8 * scale);
            assert!(invariance_defect(&s, &sp.v_minus) < 1e-8 * scale);
            let mut all = DMatrix::zeros(n, n);
            all.columns_mut(0, sp.v_plus.dim()).copy_from(sp.v_plus.matrix());
            all.columns_mut(sp.v_plus.dim(), sp.v_minus.dim())
                .copy_from(sp.v_minus.matrix());
            assert!(crate::linalg::singular_extremes(&all).0 > 0.0);
        }
    }
}
