//! Banded matrices and their partially pivoted LU factorization.
//!
//! Only what the discretized boundary-value operators need: assembly,
//! products, the sign of the determinant and solves with `A` and `A^T`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row-wise.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= self.n || j >= self.n || !self.in_band(i, j) {
            return 0.0;
        }
        self.data[i * self.width + (j + self.kl - i)]
    }

    /// Sets entry `(i, j)`; panics when it lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i}, {j}) outside band"
        );
        self.data[i * self.width + (j + self.kl - i)] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            self.row_range(i).map(|j| self.get(i, j) * x[j]).sum()
        })
    }

    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.row_range(i) {
                    y[j] += self.get(i, j) * xi;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn lu(&self) -> BandLu {
        BandLu::factor(self)
    }

    /// Largest singular value by power iteration on `A^T A`.
    pub fn sigma_max(&self) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut x = DVector::from_fn(self.n, |_, _| rng.gen_range(-1.0..1.0));
        x.normalize_mut();
        let mut est = 0.0;
        for _ in 0..200 {
            let y = self.tr_mul_vec(&self.mul_vec(&x));
            let nrm = y.norm();
            if nrm == 0.0 {
                return 0.0;
            }
            let new_est = nrm.sqrt();
            x = y / nrm;
            if (new_est - est).abs() <= 1e-10 * new_est {
                est = new_est;
                break;
            }
            est = new_est;
        }
        est
    }
}

/// LU factorization with partial pivoting of a [`BandMatrix`].
///
/// `U` has upper bandwidth `kl + ku`; the unit lower factor is kept as the
/// sequence of column eliminations interleaved with row interchanges.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    uw: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
    sign: i8,
    singular: bool,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.uw);
        i * self.width + (j + self.kl - i)
    }

    fn factor(a: &BandMatrix) -> BandLu {
        let n = a.n;
        let kl = a.kl;
        let uw = a.ku + a.kl;
        let width = kl + uw + 1;
        let mut lu = BandLu {
            n,
            kl,
            uw,
            width,
            data: vec![0.0; n * width],
            piv: vec![0; n],
            sign: 1,
            singular: false,
        };
        for i in 0..n {
            for j in a.row_range(i) {
                let k = lu.idx(i, j);
                lu.data[k] = a.get(i, j);
            }
        }
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = lu.data[lu.idx(j, j)].abs();
            for i in j + 1..=last {
                let v = lu.data[lu.idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.piv[j] = p;
            let cmax = (j + uw).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    let (a1, a2) = (lu.idx(j, c), lu.idx(p, c));
                    lu.data.swap(a1, a2);
                }
                lu.sign = -lu.sign;
            }
            let pivot = lu.data[lu.idx(j, j)];
            if pivot == 0.0 || !pivot.is_finite() {
                lu.singular = true;
                continue;
            }
            if pivot < 0.0 {
                lu.sign = -lu.sign;
            }
            for i in j + 1..=last {
                let li = lu.idx(i, j);
                let f = lu.data[li] / pivot;
                lu.data[li] = f;
                if f != 0.0 {
                    for c in j + 1..=cmax {
                        let u = lu.data[lu.idx(j, c)];
                        let t = lu.idx(i, c);
                        lu.data[t] -= f * u;
                    }
                }
            }
        }
        lu
    }

    /// `+1`/`-1`, or `0` when an exact zero pivot occurred.
    pub fn det_sign(&self) -> i8 {
        if self.singular {
            0
        } else {
            self.sign
        }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut x = b.clone();
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                x.swap_rows(j, p);
            }
            let xj = x[j];
            for i in j + 1..=(j + self.kl).min(n - 1) {
                x[i] -= self.data[self.idx(i, j)] * xj;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..=(i + self.uw).min(n - 1) {
                s -= self.data[self.idx(i, c)] * x[c];
            }
            x[i] = s / self.diag(i);
        }
        x
    }

    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for j in i.saturating_sub(self.uw)..i {
                s -= self.data[self.idx(j, i)] * z[j];
            }
            z[i] = s / self.diag(i);
        }
        for j in (0..n).rev() {
            let mut s = 0.0;
            for i in j + 1..=(j + self.kl).min(n - 1) {
                s += self.data[self.idx(i, j)] * z[i];
            }
            z[j] -= s;
            let p = self.piv[j];
            if p != j {
                z.swap_rows(j, p);
            }
        }
        z
    }

    fn diag(&self, i: usize) -> f64 {
        let d = self.data[self.idx(i, i)];
        if d == 0.0 {
            f64::MIN_POSITIVE
        } else {
            d
        }
    }
}

/// The `count` smallest singular values of `a` with right singular vectors,
/// by block inverse iteration on `(A^T A)^{-1}` followed by Rayleigh-Ritz.
pub(crate) fn smallest_singular(
    a: &BandMatrix,
    lu: &BandLu,
    count: usize,
    iterations: usize,
) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.dim();
    let count = count.min(n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xba5e);
    let mut x = DMatrix::from_fn(n, count, |_, _| rng.gen_range(-1.0..1.0));
    x = x.qr().q();
    for _ in 0..iterations {
        let mut y = DMatrix::zeros(n, count);
        for c in 0..count {
            let col = x.column(c).into_owned();
            let w = lu.solve_transpose(&col);
            let v = lu.solve(&w);
            y.set_column(c, &v);
        }
        if y.iter().any(|v| !v.is_finite()) {
            break;
        }
        x = y.qr().q();
    }
    let mut ax = DMatrix::zeros(n, count);
    for c in 0..count {
        let col = x.column(c).into_owned();
        ax.set_column(c, &a.mul_vec(&col));
    }
    let svd = ax.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rot = x * vt.transpose();
    let vectors = DMatrix::from_fn(n, count, |r, c| rot[(r, order[c])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_det_sign;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in m.row_range(i) {
                m.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    #[test]
    fn det_sign_matches_dense() {
        for seed in 0..50 {
            let m = random_band(12, 3, 2, seed);
            assert_eq!(m.lu().det_sign(), lu_det_sign(&m.to_dense()), "seed {seed}");
        }
    }

    #[test]
    fn solves_match_dense() {
        let m = random_band(20, 2, 4, 3);
        let lu = m.lu();
        let b = DVector::from_fn(20, |i, _| (i as f64).sin());
        let x = lu.solve(&b);
        assert!((m.mul_vec(&x) - &b).amax() < 1e-9);
        let y = lu.solve_transpose(&b);
        assert!((m.tr_mul_vec(&y) - &b).amax() < 1e-9);
    }

    #[test]
    fn singular_values_match_dense() {
        let m = random_band(30, 3, 3, 11);
        let dense_sv = m.to_dense().singular_values();
        let mut sorted: Vec<f64> = dense_sv.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let lu = m.lu();
        let (small, _) = smallest_singular(&m, &lu, 2, 60);
        assert!((small[0] - sorted[0]).abs() < 1e-8 * sorted[29]);
        assert!((small[1] - sorted[1]).abs() < 1e-6 * sorted[29]);
        assert!((m.sigma_max() - sorted[29]).abs() < 1e-6 * sorted[29]);
    }
}
