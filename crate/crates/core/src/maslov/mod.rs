//! Lagrangian-Grassmannian layer: crossing forms, the Maslov index of a pair
//! of Lagrangian paths and its comparison with the Z₂-index.
//!
//! `R^{2k}` carries the standard symplectic form with the pairing
//! `(e_i, e_{k+i})`; a frame `F = (X; Y)` is split into its top and bottom
//! `k x k` blocks.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    align_unchecked, gap_distance, pair_matrix, singular_extremes, Frame, LinalgError,
};
use crate::z2index::{sample_pair, z2_index, IndexError, IndexOptions, SubspacePathPair, Z2};

/// Lagrangian condition tolerance on `||X^T Y - Y^T X||_max`.
pub const LAGRANGIAN_TOL: f64 = 1e-8;
/// Step of the central differences for `A'`, `B'`.
pub const DIFF_STEP: f64 = 1e-5;
/// Eigenvalues of the restricted crossing form at most this are zero.
pub const FORM_TOL: f64 = 1e-8;
/// Crossing instants are bisected to this width.
pub const CROSSING_TOL: f64 = 1e-10;
/// A chart is admissible while `sigma_min` of both `X` blocks exceeds this.
const CHART_MIN_SIGMA: f64 = 1e-3;
/// Relative threshold for the kernel of `A - B` at a located crossing.
const KERNEL_TOL: f64 = 1e-6;
/// A local minimum of `sigma_min(M)` below this is a crossing.
const TOUCH_TOL: f64 = 1e-7;
const SCAN_POINTS: usize = 401;

#[derive(Debug, Error)]
pub enum MaslovError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("path is not Lagrangian at t = {t} (defect {defect:e})")]
    NotLagrangian { t: f64, defect: f64 },
    #[error("no common graph chart near t = {t}")]
    NotGraphical { t: f64 },
    #[error("crossing form at t = {t} is degenerate (eigenvalue {eigenvalue:e})")]
    DegenerateForm { t: f64, eigenvalue: f64 },
    #[error("irregular crossing at t = {t}: {detail}")]
    IrregularCrossing { t: f64, detail: String },
    #[error("no crossing at t = {t} (sigma_min of the pair matrix {sigma:e})")]
    NotACrossing { t: f64, sigma: f64 },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn blocks(f: &Frame) -> Result<(DMatrix<f64>, DMatrix<f64>), MaslovError> {
    let (n, k) = (f.ambient_dim(), f.dim());
    if n != 2 * k {
        return Err(MaslovError::DimensionMismatch(format!(
            "a Lagrangian frame is 2k x k, got {n} x {k}"
        )));
    }
    let m = f.matrix();
    Ok((m.rows(0, k).into_owned(), m.rows(k, k).into_owned()))
}

/// `||X^T Y - Y^T X||_max`.
pub fn lagrangian_defect(f: &Frame) -> Result<f64, MaslovError> {
    let (x, y) = blocks(f)?;
    let d = x.transpose() * &y - y.transpose() * &x;
    Ok(d.amax())
}

/// Whether `F` spans a Lagrangian subspace of `R^{2k}`.
pub fn is_lagrangian(f: &Frame) -> Result<bool, MaslovError> {
    Ok(lagrangian_defect(f)? <= LAGRANGIAN_TOL)
}

/// The symplectic orthogonal map `R_theta = [[cos I, -sin I], [sin I, cos I]]`.
pub fn chart_rotation(k: usize, theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    let mut r = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        r[(i, i)] = c;
        r[(k + i, k + i)] = c;
        r[(i, k + i)] = -s;
        r[(k + i, i)] = s;
    }
    r
}

/// Candidate chart angles `j pi / (2k + 2)`. Two Lagrangians miss the chart
/// of angle `theta` except for at most `2k` values of `theta` mod `pi`, so one
/// of these always works.
pub fn chart_angles(k: usize) -> Vec<f64> {
    let m = 2 * k + 2;
    (0..m)
        .map(|j| std::f64::consts::PI * j as f64 / m as f64)
        .collect()
}

/// Symmetric `A` with `R_theta^T L = Gr(A) = {(x, A x)}`, and `sigma_min` of
/// the `X` block.
fn graph_in_chart(f: &Frame, theta: f64) -> Result<(DMatrix<f64>, f64), MaslovError> {
    let k = f.dim();
    let rotated = Frame::from_orthonormal(chart_rotation(k, theta).transpose() * f.matrix());
    let (x, y) = blocks(&rotated)?;
    let (smin, _) = singular_extremes(&x);
    let a = match x.clone().try_inverse() {
        Some(xi) if smin > 0.0 => y * xi,
        _ => return Ok((DMatrix::zeros(k, k), 0.0)),
    };
    Ok(((&a + a.transpose()) * 0.5, smin))
}

/// Admissible chart angles at `t`, best first (largest `sigma_min` of the
/// `X` blocks of both `V(t)` and `W(t)`).
pub fn admissible_charts(pair: &SubspacePathPair, t: f64) -> Result<Vec<f64>, MaslovError> {
    let (v, w) = pair.eval(t)?;
    let mut scored = Vec::new();
    for theta in chart_angles(v.dim()) {
        let (_, sv) = graph_in_chart(&v, theta)?;
        let (_, sw) = graph_in_chart(&w, theta)?;
        let s = sv.min(sw);
        if s > CHART_MIN_SIGMA {
            scored.push((theta, s));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored.into_iter().map(|(t, _)| t).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingForm {
    pub t: f64,
    /// Chart angle used.
    pub chart: f64,
    /// Basis of `V(t) ∩ W(t)` in `R^{2k}` (columns).
    pub kernel: DMatrix<f64>,
    /// `<(B' - A') u, u>` on the kernel coordinates.
    pub form: DMatrix<f64>,
    pub signature: i64,
}

fn check_lagrangian(f: &Frame, t: f64) -> Result<(), MaslovError> {
    let d = lagrangian_defect(f)?;
    if d > LAGRANGIAN_TOL {
        return Err(MaslovError::NotLagrangian { t, defect: d });
    }
    Ok(())
}

/// Crossing form `Gamma(W, V, t0)[u] = <(B'(t0) - A'(t0)) u, u>` on
/// `ker(A - B)`, where `V = Gr A`, `W = Gr B` in the best admissible chart.
pub fn crossing_form(pair: &SubspacePathPair, t0: f64) -> Result<CrossingForm, MaslovError> {
    let charts = admissible_charts(pair, t0)?;
    let theta = *charts.first().ok_or(MaslovError::NotGraphical { t: t0 })?;
    crossing_form_in_chart(pair, t0, theta)
}

/// [`crossing_form`] in the chart of angle `theta`.
pub fn crossing_form_in_chart(
    pair: &SubspacePathPair,
    t0: f64,
    theta: f64,
) -> Result<CrossingForm, MaslovError> {
    let graphs = |t: f64| -> Result<(DMatrix<f64>, DMatrix<f64>), MaslovError> {
        let (v, w) = pair.eval(t)?;
        if v.dim() != w.dim() {
            return Err(MaslovError::DimensionMismatch(format!(
                "Lagrangian pair of dimensions {} and {}",
                v.dim(),
                w.dim()
            )));
        }
        check_lagrangian(&v, t)?;
        check_lagrangian(&w, t)?;
        let (a, sa) = graph_in_chart(&v, theta)?;
        let (b, sb) = graph_in_chart(&w, theta)?;
        if sa.min(sb) <= CHART_MIN_SIGMA {
            return Err(MaslovError::NotGraphical { t });
        }
        Ok((a, b))
    };
    let (a, b) = graphs(t0)?;
    let (ap, bp) = graphs(t0 + DIFF_STEP)?;
    let (am, bm) = graphs(t0 - DIFF_STEP)?;
    let da = (ap - am) / (2.0 * DIFF_STEP);
    let db = (bp - bm) / (2.0 * DIFF_STEP);
    let k = a.nrows();
    let diff = &a - &b;
    let eig = SymmetricEigen::new(diff.clone());
    let scale = diff.amax().max(1.0);
    let cols: Vec<usize> = (0..k)
        .filter(|&i| eig.eigenvalues[i].abs() <= KERNEL_TOL * scale)
        .collect();
    if cols.is_empty() {
        let (v, w) = pair.eval(t0)?;
        let (sigma, _) = singular_extremes(&pair_matrix(&v, &w)?);
        return Err(MaslovError::NotACrossing { t: t0, sigma });
    }
    let mut kern = DMatrix::zeros(k, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        kern.set_column(j, &eig.eigenvectors.column(i));
    }
    let form = kern.transpose() * (&db - &da) * &kern;
    let form = (&form + form.transpose()) * 0.5;
    let fe = SymmetricEigen::new(form.clone()).eigenvalues;
    let mut signature = 0i64;
    for &mu in fe.iter() {
        if mu.abs() <= FORM_TOL {
            return Err(MaslovError::DegenerateForm {
                t: t0,
                eigenvalue: mu,
            });
        }
        signature += if mu > 0.0 { 1 } else { -1 };
    }
    // Kernel vectors (u, A u) mapped back through the chart.
    let mut stacked = DMatrix::zeros(2 * k, cols.len());
    stacked.rows_mut(0, k).copy_from(&kern);
    stacked.rows_mut(k, k).copy_from(&(&a * &kern));
    let kernel = Frame::orthonormalize(&(chart_rotation(k, theta) * stacked))?.into_matrix();
    Ok(CrossingForm {
        t: t0,
        chart: theta,
        kernel,
        form,
        signature,
    })
}

fn sigma_min_at(pair: &SubspacePathPair, t: f64) -> Result<f64, MaslovError> {
    let (v, w) = pair.eval(t)?;
    Ok(singular_extremes(&pair_matrix(&v, &w)?).0)
}

/// Bisects a sign change of `det M` between `(t0, v0, w0)` and `t1`, keeping
/// frames aligned to the left end.
fn bisect_sign_change(
    pair: &SubspacePathPair,
    mut t0: f64,
    mut t1: f64,
    v0: &Frame,
    w0: &Frame,
) -> Result<f64, MaslovError> {
    let det_aligned = |t: f64, v_ref: &Frame, w_ref: &Frame| -> Result<(f64, Frame, Frame), MaslovError> {
        let (v, w) = pair.eval(t)?;
        let v = align_unchecked(v_ref, &v);
        let w = align_unchecked(w_ref, &w);
        Ok((pair_matrix(&v, &w)?.determinant(), v, w))
    };
    let (mut v_left, mut w_left) = (v0.clone(), w0.clone());
    let d0 = pair_matrix(&v_left, &w_left)?.determinant();
    while t1 - t0 > CROSSING_TOL {
        let mid = 0.5 * (t0 + t1);
        let (dm, vm, wm) = det_aligned(mid, &v_left, &w_left)?;
        if dm == 0.0 {
            return Ok(mid);
        }
        if dm * d0 > 0.0 {
            t0 = mid;
            v_left = vm;
            w_left = wm;
        } else {
            t1 = mid;
        }
    }
    Ok(0.5 * (t0 + t1))
}

/// Golden-section minimization of `sigma_min(M(t))` on `[lo, hi]`.
fn minimize_sigma(pair: &SubspacePathPair, mut lo: f64, mut hi: f64) -> Result<(f64, f64), MaslovError> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = sigma_min_at(pair, x1)?;
    let mut f2 = sigma_min_at(pair, x2)?;
    while hi - lo > CROSSING_TOL {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = sigma_min_at(pair, x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = sigma_min_at(pair, x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// Interior crossing instants of a Lagrangian pair: sign changes of
/// `det M` bisected to [`CROSSING_TOL`], plus local minima of
/// `sigma_min(M)` that reach zero (even-dimensional intersections).
pub fn locate_crossings(pair: &SubspacePathPair) -> Result<Vec<f64>, MaslovError> {
    let opts = IndexOptions {
        initial_points: SCAN_POINTS,
        ..IndexOptions::default()
    };
    let s = sample_pair(pair, &opts)?;
    let mut found = Vec::new();
    for i in 0..s.grid.len() - 1 {
        if s.det[i] * s.det[i + 1] < 0.0 {
            found.push(bisect_sign_change(
                pair,
                s.grid[i],
                s.grid[i + 1],
                &s.v[i],
                &s.w[i],
            )?);
        } else if s.det[i + 1] == 0.0 {
            found.push(s.grid[i + 1]);
        }
    }
    let sig: Vec<f64> = s
        .v
        .iter()
        .zip(&s.w)
        .map(|(v, w)| pair_matrix(v, w).map(|m| singular_extremes(&m).0))
        .collect::<Result<_, _>>()?;
    for i in 1..s.grid.len() - 1 {
        if sig[i] <= sig[i - 1] && sig[i] <= sig[i + 1] && sig[i] < 0.05 {
            let (t, v) = minimize_sigma(pair, s.grid[i - 1], s.grid[i + 1])?;
            if v < TOUCH_TOL {
                found.push(t);
            }
        }
    }
    found.sort_by(f64::total_cmp);
    found.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaslovReport {
    pub value: i64,
    pub crossings: Vec<CrossingForm>,
}

/// Maslov index of `(V, W)` with transversal ends: the sum over interior
/// crossings of the signature of `Gamma(W, V, t)`.
pub fn maslov_index(pair: &SubspacePathPair) -> Result<MaslovReport, MaslovError> {
    let (a, b) = pair.domain();
    for t in [a, b] {
        let (v, w) = pair.eval(t)?;
        if v.ambient_dim() != 2 * v.dim() || v.dim() != w.dim() {
            return Err(MaslovError::DimensionMismatch(format!(
                "Lagrangian pair needs two k-dimensional subspaces of R^2k, got {} and {} in R^{}",
                v.dim(),
                w.dim(),
                v.ambient_dim()
            )));
        }
        check_lagrangian(&v, t)?;
        check_lagrangian(&w, t)?;
        let m = pair_matrix(&v, &w)?;
        if crate::linalg::det_sign(&m, crate::linalg::DEFAULT_EPS_TRANS).is_degenerate() {
            let (lo, hi) = singular_extremes(&m);
            return Err(IndexError::DegenerateEndpoint {
                at: t,
                margin: lo / hi,
            }
            .into());
        }
    }
    let mut crossings = Vec::new();
    let mut value = 0;
    for t in locate_crossings(pair)? {
        let cf = crossing_form(pair, t).map_err(|e| match e {
            MaslovError::DegenerateForm { t, eigenvalue } => MaslovError::IrregularCrossing {
                t,
                detail: format!("crossing form has eigenvalue {eigenvalue:e}"),
            },
            other => other,
        })?;
        value += cf.signature;
        crossings.push(cf);
    }
    Ok(MaslovReport { value, crossings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mod2Comparison {
    pub z2: Z2,
    pub maslov: i64,
    pub agree: bool,
}

/// `iota(V, W) ≡ mu(V, W) mod 2`.
pub fn mod2_compare(pair: &SubspacePathPair) -> Result<Mod2Comparison, MaslovError> {
    let z2 = z2_index(pair, &IndexOptions::default())?.value;
    let maslov = maslov_index(pair)?.value;
    Ok(Mod2Comparison {
        z2,
        maslov,
        agree: z2 == Z2::from_parity(maslov),
    })
}

/// A pair of graph paths `(Gr A(t), Gr B(t))` for symmetric-matrix closures,
/// optionally moved by a fixed symplectic orthogonal map `U`.
pub fn graph_pair<FA, FB>(
    a: f64,
    b: f64,
    fa: FA,
    fb: FB,
    u: Option<DMatrix<f64>>,
) -> Result<SubspacePathPair, IndexError>
where
    FA: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    FB: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
{
    let graph = move |m: DMatrix<f64>, u: &Option<DMatrix<f64>>| -> Result<Frame, IndexError> {
        let k = m.nrows();
        let mut g = DMatrix::zeros(2 * k, k);
        g.rows_mut(0, k).fill_with_identity();
        g.rows_mut(k, k).copy_from(&m);
        let g = match u {
            Some(u) => u * g,
            None => g,
        };
        Ok(Frame::orthonormalize(&g)?)
    };
    SubspacePathPair::from_oriented_fn(a, b, move |t| Ok((graph(fa(t), &u)?, graph(fb(t), &u)?)))
}

/// Gap between the subspaces of two Lagrangian frames; re-exported for tests
/// comparing kernels across charts.
pub fn subspace_gap(a: &Frame, b: &Frame) -> Result<f64, MaslovError> {
    Ok(gap_distance(a, b)?)
}
