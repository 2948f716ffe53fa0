//! Parity of the operator path `A_lambda = d/dt - S_lambda` through two
//! independent routes (the finite-dimensional graph formula and a
//! discretized boundary-value determinant), plus checks of the index theorem
//! and the decomposition identity.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{
    asymptotic_limits, check_a1_a3, resolve_horizon, stable_subspace, unstable_subspace,
    FlowError, HypothesisReport, LinearFamily,
};
use crate::linalg::{
    align_unchecked, band::smallest_singular, det_sign, gap_distance, orthogonal_complement,
    singular_extremes, BandMatrix, DetSign, Frame, LinalgError, DEFAULT_EPS_TRANS,
};
use crate::z2index::{
    geometric_parity, z2_index, IndexError, IndexOptions, IndexReport, SubspacePathPair, Z2,
};

/// Kernel threshold on `sigma / sigma_max` of a discretized operator.
pub const KERNEL_REL_TOL: f64 = 1e-6;
/// Largest frame gap between neighbouring `lambda` samples of the sweep.
const MAX_LAMBDA_GAP: f64 = 0.2;
const MAX_SWEEP_REFINEMENTS: usize = 12;
const SIGMA_ITERATIONS: usize = 12;

#[derive(Debug, Error)]
pub enum ParityError {
    #[error("endpoint s = {at} of the finite path is singular")]
    DegenerateEndpoint { at: f64 },
    #[error("operator at the endpoint lambda = {lambda} is not invertible (sigma_min/sigma_max = {ratio:e}); (A2) fails")]
    EndpointDegenerate { lambda: f64, ratio: f64 },
    #[error("truncation unstable: {detail}")]
    UnstableTruncation { detail: String },
    #[error("internal mismatch (bug trap): {detail}")]
    InternalMismatch { detail: String },
    #[error("hypothesis ({assumption}) fails at lambda = {lambda}: {detail}")]
    HypothesisFailure {
        assumption: String,
        lambda: f64,
        detail: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteParity {
    pub value: Z2,
    /// `sign det T(0) != sign det T(1)`.
    pub det_route: Z2,
    /// `iota(Gr T(s), R^m x {0})`.
    pub graph_route: Z2,
}

/// Parity of a path `s -> T(s)` of `m x m` matrices on `[0, 1]` with
/// invertible ends, by the determinant and the graph routes.
pub fn finite_parity<F>(t: F) -> Result<FiniteParity, ParityError>
where
    F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
{
    let t = Arc::new(t);
    let (t0, t1) = (t(0.0), t(1.0));
    if !t0.is_square() || t0.shape() != t1.shape() {
        return Err(ParityError::Invalid(format!(
            "finite_parity needs square matrices, got {:?}",
            t0.shape()
        )));
    }
    let m = t0.nrows();
    let sign = |mat: &DMatrix<f64>, at: f64| match det_sign(mat, DEFAULT_EPS_TRANS) {
        DetSign::Degenerate => Err(ParityError::DegenerateEndpoint { at }),
        s => Ok(s),
    };
    let det_route = Z2::from(sign(&t0, 0.0)? != sign(&t1, 1.0)?);
    // Lambda_0 = R^m x {0} = span(e_1, ..., e_m).
    let lambda0 = Frame::standard(2 * m, &(0..m).collect::<Vec<_>>());
    let tt = Arc::clone(&t);
    let pair = SubspacePathPair::from_oriented_fn(0.0, 1.0, move |s| {
        let mut g = DMatrix::zeros(2 * m, m);
        g.rows_mut(0, m).fill_with_identity();
        g.rows_mut(m, m).copy_from(&tt(s));
        Ok((Frame::orthonormalize(&g)?, lambda0.clone()))
    })?;
    let graph_route = z2_index(&pair, &IndexOptions::default())?.value;
    if graph_route != det_route {
        return Err(ParityError::InternalMismatch {
            detail: format!("graph route {graph_route} but determinant route {det_route}"),
        });
    }
    Ok(FiniteParity {
        value: det_route,
        det_route,
        graph_route,
    })
}

/// `A_{lambda, tau}` discretized by the midpoint scheme on `N` intervals of
/// `[-tau, tau]`, with the boundary rows `B_u^T x_0 = 0`, `B_s^T x_N = 0`.
#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub lambda: f64,
    pub tau: f64,
    pub n_intervals: usize,
    pub n: usize,
    pub k: usize,
    pub matrix: BandMatrix,
    /// Orthogonal complement of `E^u_lambda(-tau)` (`n - k` columns).
    pub b_u: Frame,
    /// Orthogonal complement of `E^s_lambda(tau)` (`k` columns).
    pub b_s: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelInfo {
    pub dim: usize,
    /// Smallest singular values relative to `sigma_max`, ascending.
    pub relative_singular_values: Vec<f64>,
    /// Right singular vector of `sigma_min`, reshaped to `(N + 1) x n`.
    pub vector: DMatrix<f64>,
}

impl DiscretizedOperator {
    pub fn grid(&self) -> Vec<f64> {
        let h = 2.0 * self.tau / self.n_intervals as f64;
        (0..=self.n_intervals)
            .map(|i| -self.tau + h * i as f64)
            .collect()
    }

    /// Sign of the determinant (0 if a pivot vanishes exactly).
    pub fn det_sign(&self) -> i8 {
        self.matrix.lu().det_sign()
    }

    /// `sigma_min / sigma_max`.
    pub fn sigma_ratio(&self) -> f64 {
        let lu = self.matrix.lu();
        if lu.is_singular() {
            return 0.0;
        }
        let (vals, _) = smallest_singular(&self.matrix, &lu, 1, SIGMA_ITERATIONS);
        vals[0] / self.matrix.sigma_max()
    }

    /// Numerical kernel: singular values below [`KERNEL_REL_TOL`]` * sigma_max`
    /// among the `n` smallest.
    pub fn kernel(&self) -> KernelInfo {
        let lu = self.matrix.lu();
        let count = self.n.min(self.matrix.dim());
        let (vals, vecs) = smallest_singular(&self.matrix, &lu, count, 3 * SIGMA_ITERATIONS);
        let smax = self.matrix.sigma_max();
        let rel: Vec<f64> = vals.iter().map(|v| v / smax).collect();
        let dim = rel.iter().filter(|&&r| r < KERNEL_REL_TOL).count();
        let v = vecs.column(0);
        let vector = DMatrix::from_fn(self.n_intervals + 1, self.n, |i, c| v[i * self.n + c]);
        KernelInfo {
            dim,
            relative_singular_values: rel,
            vector,
        }
    }
}

/// `(B_u, B_s)`: complements of `E^u_lambda(-tau)` and `E^s_lambda(tau)`.
pub fn boundary_frames(
    fam: &LinearFamily,
    lambda: f64,
    tau: f64,
) -> Result<(Frame, Frame), ParityError> {
    let eu = unstable_subspace(fam, lambda, -tau)?;
    let es = stable_subspace(fam, lambda, tau)?;
    Ok((orthogonal_complement(&eu), orthogonal_complement(&es)))
}

/// [`discretize_with_frames`] with freshly computed boundary frames.
pub fn discretize(
    fam: &LinearFamily,
    lambda: f64,
    tau: f64,
    n_intervals: usize,
) -> Result<DiscretizedOperator, ParityError> {
    let (b_u, b_s) = boundary_frames(fam, lambda, tau)?;
    discretize_with_frames(fam, lambda, tau, n_intervals, b_u, b_s)
}

/// Assembles the `(N + 1) n` square banded matrix: `n - k` rows
/// `B_u^T x_0`, then `(x_{i+1} - x_i)/h - S(t_{i+1/2}) (x_i + x_{i+1})/2`
/// for `i = 0..N`, then `k` rows `B_s^T x_N`.
pub fn discretize_with_frames(
    fam: &LinearFamily,
    lambda: f64,
    tau: f64,
    n_intervals: usize,
    b_u: Frame,
    b_s: Frame,
) -> Result<DiscretizedOperator, ParityError> {
    let (n, k) = (fam.dim(), fam.k());
    if !(tau > 0.0) || n_intervals == 0 {
        return Err(ParityError::Invalid(format!(
            "need tau > 0 and N > 0, got tau = {tau}, N = {n_intervals}"
        )));
    }
    if b_u.ambient_dim() != n || b_u.dim() != n - k || b_s.ambient_dim() != n || b_s.dim() != k {
        return Err(ParityError::Invalid(
            "boundary frames have the wrong dimensions".into(),
        ));
    }
    let size = (n_intervals + 1) * n;
    let (kl, ku) = (2 * n - k - 1, n + k - 1);
    let mut a = BandMatrix::zeros(size, kl, ku);
    for r in 0..n - k {
        for c in 0..n {
            a.set(r, c, b_u.matrix()[(c, r)]);
        }
    }
    let h = 2.0 * tau / n_intervals as f64;
    for i in 0..n_intervals {
        let tm = -tau + h * (i as f64 + 0.5);
        let s = fam.matrix(lambda, tm)?;
        let row0 = (n - k) + i * n;
        for r in 0..n {
            for c in 0..n {
                let id = if r == c { 1.0 / h } else { 0.0 };
                let half = 0.5 * s[(r, c)];
                a.set(row0 + r, i * n + c, -id - half);
                a.set(row0 + r, (i + 1) * n + c, id - half);
            }
        }
    }
    let row0 = (n - k) + n_intervals * n;
    for r in 0..k {
        for c in 0..n {
            a.set(row0 + r, n_intervals * n + c, b_s.matrix()[(c, r)]);
        }
    }
    Ok(DiscretizedOperator {
        lambda,
        tau,
        n_intervals,
        n,
        k,
        matrix: a,
        b_u,
        b_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParityOptions {
    pub tau: f64,
    pub n_intervals: usize,
    pub grid_points: usize,
    /// Width to which sign flips are bisected in `lambda`.
    pub lambda_tol: f64,
    pub eps_trans: f64,
    /// Re-run at `(2 tau, 2 N)` and `(tau, 2 N)` and require agreement.
    pub check_doubling: bool,
    /// Record `sigma_min / sigma_max` at every grid point.
    pub record_sigma: bool,
}

impl Default for ParityOptions {
    fn default() -> Self {
        ParityOptions {
            tau: 15.0,
            n_intervals: 3000,
            grid_points: 201,
            lambda_tol: 1e-3,
            eps_trans: DEFAULT_EPS_TRANS,
            check_doubling: true,
            record_sigma: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParitySample {
    pub lambda: f64,
    pub det_sign: i8,
    /// `sigma_min / sigma_max`, when recorded.
    pub sigma_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingCheck {
    pub tau: f64,
    pub n_intervals: usize,
    pub value: Z2,
    pub flips: Vec<f64>,
    pub endpoint_kernel_dims: [usize; 2],
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub value: Z2,
    pub det_sign_trace: Vec<ParitySample>,
    /// Midpoints of the bisected sign-flip intervals.
    pub flips: Vec<f64>,
    pub tau: f64,
    pub n_intervals: usize,
    pub endpoint_kernel_dims: [usize; 2],
    /// `(2 tau, 2 N)` re-run.
    pub tau_doubling: Option<DoublingCheck>,
    /// `(tau, 2 N)` re-run.
    pub n_doubling: Option<DoublingCheck>,
}

struct SweepPoint {
    lambda: f64,
    b_u: Frame,
    b_s: Frame,
}

fn frames_at(
    fam: &LinearFamily,
    lambdas: &[f64],
    tau: f64,
) -> Result<Vec<(Frame, Frame)>, ParityError> {
    lambdas
        .par_iter()
        .map(|&l| boundary_frames(fam, l, tau))
        .collect()
}

/// Boundary frames along the `lambda` grid, aligned in `lambda`; grid
/// intervals across which a frame moves by [`MAX_LAMBDA_GAP`] or more are
/// bisected.
fn aligned_sweep(
    fam: &LinearFamily,
    lambdas: &[f64],
    tau: f64,
) -> Result<Vec<SweepPoint>, ParityError> {
    let mut grid = lambdas.to_vec();
    let mut frames = frames_at(fam, &grid, tau)?;
    for _ in 0..MAX_SWEEP_REFINEMENTS {
        let mut inserts = Vec::new();
        for i in 0..grid.len() - 1 {
            let g = gap_distance(&frames[i].0, &frames[i + 1].0)?
                .max(gap_distance(&frames[i].1, &frames[i + 1].1)?);
            if g >= MAX_LAMBDA_GAP {
                inserts.push(0.5 * (grid[i] + grid[i + 1]));
            }
        }
        if inserts.is_empty() {
            let mut out: Vec<SweepPoint> = Vec::with_capacity(grid.len());
            for (l, (bu, bs)) in grid.into_iter().zip(frames) {
                let (bu, bs) = match out.last() {
                    Some(p) => (align_unchecked(&p.b_u, &bu), align_unchecked(&p.b_s, &bs)),
                    None => (bu, bs),
                };
                out.push(SweepPoint {
                    lambda: l,
                    b_u: bu,
                    b_s: bs,
                });
            }
            return Ok(out);
        }
        let extra = frames_at(fam, &inserts, tau)?;
        let mut merged: Vec<(f64, (Frame, Frame))> =
            grid.into_iter().zip(frames).chain(inserts.into_iter().zip(extra)).collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        grid = merged.iter().map(|p| p.0).collect();
        frames = merged.into_iter().map(|p| p.1).collect();
    }
    Err(ParityError::Invalid(
        "boundary frames do not vary continuously in lambda".into(),
    ))
}

struct SweepResult {
    value: Z2,
    samples: Vec<ParitySample>,
    flips: Vec<f64>,
    endpoint_kernel_dims: [usize; 2],
}

fn run_sweep(
    fam: &LinearFamily,
    lambdas: &[f64],
    tau: f64,
    n_int: usize,
    opts: &ParityOptions,
    record_sigma: bool,
) -> Result<SweepResult, ParityError> {
    let pts = aligned_sweep(fam, lambdas, tau)?;
    let evals: Vec<(i8, Option<f64>)> = pts
        .par_iter()
        .map(|p| -> Result<(i8, Option<f64>), ParityError> {
            let op = discretize_with_frames(fam, p.lambda, tau, n_int, p.b_u.clone(), p.b_s.clone())?;
            let sign = op.det_sign();
            let sigma = if record_sigma { Some(op.sigma_ratio()) } else { None };
            Ok((sign, sigma))
        })
        .collect::<Result<_, _>>()?;
    let last = pts.len() - 1;
    let mut endpoint_kernel_dims = [0; 2];
    for (slot, idx) in [(0usize, 0usize), (1, last)] {
        let op = discretize_with_frames(
            fam,
            pts[idx].lambda,
            tau,
            n_int,
            pts[idx].b_u.clone(),
            pts[idx].b_s.clone(),
        )?;
        let ratio = match evals[idx].1 {
            Some(r) => r,
            None => op.sigma_ratio(),
        };
        if evals[idx].0 == 0 || ratio <= opts.eps_trans {
            return Err(ParityError::EndpointDegenerate {
                lambda: pts[idx].lambda,
                ratio,
            });
        }
        endpoint_kernel_dims[slot] = op.kernel().dim;
    }
    let mut flips = Vec::new();
    for i in 0..last {
        if evals[i].0 * evals[i + 1].0 < 0 {
            flips.push(bisect_flip(fam, &pts[i], evals[i].0, pts[i + 1].lambda, tau, n_int, opts)?);
        }
    }
    let samples = pts
        .iter()
        .zip(&evals)
        .map(|(p, e)| ParitySample {
            lambda: p.lambda,
            det_sign: e.0,
            sigma_min: e.1,
        })
        .collect();
    Ok(SweepResult {
        value: Z2::from(evals[0].0 != evals[last].0),
        samples,
        flips,
        endpoint_kernel_dims,
    })
}

fn bisect_flip(
    fam: &LinearFamily,
    left: &SweepPoint,
    left_sign: i8,
    right: f64,
    tau: f64,
    n_int: usize,
    opts: &ParityOptions,
) -> Result<f64, ParityError> {
    let (mut lo, mut hi) = (left.lambda, right);
    let (mut bu, mut bs) = (left.b_u.clone(), left.b_s.clone());
    while hi - lo > opts.lambda_tol {
        let mid = 0.5 * (lo + hi);
        let (u, s) = boundary_frames(fam, mid, tau)?;
        let (u, s) = (align_unchecked(&bu, &u), align_unchecked(&bs, &s));
        let sign = discretize_with_frames(fam, mid, tau, n_int, u.clone(), s.clone())?.det_sign();
        if sign == left_sign {
            lo = mid;
            bu = u;
            bs = s;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `lambda` grid of `points` uniform samples of `[lo, hi]`.
pub fn lambda_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let m = points.max(2);
    (0..m)
        .map(|i| {
            if i == m - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (m - 1) as f64
            }
        })
        .collect()
}

/// Parity of `A_lambda` over `lambdas` from the sign of the determinant of
/// the discretized truncated operator with `lambda`-aligned boundary frames;
/// optionally re-run at `(2 tau, 2 N)` and `(tau, 2 N)`.
pub fn operator_parity(
    fam: &LinearFamily,
    lambdas: &[f64],
    tau: f64,
    n_intervals: usize,
    opts: &ParityOptions,
) -> Result<ParityReport, ParityError> {
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ParityError::Invalid(
            "lambda grid must have at least two increasing points".into(),
        ));
    }
    let base = run_sweep(fam, lambdas, tau, n_intervals, opts, opts.record_sigma)?;
    let mut report = ParityReport {
        value: base.value,
        det_sign_trace: base.samples,
        flips: base.flips,
        tau,
        n_intervals,
        endpoint_kernel_dims: base.endpoint_kernel_dims,
        tau_doubling: None,
        n_doubling: None,
    };
    if opts.check_doubling {
        let mut checks = Vec::new();
        for (t, n) in [(2.0 * tau, 2 * n_intervals), (tau, 2 * n_intervals)] {
            let r = run_sweep(fam, lambdas, t, n, opts, false)?;
            let agrees = r.value == report.value
                && r.endpoint_kernel_dims == report.endpoint_kernel_dims;
            checks.push(DoublingCheck {
                tau: t,
                n_intervals: n,
                value: r.value,
                flips: r.flips,
                endpoint_kernel_dims: r.endpoint_kernel_dims,
                agrees,
            });
        }
        let n_check = checks.pop().expect("two checks");
        let t_check = checks.pop().expect("two checks");
        for c in [&t_check, &n_check] {
            if !c.agrees {
                return Err(ParityError::UnstableTruncation {
                    detail: format!(
                        "parity {} at (tau, N) = ({tau}, {n_intervals}) but {} at ({}, {})",
                        report.value, c.value, c.tau, c.n_intervals
                    ),
                });
            }
        }
        report.tau_doubling = Some(t_check);
        report.n_doubling = Some(n_check);
    }
    Ok(report)
}

fn first_violation(h: &HypothesisReport) -> Option<ParityError> {
    h.violations.first().map(|v| ParityError::HypothesisFailure {
        assumption: v.assumption.to_string(),
        lambda: v.lambda,
        detail: v.detail.clone(),
    })
}

/// The family with a horizon resolved at both ends of its `lambda` range.
pub fn resolved_family(fam: &LinearFamily) -> Result<LinearFamily, ParityError> {
    let (lo, hi) = fam.lambda_range;
    let a = resolve_horizon(fam, lo)?;
    let b = resolve_horizon(fam, hi)?;
    Ok(fam.clone().with_t_max(a.t_max.max(b.t_max)))
}

/// `lambda -> (E^s_lambda(0), E^u_lambda(0))` on the family's range.
pub fn endpoint_pair(fam: &LinearFamily) -> Result<SubspacePathPair, ParityError> {
    let (lo, hi) = fam.lambda_range;
    let f = fam.clone();
    Ok(SubspacePathPair::from_fn(lo, hi, move |l| {
        Ok((stable_subspace(&f, l, 0.0)?, unstable_subspace(&f, l, 0.0)?))
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub lhs: ParityReport,
    pub rhs: IndexReport,
    pub agree: bool,
    /// Sign-flip instants of `det M_lambda(0)`.
    pub lambda_candidates: Vec<f64>,
    pub t_max: f64,
    pub hypotheses: HypothesisReport,
}

/// Index theorem: `parity(A_lambda) = iota(E^s_lambda(0), E^u_lambda(0))`.
pub fn verify_index_theorem(
    fam: &LinearFamily,
    opts: &ParityOptions,
    index_opts: &IndexOptions,
) -> Result<TheoremReport, ParityError> {
    let hypotheses = check_a1_a3(fam);
    if let Some(e) = first_violation(&hypotheses) {
        return Err(e);
    }
    let fam = resolved_family(fam)?;
    let (lo, hi) = fam.lambda_range;
    let lambdas = lambda_grid(lo, hi, opts.grid_points);
    let lhs = operator_parity(&fam, &lambdas, opts.tau, opts.n_intervals, opts)?;
    let rhs = z2_index(&endpoint_pair(&fam)?, index_opts)?;
    Ok(TheoremReport {
        agree: lhs.value == rhs.value,
        lambda_candidates: rhs.crossings.clone(),
        t_max: fam.t_max,
        lhs,
        rhs,
        hypotheses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// `iota(E^s_lambda(0), E^u_lambda(0); lambda in [0, 1])`.
    pub iota: Z2,
    pub geo_start: Z2,
    pub geo_end: Z2,
    /// `iota(V^-(S^+_lambda), V^+(S^-_lambda); lambda in [0, 1])`.
    pub boundary: Z2,
    pub limits_lambda_independent: bool,
    pub holds: bool,
}

fn limits_constant(fam: &LinearFamily) -> Result<bool, ParityError> {
    let (lo, hi) = fam.lambda_range;
    let first = asymptotic_limits(fam, lo)?;
    for l in lambda_grid(lo, hi, 21).into_iter().skip(1) {
        let lim = asymptotic_limits(fam, l)?;
        let d = (&lim.minus - &first.minus)
            .amax()
            .max((&lim.plus - &first.plus).amax());
        if d > 1e-12 * (1.0 + first.minus.amax().max(first.plus.amax())) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Decomposition identity: `iota ≡ iota_geo(S_0) + iota_geo(S_1) + iota(V^-(S^+), V^+(S^-))`.
pub fn decomposition_check(
    fam: &LinearFamily,
    index_opts: &IndexOptions,
) -> Result<DecompositionReport, ParityError> {
    let fam = resolved_family(fam)?;
    let (lo, hi) = fam.lambda_range;
    let iota = z2_index(&endpoint_pair(&fam)?, index_opts)?.value;
    let geo_start = geometric_parity(&fam, lo, index_opts)?.value;
    let geo_end = geometric_parity(&fam, hi, index_opts)?.value;
    let f = fam.clone();
    let boundary_pair = SubspacePathPair::from_fn(lo, hi, move |l| {
        let lim = asymptotic_limits(&f, l)?;
        Ok((lim.split_plus.v_minus, lim.split_minus.v_plus))
    })?;
    let boundary = z2_index(&boundary_pair, index_opts)?.value;
    let constant = limits_constant(&fam)?;
    if constant && boundary != Z2::Zero {
        return Err(ParityError::InternalMismatch {
            detail: "constant asymptotic limits but a nonzero boundary term".into(),
        });
    }
    Ok(DecompositionReport {
        iota,
        geo_start,
        geo_end,
        boundary,
        limits_lambda_independent: constant,
        holds: iota == geo_start + geo_end + boundary,
    })
}

/// `sigma_min / sigma_max` of a dense matrix; exposed for the endpoint checks
/// of small reductions.
pub fn dense_sigma_ratio(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = singular_extremes(m);
    if hi > 0.0 {
        lo / hi
    } else {
        0.0
    }
}

/// Values of the kernel vector's first component profile, for plotting.
pub fn kernel_profile(op: &DiscretizedOperator, info: &KernelInfo) -> Vec<(f64, DVector<f64>)> {
    op.grid()
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, info.vector.row(i).transpose()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::MatrixExpr;
    use nalgebra::dmatrix;

    fn family(q: &str) -> LinearFamily {
        let m = MatrixExpr::from_strs(&[["0", "1"], [q, "0"]]).unwrap();
        LinearFamily::from_expr(m, 1).unwrap()
    }

    #[test]
    fn finite_parity_examples() {
        let r = finite_parity(|s| DMatrix::from_element(1, 1, 1.0 - 2.0 * s)).unwrap();
        assert_eq!((r.value, r.graph_route), (Z2::One, Z2::One));
        let r = finite_parity(|s| {
            let (sn, c) = (std::f64::consts::PI * s).sin_cos();
            dmatrix![c, -sn; sn, c]
        })
        .unwrap();
        assert_eq!(r.value, Z2::Zero);
        assert!(matches!(
            finite_parity(|s| DMatrix::from_element(1, 1, s)),
            Err(ParityError::DegenerateEndpoint { at }) if at == 0.0
        ));
    }

    #[test]
    fn discretization_is_square_and_banded() {
        let fam = family("1");
        let op = discretize(&fam, 0.0, 5.0, 50).unwrap();
        assert_eq!(op.matrix.dim(), 102);
        assert_eq!(op.matrix.bandwidths(), (2, 2));
        assert!(op.sigma_ratio() > 1e-3);
    }

    #[test]
    fn reflectionless_kernel_is_one_dimensional() {
        let fam = family("1-2*sech(t)^2");
        let op = discretize(&fam, 0.0, 15.0, 3000).unwrap();
        let k = op.kernel();
        assert_eq!(k.dim, 1, "{:?}", k.relative_singular_values);
        // Kernel element ~ (sech t, -sech t tanh t).
        let mid = op.n_intervals / 2;
        let scale = k.vector[(mid, 0)];
        for (i, t) in op.grid().into_iter().enumerate().step_by(100) {
            let x = k.vector[(i, 0)] / scale;
            let y = k.vector[(i, 1)] / scale;
            assert!((x - 1.0 / t.cosh()).abs() < 1e-3, "t = {t}");
            assert!((y + t.tanh() / t.cosh()).abs() < 1e-3, "t = {t}");
        }
        let op2 = discretize(&fam, 0.0, 30.0, 6000).unwrap();
        assert_eq!(op2.kernel().dim, 1);
    }

    #[test]
    fn constant_hyperbolic_has_trivial_kernel() {
        let fam =
            LinearFamily::from_fn(2, 1, |l, _| dmatrix![-1.0 - l, 0.0; 0.0, 1.0 + l]).unwrap();
        let opts = ParityOptions {
            n_intervals: 400,
            tau: 8.0,
            grid_points: 11,
            ..ParityOptions::default()
        };
        let r = operator_parity(&fam, &lambda_grid(0.0, 1.0, 11), 8.0, 400, &opts).unwrap();
        assert_eq!(r.value, Z2::Zero);
        assert!(r.flips.is_empty());
        assert!(r.det_sign_trace.iter().all(|s| s.sigma_min.unwrap() > 1e-3));
    }

    #[test]
    fn poschl_teller_parity_small() {
        let fam = family("1-2.5*lambda*sech(t)^2");
        let opts = ParityOptions {
            tau: 10.0,
            n_intervals: 1000,
            grid_points: 41,
            ..ParityOptions::default()
        };
        let r = operator_parity(&fam, &lambda_grid(0.0, 1.0, 41), 10.0, 1000, &opts).unwrap();
        assert_eq!(r.value, Z2::One);
        assert_eq!(r.flips.len(), 1);
        assert!((r.flips[0] - 0.8).abs() < 2e-3, "{:?}", r.flips);
    }

    #[test]
    fn theorem_and_decomposition_on_constant_family() {
        let fam =
            LinearFamily::from_fn(2, 1, |l, _| dmatrix![-1.0 - l, 0.0; 0.0, 1.0 + l]).unwrap();
        let opts = ParityOptions {
            tau: 6.0,
            n_intervals: 300,
            grid_points: 11,
            record_sigma: false,
            ..ParityOptions::default()
        };
        let r = verify_index_theorem(&fam, &opts, &IndexOptions::default()).unwrap();
        assert!(r.agree);
        assert_eq!(r.rhs.value, Z2::Zero);
        let d = decomposition_check(&fam, &IndexOptions::default()).unwrap();
        assert!(d.holds);
        assert_eq!((d.iota, d.geo_start, d.geo_end, d.boundary), (Z2::Zero, Z2::Zero, Z2::Zero, Z2::Zero));
    }
}
