//! Z₂-index of pairs of subspace paths, its unbounded-interval
//! variant, the geometric parity of a heteroclinic orbit, the closed-loop
//! construction and the orientability of the pulled-back tautological bundle.

use std::fmt;
use std::ops::Add;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{
    asymptotic_limits, invariant_subspace_path, resolve_horizon, FlowError, LinearFamily,
    SubspacePath, Which,
};
use crate::linalg::{
    align_unchecked, det_sign, gap_distance, orthogonal_complement, pair_matrix,
    singular_extremes, DetSign, Frame, LinalgError, DEFAULT_EPS_TRANS,
};

/// Largest frame gap tolerated between consecutive samples.
pub const MAX_SAMPLE_GAP: f64 = 0.2;
/// Slack in the chord test of the sampler: tolerated excess of the path
/// through the midpoint over twice the direct gap.
const CHORD_SLACK: f64 = 0.02;
/// Bisection depth cap for the sampler.
pub const MAX_DEPTH: usize = 20;
/// Initial plateau width of [`close_loop`], as a fraction of the interval.
pub const CLOSE_LOOP_EPS: f64 = 0.05;
const CLOSE_LOOP_HALVINGS: usize = 10;
const CLOSED_TOL: f64 = 1e-8;
/// Graph charts over `W~(t)^perp` are accepted while `sigma_min` of the chart
/// matrix stays above this bound.
const CHART_TOL: f64 = 1e-6;

/// An element of Z/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Z2 {
    Zero,
    One,
}

impl Z2 {
    pub fn from_parity(n: i64) -> Z2 {
        if n.rem_euclid(2) == 0 {
            Z2::Zero
        } else {
            Z2::One
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Z2::Zero => 0,
            Z2::One => 1,
        }
    }

    pub fn is_zero(self) -> bool {
        self == Z2::Zero
    }
}

impl From<Z2> for u8 {
    fn from(z: Z2) -> u8 {
        z.as_u8()
    }
}

impl TryFrom<u8> for Z2 {
    type Error = String;
    fn try_from(v: u8) -> Result<Z2, String> {
        match v {
            0 => Ok(Z2::Zero),
            1 => Ok(Z2::One),
            _ => Err(format!("{v} is not an element of Z2")),
        }
    }
}

impl From<bool> for Z2 {
    fn from(b: bool) -> Z2 {
        if b {
            Z2::One
        } else {
            Z2::Zero
        }
    }
}

impl Add for Z2 {
    type Output = Z2;
    fn add(self, rhs: Z2) -> Z2 {
        Z2::from(self != rhs)
    }
}

impl fmt::Display for Z2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("pair is not transversal at the endpoint t = {at} (sigma_min/sigma_max = {margin:e})")]
    DegenerateEndpoint { at: f64, margin: f64 },
    #[error("tail not transversal near t = {at}: {detail}")]
    TailNotTransversal { at: f64, detail: String },
    #[error("boundary degenerate: {condition}")]
    BoundaryDegenerate { condition: String },
    #[error("cannot close the loop: transversality on the return leg fails down to eps = {eps:e}")]
    CannotClose { eps: f64 },
    #[error("loop is not closed: gap between first and last sample is {gap:e}")]
    NotClosed { gap: f64 },
    #[error("path is not continuous between t = {t0} and t = {t1} (gap {gap:.3} after {depth} bisections)")]
    Discontinuous {
        t0: f64,
        t1: f64,
        gap: f64,
        depth: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexOptions {
    /// Relative singular-value threshold for transversality.
    pub eps_trans: f64,
    /// Bisection depth cap.
    pub max_depth: usize,
    /// Number of uniformly spaced samples the sampler starts from.
    pub initial_points: usize,
    /// Samples used to check transversality on tails.
    pub tail_samples: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            eps_trans: DEFAULT_EPS_TRANS,
            max_depth: MAX_DEPTH,
            initial_points: 17,
            tail_samples: 41,
        }
    }
}

/// `det M(t)` at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetSample {
    pub t: f64,
    pub det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub value: Z2,
    pub det_trace: Vec<DetSample>,
    /// Midpoints of the refined intervals on which `det M` changes sign.
    pub crossings: Vec<f64>,
    pub eps_trans: f64,
    /// Deepest bisection level reached by the sampler.
    pub depth: usize,
}

impl IndexReport {
    /// Number of sign changes of `det M` along the refined trace.
    pub fn sign_changes(&self) -> usize {
        self.det_trace
            .windows(2)
            .filter(|w| w[0].det * w[1].det < 0.0)
            .count()
    }
}

type PairFn = dyn Fn(f64) -> Result<(Frame, Frame), IndexError> + Send + Sync;

/// A pair `t -> (V(t), W(t))` of continuous subspace paths in a common
/// `R^n`, `dim V + dim W = n`, on `[a, b]` (ends may be infinite for pairs
/// fed to [`z2_index_unbounded`]).
#[derive(Clone)]
pub struct SubspacePathPair {
    a: f64,
    b: f64,
    eval: Arc<PairFn>,
    /// Whether the closure returns frames of continuously varying
    /// orientation (see [`SubspacePathPair::from_oriented_fn`]).
    oriented: bool,
}

impl fmt::Debug for SubspacePathPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubspacePathPair")
            .field("a", &self.a)
            .field("b", &self.b)
            .finish_non_exhaustive()
    }
}

impl SubspacePathPair {
    /// A pair given by one closure returning both frames.
    pub fn from_fn<F>(a: f64, b: f64, f: F) -> Result<Self, IndexError>
    where
        F: Fn(f64) -> Result<(Frame, Frame), IndexError> + Send + Sync + 'static,
    {
        if !(a < b) || a.is_nan() || b.is_nan() {
            return Err(IndexError::Invalid(format!(
                "parameter interval [{a}, {b}] is empty"
            )));
        }
        Ok(SubspacePathPair {
            a,
            b,
            eval: Arc::new(f),
            oriented: false,
        })
    }

    /// Like [`SubspacePathPair::from_fn`], for closures whose frames are
    /// continuous in `t` as frames, not just as subspaces. The sampler then
    /// uses orientation changes of the raw frames to detect fast half-turns
    /// between samples.
    pub fn from_oriented_fn<F>(a: f64, b: f64, f: F) -> Result<Self, IndexError>
    where
        F: Fn(f64) -> Result<(Frame, Frame), IndexError> + Send + Sync + 'static,
    {
        Ok(Self::from_fn(a, b, f)?.with_orientation(true))
    }

    fn with_orientation(mut self, oriented: bool) -> Self {
        self.oriented = oriented;
        self
    }

    pub fn is_oriented(&self) -> bool {
        self.oriented
    }

    /// A pair given by two matrix-valued closures whose columns span `V(t)`
    /// and `W(t)`; the columns are orthonormalized at every evaluation (which
    /// is continuous in the matrix, so the pair is oriented).
    pub fn from_matrix_fns<FV, FW>(a: f64, b: f64, v: FV, w: FW) -> Result<Self, IndexError>
    where
        FV: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        FW: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::from_oriented_fn(a, b, move |t| {
            Ok((Frame::orthonormalize(&v(t))?, Frame::orthonormalize(&w(t))?))
        })
    }

    /// A pair of sampled paths, each interpolated on its own grid. The domain
    /// is the intersection of the two parameter ranges.
    pub fn from_paths(v: SubspacePath, w: SubspacePath) -> Result<Self, IndexError> {
        let range = |p: &SubspacePath| {
            let g = p.grid();
            (g[0].min(g[g.len() - 1]), g[0].max(g[g.len() - 1]))
        };
        let (va, vb) = range(&v);
        let (wa, wb) = range(&w);
        Self::from_oriented_fn(va.max(wa), vb.min(wb), move |t| Ok((v.at(t)?, w.at(t)?)))
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn eval(&self, t: f64) -> Result<(Frame, Frame), IndexError> {
        (self.eval)(t)
    }

    /// The same pair on the sub-interval `[a, b]` (which may extend past the
    /// declared domain only if the underlying closure accepts it).
    pub fn restricted(&self, a: f64, b: f64) -> Result<Self, IndexError> {
        if !(a < b) {
            return Err(IndexError::Invalid(format!("empty restriction [{a}, {b}]")));
        }
        Ok(SubspacePathPair {
            a,
            b,
            eval: Arc::clone(&self.eval),
            oriented: self.oriented,
        })
    }

    /// `s -> (V(phi(s)), W(phi(s)))` on `[c, d]`; `phi` must be a monotone
    /// map of `[c, d]` onto the domain (either orientation).
    pub fn reparametrized<P>(&self, c: f64, d: f64, phi: P) -> Result<Self, IndexError>
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let inner = Arc::clone(&self.eval);
        Ok(Self::from_fn(c, d, move |s| inner(phi(s)))?.with_orientation(self.oriented))
    }

    /// The pair traversed backwards, on `[-b, -a]`.
    pub fn reversed(&self) -> Self {
        let inner = Arc::clone(&self.eval);
        SubspacePathPair {
            a: -self.b,
            b: -self.a,
            eval: Arc::new(move |s| inner(-s)),
            oriented: self.oriented,
        }
    }

    /// `(W, V)`.
    pub fn swapped(&self) -> Self {
        let inner = Arc::clone(&self.eval);
        SubspacePathPair {
            a: self.a,
            b: self.b,
            eval: Arc::new(move |t| inner(t).map(|(v, w)| (w, v))),
            oriented: self.oriented,
        }
    }

    /// `(V1 (+) V2, W1 (+) W2)` in the block-embedded `R^{n1+n2}`, on the
    /// common domain.
    pub fn direct_sum(&self, other: &SubspacePathPair) -> Result<Self, IndexError> {
        let (p, q) = (Arc::clone(&self.eval), Arc::clone(&other.eval));
        let oriented = self.oriented && other.oriented;
        let sum = Self::from_fn(self.a.max(other.a), self.b.min(other.b), move |t| {
            let (v1, w1) = p(t)?;
            let (v2, w2) = q(t)?;
            Ok((
                crate::linalg::direct_sum(&v1, &v2),
                crate::linalg::direct_sum(&w1, &w2),
            ))
        })?;
        Ok(sum.with_orientation(oriented))
    }
}

/// Aligned samples of a pair on a refined grid.
#[derive(Debug, Clone)]
pub struct PairSamples {
    pub grid: Vec<f64>,
    pub v: Vec<Frame>,
    pub w: Vec<Frame>,
    pub det: Vec<f64>,
    pub depth: usize,
}

struct Sampler<'a> {
    pair: &'a SubspacePathPair,
    opts: &'a IndexOptions,
    out: PairSamples,
    /// Orientations of the last stored frames relative to the raw frames
    /// returned by the pair (`det R` for `aligned = raw R`).
    orientation: (f64, f64),
}

/// `det R` of the Procrustes rotation taking `raw` to the frame of its span
/// closest to `prev`.
fn relative_orientation(prev: &Frame, raw: &Frame) -> f64 {
    (prev.matrix().transpose() * raw.matrix()).determinant().signum()
}

impl Sampler<'_> {
    fn push(&mut self, t: f64, v: Frame, w: Frame) -> Result<(), IndexError> {
        let d = pair_matrix(&v, &w)?.determinant();
        self.out.grid.push(t);
        self.out.v.push(v);
        self.out.w.push(w);
        self.out.det.push(d);
        Ok(())
    }

    fn bisect(
        &mut self,
        mid: (f64, Frame, Frame),
        t1: f64,
        v1: Frame,
        w1: Frame,
        depth: usize,
    ) -> Result<(), IndexError> {
        let (tm, vm, wm) = mid;
        self.step(tm, vm, wm, depth + 1)?;
        self.step(t1, v1, w1, depth + 1)
    }

    /// Appends the (raw) sample at `t1` after the current last sample. The
    /// step is bisected while
    /// - the frames at `t0`, the midpoint and `t1` are not pairwise close, or
    ///   the midpoint strays from the chord;
    /// - alignment changes the orientation relative to the raw frames: a
    ///   subspace can make a fast half-turn between two samples and come back
    ///   close to where it started, which only the orientation of a
    ///   continuous raw frame reveals (at the depth cap the change is taken
    ///   to be a sign convention of the source and accepted);
    /// - `det M` changes sign between well-conditioned samples.
    ///
    /// Accepted midpoints are kept as samples.
    fn step(&mut self, t1: f64, v1: Frame, w1: Frame, depth: usize) -> Result<(), IndexError> {
        self.out.depth = self.out.depth.max(depth);
        let t0 = *self.out.grid.last().expect("started");
        let tm = 0.5 * (t0 + t1);
        let (vm, wm) = self.pair.eval(tm)?;
        let (v0, w0) = (
            self.out.v.last().expect("started"),
            self.out.w.last().expect("started"),
        );
        let gap = |a: &Frame, b: &Frame, c: &Frame, d: &Frame| -> Result<f64, IndexError> {
            Ok(gap_distance(a, b)?.max(gap_distance(c, d)?))
        };
        let g01 = gap(v0, &v1, w0, &w1)?;
        let g0m = gap(v0, &vm, w0, &wm)?;
        let gm1 = gap(&vm, &v1, &wm, &w1)?;
        let worst = g01.max(g0m).max(gm1);
        let bent = g0m + gm1 > 2.0 * g01 + CHORD_SLACK;
        let can_refine = depth < self.opts.max_depth;
        if worst >= MAX_SAMPLE_GAP || bent {
            if !can_refine {
                return Err(IndexError::Discontinuous {
                    t0,
                    t1,
                    gap: worst,
                    depth,
                });
            }
            return self.bisect((tm, vm, wm), t1, v1, w1, depth);
        }
        let om = (
            relative_orientation(v0, &vm),
            relative_orientation(w0, &wm),
        );
        let vm_al = align_unchecked(v0, &vm);
        let wm_al = align_unchecked(w0, &wm);
        let o1 = (
            relative_orientation(&vm_al, &v1),
            relative_orientation(&wm_al, &w1),
        );
        // `om`, `o1` are the orientations of the aligned frames at `tm`, `t1`
        // relative to the raw ones; a continuous raw frame keeps them fixed.
        let turned = self.pair.oriented && (om != self.orientation || o1 != om);
        if turned && can_refine {
            return self.bisect((tm, vm, wm), t1, v1, w1, depth);
        }
        let v1_al = align_unchecked(&vm_al, &v1);
        let w1_al = align_unchecked(&wm_al, &w1);
        let d0 = *self.out.det.last().expect("started");
        let dm = pair_matrix(&vm_al, &wm_al)?.determinant();
        let d1 = pair_matrix(&v1_al, &w1_al)?.determinant();
        let tol = self.opts.eps_trans;
        let flips = |a: f64, b: f64| a * b < 0.0 && a.abs() > tol && b.abs() > tol;
        if (flips(d0, dm) || flips(dm, d1)) && can_refine {
            return self.bisect((tm, vm, wm), t1, v1, w1, depth);
        }
        self.push(tm, vm_al, wm_al)?;
        self.push(t1, v1_al, w1_al)?;
        self.orientation = o1;
        Ok(())
    }
}

/// Samples the pair on its (finite) domain, refining until consecutive
/// frames are closer than [`MAX_SAMPLE_GAP`] and sign changes of `det M` are
/// localized, and aligns the frames along the parameter.
pub fn sample_pair(pair: &SubspacePathPair, opts: &IndexOptions) -> Result<PairSamples, IndexError> {
    let (a, b) = pair.domain();
    if !(a.is_finite() && b.is_finite()) {
        return Err(IndexError::Invalid(format!(
            "bounded interval required, got [{a}, {b}]"
        )));
    }
    let m = opts.initial_points.max(2);
    let mut sampler = Sampler {
        pair,
        opts,
        out: PairSamples {
            grid: Vec::new(),
            v: Vec::new(),
            w: Vec::new(),
            det: Vec::new(),
            depth: 0,
        },
        orientation: (1.0, 1.0),
    };
    let (v0, w0) = pair.eval(a)?;
    if v0.ambient_dim() != w0.ambient_dim() || v0.dim() + w0.dim() != v0.ambient_dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "pair of dimensions {} and {} in R^{}",
            v0.dim(),
            w0.dim(),
            v0.ambient_dim()
        ))
        .into());
    }
    sampler.push(a, v0, w0)?;
    for i in 1..m {
        let t = if i == m - 1 {
            b
        } else {
            a + (b - a) * i as f64 / (m - 1) as f64
        };
        let (v, w) = pair.eval(t)?;
        sampler.step(t, v, w, 0)?;
    }
    Ok(sampler.out)
}

fn endpoint_sign(v: &Frame, w: &Frame, at: f64, eps: f64) -> Result<i8, IndexError> {
    let m = pair_matrix(v, w)?;
    match det_sign(&m, eps) {
        DetSign::Degenerate => {
            let (lo, hi) = singular_extremes(&m);
            Err(IndexError::DegenerateEndpoint {
                at,
                margin: if hi > 0.0 { lo / hi } else { 0.0 },
            })
        }
        s => Ok(s.as_i8().expect("non-degenerate")),
    }
}

fn report_from_samples(s: &PairSamples, opts: &IndexOptions) -> Result<IndexReport, IndexError> {
    let last = s.grid.len() - 1;
    let sa = endpoint_sign(&s.v[0], &s.w[0], s.grid[0], opts.eps_trans)?;
    let sb = endpoint_sign(&s.v[last], &s.w[last], s.grid[last], opts.eps_trans)?;
    let crossings = (0..last)
        .filter(|&i| s.det[i] * s.det[i + 1] < 0.0)
        .map(|i| 0.5 * (s.grid[i] + s.grid[i + 1]))
        .collect();
    Ok(IndexReport {
        value: Z2::from(sa != sb),
        det_trace: s
            .grid
            .iter()
            .zip(&s.det)
            .map(|(&t, &det)| DetSample { t, det })
            .collect(),
        crossings,
        eps_trans: opts.eps_trans,
        depth: s.depth,
    })
}

/// `iota(V, W; [a, b])`: 0 iff `det M(a) det M(b) > 0` for
/// continuously transported frames.
pub fn z2_index(pair: &SubspacePathPair, opts: &IndexOptions) -> Result<IndexReport, IndexError> {
    let s = sample_pair(pair, opts)?;
    report_from_samples(&s, opts)
}

/// Unbounded parameter domains of [`z2_index_unbounded`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Domain {
    /// `[start, +inf)`.
    HalfLine { start: f64 },
    /// `(-inf, +inf)`.
    Line,
}

impl Domain {
    fn core(&self, tail: f64) -> (f64, f64) {
        match *self {
            Domain::HalfLine { start } => (start, tail),
            Domain::Line => (-tail, tail),
        }
    }
}

/// Index of a pair on a half-line or the line: the index of
/// the restriction to the core `[.., tail_t]`, after checking transversality
/// on `tail_t <= |t| <= 2 tail_t` and that doubling the horizon gives the
/// same value.
pub fn z2_index_unbounded(
    pair: &SubspacePathPair,
    domain: Domain,
    tail_t: f64,
    opts: &IndexOptions,
) -> Result<IndexReport, IndexError> {
    let (lo, _) = domain.core(tail_t);
    if !(tail_t > 0.0 && tail_t > lo) {
        return Err(IndexError::Invalid(format!(
            "tail horizon {tail_t} must lie beyond the start of the domain"
        )));
    }
    let mut tails = vec![(tail_t, 2.0 * tail_t)];
    if domain == Domain::Line {
        tails.push((-2.0 * tail_t, -tail_t));
    }
    let m = opts.tail_samples.max(2);
    for (t0, t1) in tails {
        for i in 0..m {
            let t = t0 + (t1 - t0) * i as f64 / (m - 1) as f64;
            let (v, w) = pair.eval(t)?;
            let mm = pair_matrix(&v, &w)?;
            if det_sign(&mm, opts.eps_trans).is_degenerate() {
                let (smin, smax) = singular_extremes(&mm);
                return Err(IndexError::TailNotTransversal {
                    at: t,
                    detail: format!("sigma_min/sigma_max = {:e}", smin / smax),
                });
            }
        }
    }
    let (a1, b1) = domain.core(tail_t);
    let (a2, b2) = domain.core(2.0 * tail_t);
    let r1 = z2_index(&pair.restricted(a1, b1)?, opts)?;
    let r2 = z2_index(&pair.restricted(a2, b2)?, opts)?;
    if r1.value != r2.value {
        return Err(IndexError::TailNotTransversal {
            at: tail_t,
            detail: format!(
                "index {} at horizon {tail_t} but {} at {}",
                r1.value,
                r2.value,
                2.0 * tail_t
            ),
        });
    }
    Ok(r1)
}

fn linspace(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            if i == m - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (m - 1) as f64
            }
        })
        .collect()
}

/// Checks boundary non-degeneracy `V^+(S^-) ⋔ V^-(S^+)` at `lambda`.
pub fn check_boundary_nondegenerate(
    fam: &LinearFamily,
    lambda: f64,
    eps_trans: f64,
) -> Result<(), IndexError> {
    let lim = asymptotic_limits(fam, lambda)?;
    let m = pair_matrix(&lim.split_plus.v_minus, &lim.split_minus.v_plus)?;
    if det_sign(&m, eps_trans).is_degenerate() {
        return Err(IndexError::BoundaryDegenerate {
            condition: format!(
                "V^+(S^-) and V^-(S^+) are not transversal at lambda = {lambda}"
            ),
        });
    }
    Ok(())
}

/// `iota_geo`: the index of `t -> (E^s(t), E^u(-t))` on `[0, +inf)`, with the
/// tail horizon at half the resolved `t_max`.
pub fn geometric_parity(
    fam: &LinearFamily,
    lambda: f64,
    opts: &IndexOptions,
) -> Result<IndexReport, IndexError> {
    let fam = resolve_horizon(fam, lambda)?;
    check_boundary_nondegenerate(&fam, lambda, opts.eps_trans)?;
    let big = fam.t_max;
    let grid = linspace(0.0, big, 41);
    let es = invariant_subspace_path(&fam, lambda, Which::Stable, &grid)?;
    let neg: Vec<f64> = grid.iter().rev().map(|t| -t).collect();
    let eu = invariant_subspace_path(&fam, lambda, Which::Unstable, &neg)?.reversed();
    let m0 = pair_matrix(es.first(), eu.first())?;
    if det_sign(&m0, opts.eps_trans).is_degenerate() {
        return Err(IndexError::BoundaryDegenerate {
            condition: format!("E^s(0) and E^u(0) are not transversal at lambda = {lambda}"),
        });
    }
    let pair = SubspacePathPair::from_paths(es, eu)?;
    z2_index_unbounded(&pair, Domain::HalfLine { start: 0.0 }, 0.5 * big, opts)
}

/// Output of [`close_loop`]: `V~` is a closed path on `[a, 2b - a]` agreeing
/// with `V` on `[a, b]`; `W~` retraces `W` backwards on the second half.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub v: SubspacePath,
    pub w: SubspacePath,
    /// Plateau width that succeeded, relative to `b - a`.
    pub eps: f64,
}

/// Coefficients `D C^{-1}` representing `target` as the graph of a map from
/// `x = W^perp` to `w`, or `None` when the chart is ill-conditioned.
fn graph_map(target: &Frame, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let c = x.transpose() * target.matrix();
    let (smin, _) = singular_extremes(&c);
    if smin <= CHART_TOL {
        return None;
    }
    let d = w.transpose() * target.matrix();
    Some(d * c.try_inverse()?)
}

/// `W^perp` with the orientation making `det [X | W] > 0`, so that it varies
/// continuously with a continuous frame `W`.
fn oriented_complement(w: &Frame) -> Result<Frame, IndexError> {
    let x = orthogonal_complement(w);
    if x.dim() == 0 {
        return Ok(x);
    }
    let mut m = x.into_matrix();
    let full = crate::linalg::pair_matrix(&Frame::from_orthonormal(m.clone()), w)?;
    if full.determinant() < 0.0 {
        m.column_mut(0).neg_mut();
    }
    Ok(Frame::from_orthonormal(m))
}

fn smooth_step(x: f64) -> f64 {
    0.5 * (1.0 - (std::f64::consts::PI * x.clamp(0.0, 1.0)).cos())
}

/// Extends `V` to a closed path `V~` on
/// `[a, 2b - a]` with `V~(t) ⋔ W~(t) = W(2b - t)` on the return leg. Near
/// each end of the return leg `V~` is the graph over `W~(t)^perp` of a
/// cut-off of the map representing `V(b)` (resp. `V(a)`); in between it is
/// `W~(t)^perp` itself.
pub fn close_loop(pair: &SubspacePathPair, opts: &IndexOptions) -> Result<ClosedLoop, IndexError> {
    let (a, b) = pair.domain();
    let first = sample_pair(pair, opts)?;
    let last = first.grid.len() - 1;
    endpoint_sign(&first.v[0], &first.w[0], a, opts.eps_trans)?;
    endpoint_sign(&first.v[last], &first.w[last], b, opts.eps_trans)?;
    let len = b - a;
    let v_end = first.v[last].clone();
    let v_start = first.v[0].clone();
    let mut eps = CLOSE_LOOP_EPS;
    for _ in 0..=CLOSE_LOOP_HALVINGS {
        match return_leg(pair, a, b, len, eps, &v_start, &v_end, opts) {
            Ok(second) => {
                let mut grid = first.grid.clone();
                let mut vf = first.v.clone();
                let mut wf = first.w.clone();
                grid.extend_from_slice(&second.grid[1..]);
                vf.extend(second.v[1..].iter().cloned());
                wf.extend(second.w[1..].iter().cloned());
                return Ok(ClosedLoop {
                    v: SubspacePath::from_frames(grid.clone(), vf)?,
                    w: SubspacePath::from_frames(grid, wf)?,
                    eps,
                });
            }
            Err(IndexError::CannotClose { .. }) => eps *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(IndexError::CannotClose { eps: eps * 2.0 })
}

#[allow(clippy::too_many_arguments)]
fn return_leg(
    pair: &SubspacePathPair,
    a: f64,
    b: f64,
    len: f64,
    eps: f64,
    v_start: &Frame,
    v_end: &Frame,
    opts: &IndexOptions,
) -> Result<PairSamples, IndexError> {
    let inner = Arc::clone(&pair.eval);
    let (v_start, v_end) = (v_start.clone(), v_end.clone());
    let leg = SubspacePathPair::from_fn(b, 2.0 * b - a, move |t| {
        let u = ((t - b) / len).clamp(0.0, 1.0);
        let (_, w) = inner((2.0 * b - t).clamp(a, b))?;
        let x = oriented_complement(&w)?;
        let (xm, wm) = (x.matrix(), w.matrix());
        let (target, weight) = if u <= eps {
            (Some(&v_end), 1.0 - smooth_step(u / eps))
        } else if u >= 1.0 - eps {
            (Some(&v_start), smooth_step((u - (1.0 - eps)) / eps))
        } else {
            (None, 0.0)
        };
        let v = match target {
            None => x.clone(),
            Some(tg) => {
                let l = graph_map(tg, xm, wm).ok_or(IndexError::CannotClose { eps })?;
                if weight == 1.0 {
                    // Exactly the target subspace at the ends of the leg.
                    tg.clone()
                } else {
                    Frame::orthonormalize(&(xm + wm * (l * weight)))?
                }
            }
        };
        Ok((v, w))
    })?;
    let s = sample_pair(&leg.with_orientation(pair.oriented), opts)?;
    for (i, (v, w)) in s.v.iter().zip(&s.w).enumerate() {
        let m = pair_matrix(v, w)?;
        if det_sign(&m, opts.eps_trans).is_degenerate() {
            log::debug!("close_loop: return leg degenerate at t = {}", s.grid[i]);
            return Err(IndexError::CannotClose { eps });
        }
    }
    Ok(s)
}

/// `w_1` of the pull-back of the tautological bundle along a closed loop
/// Transport a frame along the samples and read off the sign of
/// the return map.
pub fn bundle_orientability(lp: &SubspacePath) -> Result<Z2, IndexError> {
    if lp.len() < 2 {
        return Err(IndexError::Invalid("loop needs at least two samples".into()));
    }
    let gap = gap_distance(lp.first(), lp.last())?;
    if gap > CLOSED_TOL {
        return Err(IndexError::NotClosed { gap });
    }
    let mut cur = lp.first().clone();
    for (i, f) in lp.frames().iter().enumerate().skip(1) {
        let g = gap_distance(&cur, f)?;
        if g >= 0.5 {
            return Err(IndexError::Discontinuous {
                t0: lp.grid()[i - 1],
                t1: lp.grid()[i],
                gap: g,
                depth: 0,
            });
        }
        cur = align_unchecked(&cur, f);
    }
    let ret = cur.matrix().transpose() * lp.first().matrix();
    Ok(Z2::from(ret.determinant() < 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use std::f64::consts::PI;

    fn line(angle: f64) -> DMatrix<f64> {
        dmatrix![angle.cos(); angle.sin()]
    }

    fn rotating(a: f64, b: f64) -> SubspacePathPair {
        SubspacePathPair::from_matrix_fns(a, b, line, |_| dmatrix![0.0; 1.0]).unwrap()
    }

    #[test]
    fn z2_algebra() {
        assert_eq!(Z2::One + Z2::One, Z2::Zero);
        assert_eq!(Z2::from_parity(-3), Z2::One);
        assert_eq!(serde_json_like(Z2::One), 1);
    }

    fn serde_json_like(z: Z2) -> u8 {
        u8::from(z)
    }

    #[test]
    fn rotating_line_examples() {
        let opts = IndexOptions::default();
        let r = z2_index(&rotating(0.0, 0.75 * PI), &opts).unwrap();
        assert_eq!(r.value, Z2::One);
        assert_eq!(r.crossings.len(), 1);
        assert!((r.crossings[0] - 0.5 * PI).abs() < 1e-5);
        assert!((r.det_trace.last().unwrap().det + 0.5f64.sqrt()).abs() < 1e-12);
        let r = z2_index(&rotating(0.0, 0.25 * PI), &opts).unwrap();
        assert_eq!(r.value, Z2::Zero);
        assert_eq!(r.sign_changes(), 0);
    }

    #[test]
    fn frame_negation_does_not_matter() {
        let p = SubspacePathPair::from_matrix_fns(0.0, 0.75 * PI, |t| -line(t), |_| {
            dmatrix![0.0; -1.0]
        })
        .unwrap();
        assert_eq!(z2_index(&p, &IndexOptions::default()).unwrap().value, Z2::One);
    }

    #[test]
    fn degenerate_endpoint_is_reported() {
        let err = z2_index(&rotating(0.0, 0.5 * PI), &IndexOptions::default()).unwrap_err();
        match err {
            IndexError::DegenerateEndpoint { at, .. } => assert!((at - 0.5 * PI).abs() < 1e-12),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn two_half_turns_are_even() {
        // Offset so that no crossing falls exactly on an initial sample.
        let r = z2_index(&rotating(0.1, 2.0 * PI + 0.1), &IndexOptions::default()).unwrap();
        assert_eq!(r.value, Z2::Zero);
        assert_eq!(r.sign_changes(), 2);
    }

    #[test]
    fn unbounded_examples() {
        let opts = IndexOptions::default();
        let c = SubspacePathPair::from_matrix_fns(
            f64::NEG_INFINITY,
            f64::INFINITY,
            |_| dmatrix![1.0; 0.0],
            |_| dmatrix![0.0; 1.0],
        )
        .unwrap();
        let r = z2_index_unbounded(&c, Domain::Line, 5.0, &opts).unwrap();
        assert_eq!(r.value, Z2::Zero);
        // Frozen outside [-5, 5]; the line turns by 3π/4 with one crossing.
        let frozen = SubspacePathPair::from_matrix_fns(
            f64::NEG_INFINITY,
            f64::INFINITY,
            |t| line(0.75 * PI * (t.clamp(-5.0, 5.0) + 5.0) / 10.0),
            |_| dmatrix![0.0; 1.0],
        )
        .unwrap();
        for tail in [5.0, 10.0] {
            let r = z2_index_unbounded(&frozen, Domain::Line, tail, &opts).unwrap();
            assert_eq!(r.value, Z2::One);
        }
        let err = z2_index_unbounded(&frozen, Domain::Line, 3.0, &opts);
        assert!(err.is_ok() || matches!(err, Err(IndexError::TailNotTransversal { .. })));
        // A tail that keeps rotating is rejected.
        let spinning = SubspacePathPair::from_matrix_fns(
            0.0,
            f64::INFINITY,
            line,
            |_| dmatrix![0.0; 1.0],
        )
        .unwrap();
        assert!(matches!(
            z2_index_unbounded(&spinning, Domain::HalfLine { start: 0.0 }, 5.0, &opts),
            Err(IndexError::TailNotTransversal { .. })
        ));
    }

    #[test]
    fn mobius_and_constant_loops() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 20.0).collect();
        let frames = grid
            .iter()
            .map(|&t| Frame::orthonormalize(&line(0.5 * PI * t)).unwrap())
            .collect();
        let mobius = SubspacePath::from_frames(grid.clone(), frames).unwrap();
        assert_eq!(bundle_orientability(&mobius).unwrap(), Z2::One);
        let constant =
            SubspacePath::from_frames(grid.clone(), vec![Frame::standard(2, &[0]); 41]).unwrap();
        assert_eq!(bundle_orientability(&constant).unwrap(), Z2::Zero);
        let open_frames = grid
            .iter()
            .map(|&t| Frame::orthonormalize(&line(0.3 * t)).unwrap())
            .collect();
        let open = SubspacePath::from_frames(grid, open_frames).unwrap();
        assert!(matches!(
            bundle_orientability(&open),
            Err(IndexError::NotClosed { .. })
        ));
    }

    #[test]
    fn close_loop_constant_and_rotating() {
        let opts = IndexOptions::default();
        let c = SubspacePathPair::from_matrix_fns(
            0.0,
            1.0,
            |_| dmatrix![1.0; 0.0],
            |_| dmatrix![0.0; 1.0],
        )
        .unwrap();
        let lp = close_loop(&c, &opts).unwrap();
        assert_eq!(bundle_orientability(&lp.v).unwrap(), Z2::Zero);
        for (angle, expect) in [(0.75 * PI, Z2::One), (0.25 * PI, Z2::Zero), (1.25 * PI, Z2::One)] {
            let p = SubspacePathPair::from_matrix_fns(
                0.0,
                1.0,
                move |t| line(angle * t),
                |_| dmatrix![0.0; 1.0],
            )
            .unwrap();
            let lp = close_loop(&p, &opts).unwrap();
            // V~ agrees with V at t = 1 and the loop closes.
            let at_one = lp.v.grid().iter().position(|&t| t == 1.0).unwrap();
            let v1 = Frame::orthonormalize(&line(angle)).unwrap();
            assert!(gap_distance(&lp.v.frames()[at_one], &v1).unwrap() < 1e-14);
            assert!(gap_distance(lp.v.first(), lp.v.last()).unwrap() < 1e-12);
            // Transversal on the return leg.
            for (i, &t) in lp.v.grid().iter().enumerate() {
                if t > 1.0 {
                    let m = pair_matrix(&lp.v.frames()[i], &lp.w.frames()[i]).unwrap();
                    assert!(!det_sign(&m, 1e-6).is_degenerate());
                }
            }
            assert_eq!(bundle_orientability(&lp.v).unwrap(), expect);
            assert_eq!(z2_index(&p, &opts).unwrap().value, expect);
        }
    }

    #[test]
    fn geometric_parity_of_constant_systems() {
        let opts = IndexOptions::default();
        let diag = LinearFamily::from_fn(2, 1, |_, _| dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap();
        assert_eq!(geometric_parity(&diag, 0.0, &opts).unwrap().value, Z2::Zero);
        let q1 = LinearFamily::from_fn(2, 1, |_, _| dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        assert_eq!(geometric_parity(&q1, 0.0, &opts).unwrap().value, Z2::Zero);
    }

    #[test]
    fn geometric_parity_of_poschl_teller() {
        let fam = LinearFamily::from_fn(2, 1, |l, t| {
            let q = 1.0 - 2.5 * l / (t.cosh() * t.cosh());
            dmatrix![0.0, 1.0; q, 0.0]
        })
        .unwrap();
        let r = geometric_parity(&fam, 1.0, &IndexOptions::default()).unwrap();
        assert_eq!(r.value, Z2::One);
    }
}
