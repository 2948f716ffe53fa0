//! Seeded random generators and the property suites run by `selftest` and
//! the acceptance tests: the axioms of the Z₂-index, the Maslov and graph
//! comparisons, loop orientability, the decomposition identity and the index
//! theorem on random families.
//!
//! Case `i` of a suite draws from its own generator seeded by `(seed, i)`, so
//! results do not depend on the thread schedule. Inputs violating a suite's
//! preconditions (non-transversal ends, irregular crossings) are redrawn and
//! counted as `resampled`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::LinearFamily;
use crate::linalg::{pair_matrix, singular_extremes, Frame};
use crate::maslov::{chart_rotation, graph_pair, maslov_index, MaslovError};
use crate::parity::{
    decomposition_check, finite_parity, verify_index_theorem, ParityError, ParityOptions,
};
use crate::z2index::{
    bundle_orientability, close_loop, z2_index, IndexError, IndexOptions, SubspacePathPair,
};

const MAX_REDRAWS: usize = 50;
/// Ends of random pairs are at least this transversal.
const END_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub passed: usize,
    pub resampled: usize,
    /// Descriptions of the first failing cases.
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.passed == self.cases
    }
}

enum Outcome {
    Pass,
    Fail(String),
}

fn case_rng(seed: u64, suite: u64, case: usize) -> ChaCha8Rng {
    let mut s = ChaCha8Rng::seed_from_u64(seed ^ (suite.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    let offset: u64 = s.gen();
    ChaCha8Rng::seed_from_u64(offset.wrapping_add(case as u64))
}

/// Runs `count` cases; `case` returns `None` to ask for a redraw.
fn run_suite<F>(name: &str, suite: u64, count: usize, seed: u64, case: F) -> SuiteResult
where
    F: Fn(&mut ChaCha8Rng) -> Option<Outcome> + Sync,
{
    let results: Vec<(Outcome, usize)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, suite, i);
            for redraw in 0..MAX_REDRAWS {
                if let Some(o) = case(&mut rng) {
                    return (o, redraw);
                }
            }
            (
                Outcome::Fail(format!("case {i}: no admissible input in {MAX_REDRAWS} draws")),
                MAX_REDRAWS,
            )
        })
        .collect();
    let mut out = SuiteResult {
        name: name.to_string(),
        cases: count,
        passed: 0,
        resampled: 0,
        failures: Vec::new(),
    };
    for (i, (o, redraws)) in results.into_iter().enumerate() {
        out.resampled += redraws;
        match o {
            Outcome::Pass => out.passed += 1,
            Outcome::Fail(msg) => {
                if out.failures.len() < 10 {
                    out.failures.push(format!("case {i}: {msg}"));
                }
            }
        }
    }
    out
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// A random smooth matrix curve `t -> C0 + C1 cos(w t) + C2 sin(w t)`.
#[derive(Debug, Clone)]
pub struct TrigCurve {
    c: [DMatrix<f64>; 3],
    omega: f64,
}

impl TrigCurve {
    pub fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Self {
        TrigCurve {
            c: [
                gaussian_matrix(rng, r, c),
                gaussian_matrix(rng, r, c),
                gaussian_matrix(rng, r, c),
            ],
            omega: rng.gen_range(0.5..6.0),
        }
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let (s, co) = (self.omega * t).sin_cos();
        &self.c[0] + &self.c[1] * co + &self.c[2] * s
    }
}

/// A random pair of subspace paths in `R^n` (`dim V = k`) on `[0, 1]`, built
/// from trigonometric matrix curves.
pub fn random_pair(rng: &mut ChaCha8Rng, n: usize, k: usize) -> SubspacePathPair {
    let v = TrigCurve::random(rng, n, k);
    let w = TrigCurve::random(rng, n, n - k);
    SubspacePathPair::from_matrix_fns(0.0, 1.0, move |t| v.at(t), move |t| w.at(t))
        .expect("non-empty interval")
}

fn margin_at(pair: &SubspacePathPair, t: f64) -> Option<f64> {
    let (v, w) = pair.eval(t).ok()?;
    let (lo, hi) = singular_extremes(&pair_matrix(&v, &w).ok()?);
    Some(lo / hi)
}

fn ends_transversal(pair: &SubspacePathPair) -> bool {
    let (a, b) = pair.domain();
    [a, b]
        .iter()
        .all(|&t| margin_at(pair, t).is_some_and(|m| m > END_MARGIN))
}

/// A random pair with transversal ends, `n` in `2..=6`.
fn admissible_pair(rng: &mut ChaCha8Rng) -> Option<(SubspacePathPair, usize, usize)> {
    let n = rng.gen_range(2..=6);
    let k = rng.gen_range(1..n);
    let p = random_pair(rng, n, k);
    ends_transversal(&p).then_some((p, n, k))
}

fn index_of(p: &SubspacePathPair) -> Result<crate::z2index::Z2, IndexError> {
    Ok(z2_index(p, &IndexOptions::default())?.value)
}

fn compare<T: PartialEq + std::fmt::Debug>(what: &str, a: T, b: T) -> Outcome {
    if a == b {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("{what}: {a:?} != {b:?}"))
    }
}

/// Invariance under monotone reparametrization and reversal.
pub fn property_reparametrization(count: usize, seed: u64) -> SuiteResult {
    run_suite("reparametrization invariance", 1, count, seed, |rng| {
        let (p, n, k) = admissible_pair(rng)?;
        let base = index_of(&p).ok()?;
        let power = rng.gen_range(0.3..3.0);
        let warped = p
            .reparametrized(0.0, 1.0, move |s: f64| s.powf(power))
            .expect("interval");
        let rev = p.reversed();
        let backwards = p
            .reparametrized(0.0, 2.0, |s: f64| 1.0 - 0.5 * s)
            .expect("interval");
        Some(match (index_of(&warped), index_of(&rev), index_of(&backwards)) {
            (Ok(a), Ok(b), Ok(c)) if a == base && b == base && c == base => Outcome::Pass,
            (a, b, c) => Outcome::Fail(format!(
                "n={n} k={k}: base {base}, warped {a:?}, reversed {b:?}, backwards {c:?}"
            )),
        })
    })
}

/// Homotopy invariance relative to the ends.
pub fn property_homotopy(count: usize, seed: u64) -> SuiteResult {
    run_suite("homotopy invariance", 2, count, seed, |rng| {
        let n = rng.gen_range(2..=6);
        let k = rng.gen_range(1..n);
        let v = Arc::new(TrigCurve::random(rng, n, k));
        let w = Arc::new(TrigCurve::random(rng, n, n - k));
        let dv = gaussian_matrix(rng, n, k) * rng.gen_range(0.5..3.0);
        let dw = gaussian_matrix(rng, n, n - k) * rng.gen_range(0.5..3.0);
        let family = |s: f64| {
            let (v, w, dv, dw) = (v.clone(), w.clone(), dv.clone(), dw.clone());
            SubspacePathPair::from_matrix_fns(
                0.0,
                1.0,
                move |t| v.at(t) + &dv * (s * (PI * t).sin().powi(2)),
                move |t| w.at(t) + &dw * (s * (PI * t).sin().powi(2)),
            )
            .expect("interval")
        };
        let p0 = family(0.0);
        if !ends_transversal(&p0) {
            return None;
        }
        let mut values = Vec::new();
        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            // A homotopy through rank-deficient frames is not a homotopy of
            // subspace paths; redraw.
            values.push(index_of(&family(s)).ok()?);
        }
        Some(if values.iter().all(|&x| x == values[0]) {
            Outcome::Pass
        } else {
            Outcome::Fail(format!("n={n} k={k}: values along the homotopy {values:?}"))
        })
    })
}

/// Path additivity at a transversal interior point.
pub fn property_additivity(count: usize, seed: u64) -> SuiteResult {
    run_suite("path additivity", 3, count, seed, |rng| {
        let (p, n, k) = admissible_pair(rng)?;
        let c = rng.gen_range(0.2..0.8);
        if margin_at(&p, c)? <= END_MARGIN {
            return None;
        }
        let whole = index_of(&p).ok()?;
        let left = index_of(&p.restricted(0.0, c).ok()?).ok()?;
        let right = index_of(&p.restricted(c, 1.0).ok()?).ok()?;
        Some(compare(&format!("n={n} k={k} c={c:.3}"), whole, left + right))
    })
}

/// `iota(V, W) = iota(W, V)`.
pub fn property_symmetry(count: usize, seed: u64) -> SuiteResult {
    run_suite("symmetry", 4, count, seed, |rng| {
        let (p, n, k) = admissible_pair(rng)?;
        let a = index_of(&p).ok()?;
        Some(match index_of(&p.swapped()) {
            Ok(b) => compare(&format!("n={n} k={k}"), a, b),
            Err(e) => Outcome::Fail(format!("n={n} k={k}: swapped pair failed: {e}")),
        })
    })
}

/// `iota(V1 (+) V2, W1 (+) W2) = iota(V1, W1) + iota(V2, W2)`.
pub fn property_sum(count: usize, seed: u64) -> SuiteResult {
    run_suite("direct-sum additivity", 5, count, seed, |rng| {
        let (n1, n2) = (rng.gen_range(2..=3), rng.gen_range(2..=3));
        let (k1, k2) = (rng.gen_range(1..n1), rng.gen_range(1..n2));
        let p1 = random_pair(rng, n1, k1);
        let p2 = random_pair(rng, n2, k2);
        if !ends_transversal(&p1) || !ends_transversal(&p2) {
            return None;
        }
        let a = index_of(&p1).ok()?;
        let b = index_of(&p2).ok()?;
        let sum = p1.direct_sum(&p2).ok()?;
        Some(match index_of(&sum) {
            Ok(s) => compare(&format!("({n1},{k1}) (+) ({n2},{k2})"), s, a + b),
            Err(e) => Outcome::Fail(format!("direct sum failed: {e}")),
        })
    })
}

fn random_symmetric_curve(rng: &mut ChaCha8Rng, k: usize) -> impl Fn(f64) -> DMatrix<f64> + Send + Sync {
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let coeffs: Vec<DMatrix<f64>> = (0..5).map(|_| sym(gaussian_matrix(rng, k, k))).collect();
    let omega = rng.gen_range(1.0..5.0);
    let scale = rng.gen_range(0.5..3.0);
    move |t| {
        let mut a = coeffs[0].clone();
        for j in 1..=2 {
            let (s, c) = (j as f64 * omega * t).sin_cos();
            a += &coeffs[2 * j - 1] * c + &coeffs[2 * j] * s;
        }
        a * scale
    }
}

/// A random symplectic orthogonal map: `R_theta diag(O, O)`.
fn random_symplectic_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let o = gaussian_matrix(rng, k, k).qr().q();
    let mut d = DMatrix::zeros(2 * k, 2 * k);
    d.view_mut((0, 0), (k, k)).copy_from(&o);
    d.view_mut((k, k), (k, k)).copy_from(&o);
    chart_rotation(k, rng.gen_range(0.0..PI)) * d
}

/// `iota ≡ Maslov (mod 2)` on random Lagrangian path pairs with
/// `k` in `{1, 2, 3}`.
pub fn maslov_mod_two(count: usize, seed: u64) -> SuiteResult {
    run_suite("Maslov mod 2", 6, count, seed, |rng| {
        let k = rng.gen_range(1..=3);
        let fa = random_symmetric_curve(rng, k);
        let fb = random_symmetric_curve(rng, k);
        let u = rng.gen_bool(0.5).then(|| random_symplectic_orthogonal(rng, k));
        let p = graph_pair(0.0, 1.0, fa, fb, u).expect("interval");
        if !ends_transversal(&p) {
            return None;
        }
        let z2 = index_of(&p).ok()?;
        match maslov_index(&p) {
            Ok(m) => Some(compare(
                &format!("k={k} ({} crossings)", m.crossings.len()),
                z2,
                crate::z2index::Z2::from_parity(m.value),
            )),
            // Only regular crossings are in scope.
            Err(MaslovError::IrregularCrossing { .. }) | Err(MaslovError::DegenerateForm { .. }) => {
                None
            }
            Err(e) => Some(Outcome::Fail(format!("k={k}: {e}"))),
        }
    })
}

/// Graph route = determinant route on random cubic paths of
/// `3 x 3` matrices.
pub fn graph_vs_determinant(count: usize, seed: u64) -> SuiteResult {
    run_suite("graph vs determinant", 7, count, seed, |rng| {
        let c: Vec<DMatrix<f64>> = (0..4).map(|_| gaussian_matrix(rng, 3, 3)).collect();
        let path = move |s: f64| &c[0] + &c[1] * s + &c[2] * (s * s) + &c[3] * (s * s * s);
        for s in [0.0, 1.0] {
            let (lo, hi) = singular_extremes(&path(s));
            if lo <= END_MARGIN * hi {
                return None;
            }
        }
        Some(match finite_parity(path) {
            Ok(r) if r.graph_route == r.det_route => Outcome::Pass,
            Ok(r) => Outcome::Fail(format!("graph {} vs det {}", r.graph_route, r.det_route)),
            Err(e) => Outcome::Fail(e.to_string()),
        })
    })
}

/// `w_1(close_loop(V, W)) = iota(V, W)`.
pub fn loop_orientability(count: usize, seed: u64) -> SuiteResult {
    run_suite("loop orientability", 8, count, seed, |rng| {
        let (p, n, k) = admissible_pair(rng)?;
        let z2 = index_of(&p).ok()?;
        let opts = IndexOptions::default();
        Some(
            match close_loop(&p, &opts).and_then(|l| bundle_orientability(&l.v)) {
                Ok(w1) => compare(&format!("n={n} k={k}"), w1, z2),
                Err(e) => Outcome::Fail(format!("n={n} k={k}: {e}")),
            },
        )
    })
}

/// A random family on `R^n`, `n = 2k`, interpolating hyperbolic limits
/// `S^±(lambda) = R^±(lambda) D R^±(lambda)^T` with a `sech` bump. With
/// `moving_limits` the rotations depend on `lambda`.
pub fn random_family(rng: &mut ChaCha8Rng, n: usize, moving_limits: bool) -> LinearFamily {
    let k = n / 2;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mag = rng.gen_range(0.5..2.0);
        d[(i, i)] = if i < k { mag } else { -mag };
    }
    let skew = |rng: &mut ChaCha8Rng| {
        let g = gaussian_matrix(rng, n, n);
        (&g - g.transpose()) * 0.5
    };
    let (a_minus, a_plus) = (skew(rng), skew(rng));
    let (b_minus, b_plus) = if moving_limits {
        (skew(rng) * rng.gen_range(0.5..2.0), skew(rng) * rng.gen_range(0.5..2.0))
    } else {
        (DMatrix::zeros(n, n), DMatrix::zeros(n, n))
    };
    let p0 = gaussian_matrix(rng, n, n) * rng.gen_range(0.0..2.0);
    let p1 = gaussian_matrix(rng, n, n) * rng.gen_range(0.0..4.0);
    let rot = |a: &DMatrix<f64>, b: &DMatrix<f64>, l: f64| (a + b * l).exp();
    LinearFamily::from_fn(n, k, move |l, t| {
        let rm = rot(&a_minus, &b_minus, l);
        let rp = rot(&a_plus, &b_plus, l);
        let sm = &rm * &d * rm.transpose();
        let sp = &rp * &d * rp.transpose();
        let wp = 0.5 * (1.0 + t.tanh());
        sp * wp + sm * (1.0 - wp) + (&p0 + &p1 * l) / t.cosh()
    })
    .expect("valid dimensions")
}

fn family_precondition_failure(e: &ParityError) -> bool {
    matches!(
        e,
        ParityError::EndpointDegenerate { .. }
            | ParityError::HypothesisFailure { .. }
            | ParityError::Index(IndexError::DegenerateEndpoint { .. })
            | ParityError::Index(IndexError::BoundaryDegenerate { .. })
            | ParityError::Index(IndexError::TailNotTransversal { .. })
    )
}

/// The decomposition identity on random boundary-nondegenerate families (`n` in `{2, 4}`,
/// half of them with `lambda`-dependent limits).
pub fn decomposition_suite(count: usize, seed: u64) -> SuiteResult {
    run_suite("decomposition identity", 9, count, seed, |rng| {
        let n = if rng.gen_bool(0.5) { 2 } else { 4 };
        let moving = rng.gen_bool(0.5);
        let fam = random_family(rng, n, moving);
        match decomposition_check(&fam, &IndexOptions::default()) {
            Ok(r) if r.holds => Some(Outcome::Pass),
            Ok(r) => Some(Outcome::Fail(format!("n={n}: {r:?}"))),
            Err(e) if family_precondition_failure(&e) => None,
            Err(e) => Some(Outcome::Fail(format!("n={n}: {e}"))),
        }
    })
}

/// The index theorem on random families at a reduced resolution.
pub fn theorem_suite(count: usize, seed: u64, opts: &ParityOptions) -> SuiteResult {
    run_suite("index theorem (random families)", 10, count, seed, |rng| {
        let n = if rng.gen_bool(0.5) { 2 } else { 4 };
        let fam = random_family(rng, n, false);
        match verify_index_theorem(&fam, opts, &IndexOptions::default()) {
            Ok(r) => Some(compare(&format!("n={n} parity vs iota"), r.lhs.value, r.rhs.value)),
            Err(e) if family_precondition_failure(&e) => None,
            Err(e) => Some(Outcome::Fail(format!("n={n}: {e}"))),
        }
    })
}

/// The suites run by `hetindex selftest`, with the acceptance sizes.
pub fn selftest(seed: u64) -> Vec<SuiteResult> {
    vec![
        property_reparametrization(500, seed),
        property_homotopy(500, seed),
        property_additivity(500, seed),
        property_symmetry(500, seed),
        property_sum(500, seed),
        maslov_mod_two(200, seed),
        graph_vs_determinant(500, seed),
        loop_orientability(200, seed),
        decomposition_suite(20, seed),
    ]
}

/// Frame of `span(I; A)` for a symmetric `A`, for callers building Lagrangian
/// inputs by hand.
pub fn lagrangian_graph(a: &DMatrix<f64>) -> Frame {
    let k = a.nrows();
    let mut g = DMatrix::zeros(2 * k, k);
    g.rows_mut(0, k).fill_with_identity();
    g.rows_mut(k, k).copy_from(a);
    Frame::orthonormalize(&g).expect("graphs have full rank")
}
