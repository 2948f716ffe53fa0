//! Linear nonautonomous systems `u' = S(lambda, t) u`: fundamental solutions,
//! asymptotic limits and the stable/unstable subspace paths.

mod ode;
mod subspace;

pub use ode::IntegratorOptions;
pub use subspace::{
    invariant_subspace_path, resolve_horizon, stable_subspace, unstable_subspace, SubspacePath,
    Which,
};

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Env, ExprError, MatrixExpr, Scope};
use crate::linalg::{spectral_split, LinalgError, SpectralSplit, DEFAULT_HYPERBOLICITY};

/// Default truncation horizon.
pub const DEFAULT_T_MAX: f64 = 20.0;
/// Tolerance of the stabilization check `||S(T) - S(T/2)||_max`.
pub const STABILIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("integration failed at t = {t}: {message}")]
    Integration { t: f64, message: String },
    #[error("S(lambda={lambda}, t) has not stabilized at t = {side}{t_max}: defect {defect:e}")]
    NotStabilized {
        lambda: f64,
        side: Side,
        t_max: f64,
        defect: f64,
    },
    #[error("(A1) violated: limit S^{side} at lambda = {lambda} is not hyperbolic (min |Re mu| = {min_real_part:e})")]
    NotHyperbolic {
        lambda: f64,
        side: Side,
        min_real_part: f64,
    },
    #[error("(A3) violated at lambda = {lambda}: {detail}")]
    DimMismatch { lambda: f64, detail: String },
    #[error("horizon not resolved up to t_max = {t_max}: subspace drift {drift:e}")]
    HorizonNotResolved { t_max: f64, drift: f64 },
    #[error("invalid family: {0}")]
    Invalid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Plus,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Minus => "-",
            Side::Plus => "+",
        })
    }
}

type MatrixFn = dyn Fn(f64, f64) -> Result<DMatrix<f64>, FlowError> + Send + Sync;

/// A family `(lambda, t) -> S(lambda, t)` of `n x n` matrices together with the
/// declared dimension `k = dim V^+(S^-)` and numerical settings.
#[derive(Clone)]
pub struct LinearFamily {
    n: usize,
    k: usize,
    eval: Arc<MatrixFn>,
    pub t_max: f64,
    pub lambda_range: (f64, f64),
    pub integrator: IntegratorOptions,
    /// Hyperbolicity threshold for the asymptotic limits.
    pub delta: f64,
    source: Option<MatrixExpr>,
}

impl fmt::Debug for LinearFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearFamily")
            .field("n", &self.n)
            .field("k", &self.k)
            .field("t_max", &self.t_max)
            .field("lambda_range", &self.lambda_range)
            .field("source", &self.source.as_ref().map(|m| m.source()))
            .finish()
    }
}

impl LinearFamily {
    /// Family given by a square matrix of expressions in `t` and `lambda`.
    pub fn from_expr(m: MatrixExpr, k: usize) -> Result<Self, FlowError> {
        let (rows, cols) = m.shape();
        if rows != cols {
            return Err(FlowError::Invalid(format!(
                "S must be square, got {rows}x{cols}"
            )));
        }
        m.check_scope(Scope::Parameters)?;
        let shared = Arc::new(m.clone());
        let eval = move |lambda: f64, t: f64| -> Result<DMatrix<f64>, FlowError> {
            Ok(shared.eval(&Env::new(lambda, t))?)
        };
        let mut fam = LinearFamily::from_try_fn(rows, k, eval)?;
        fam.source = Some(m);
        Ok(fam)
    }

    /// Family given by a closure.
    pub fn from_fn<F>(n: usize, k: usize, f: F) -> Result<Self, FlowError>
    where
        F: Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        LinearFamily::from_try_fn(n, k, move |lambda, t| Ok(f(lambda, t)))
    }

    /// Family given by a fallible closure.
    pub fn from_try_fn<F>(n: usize, k: usize, f: F) -> Result<Self, FlowError>
    where
        F: Fn(f64, f64) -> Result<DMatrix<f64>, FlowError> + Send + Sync + 'static,
    {
        if n == 0 || k > n {
            return Err(FlowError::Invalid(format!(
                "need 0 <= k <= n and n > 0, got n = {n}, k = {k}"
            )));
        }
        Ok(LinearFamily {
            n,
            k,
            eval: Arc::new(f),
            t_max: DEFAULT_T_MAX,
            lambda_range: (0.0, 1.0),
            integrator: IntegratorOptions::default(),
            delta: DEFAULT_HYPERBOLICITY,
            source: None,
        })
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_lambda_range(mut self, lo: f64, hi: f64) -> Self {
        self.lambda_range = (lo, hi);
        self
    }

    pub fn with_integrator(mut self, opts: IntegratorOptions) -> Self {
        self.integrator = opts;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Declared `dim V^+(S^-)`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn source(&self) -> Option<&MatrixExpr> {
        self.source.as_ref()
    }

    pub fn matrix(&self, lambda: f64, t: f64) -> Result<DMatrix<f64>, FlowError> {
        let m = (self.eval)(lambda, t)?;
        if m.shape() != (self.n, self.n) {
            return Err(FlowError::Invalid(format!(
                "evaluator returned {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.n,
                self.n
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(FlowError::Invalid(format!(
                "S(lambda={lambda}, t={t}) is not finite"
            )));
        }
        Ok(m)
    }

    /// The same family restricted to a fixed `lambda` (for single-operator routines).
    pub fn frozen(&self, lambda: f64) -> LinearFamily {
        let inner = self.eval.clone();
        let mut fam = self.clone();
        fam.eval = Arc::new(move |_l, t| inner(lambda, t));
        fam.lambda_range = (lambda, lambda);
        fam
    }
}

/// `gamma_{(lambda, tau)}(t)`: the matrix solution with `gamma(tau) = I`.
pub fn fundamental_solution(
    fam: &LinearFamily,
    lambda: f64,
    tau: f64,
    t: f64,
) -> Result<DMatrix<f64>, FlowError> {
    let n = fam.dim();
    let out = ode::integrate(
        |s| fam.matrix(lambda, s),
        DMatrix::identity(n, n),
        tau,
        &[t],
        &fam.integrator,
        |_, _| Ok(()),
    )?;
    Ok(out.into_iter().next().expect("one target"))
}

#[derive(Debug, Clone)]
pub struct AsymptoticLimits {
    pub lambda: f64,
    pub minus: DMatrix<f64>,
    pub plus: DMatrix<f64>,
    pub split_minus: SpectralSplit,
    pub split_plus: SpectralSplit,
}

/// `S^{+-}` approximated by `S(lambda, +-t_max)`, with the stabilization check
/// and the spectral splitting of both limits.
pub fn asymptotic_limits(fam: &LinearFamily, lambda: f64) -> Result<AsymptoticLimits, FlowError> {
    let t = fam.t_max;
    let mut mats = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    for (slot, (side, sign)) in [(Side::Minus, -1.0), (Side::Plus, 1.0)].into_iter().enumerate() {
        let far = fam.matrix(lambda, sign * t)?;
        let mid = fam.matrix(lambda, sign * 0.5 * t)?;
        let defect = (&far - &mid).amax();
        if !(defect <= STABILIZATION_TOL) {
            return Err(FlowError::NotStabilized {
                lambda,
                side,
                t_max: t,
                defect,
            });
        }
        mats[slot] = far;
    }
    let [minus, plus] = mats;
    let split = |m: &DMatrix<f64>, side| {
        spectral_split(m, fam.delta).map_err(|e| match e {
            LinalgError::NotHyperbolic { min_real_part } => FlowError::NotHyperbolic {
                lambda,
                side,
                min_real_part,
            },
            other => other.into(),
        })
    };
    let split_minus = split(&minus, Side::Minus)?;
    let split_plus = split(&plus, Side::Plus)?;
    Ok(AsymptoticLimits {
        lambda,
        minus,
        plus,
        split_minus,
        split_plus,
    })
}

/// Checks that the spectral dimensions agree with the declared `k`.
pub(crate) fn check_dimensions(fam: &LinearFamily, lim: &AsymptoticLimits) -> Result<(), FlowError> {
    let up = lim.split_minus.v_plus.dim();
    let down = lim.split_plus.v_minus.dim();
    if up != fam.k() || down != fam.dim() - fam.k() {
        return Err(FlowError::DimMismatch {
            lambda: lim.lambda,
            detail: format!(
                "dim V+(S-) = {up}, dim V-(S+) = {down}; declared k = {}, n - k = {}",
                fam.k(),
                fam.dim() - fam.k()
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisViolation {
    pub lambda: f64,
    pub assumption: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub passed: bool,
    pub lambda_samples: usize,
    /// Smallest `min |Re mu|` of the limits over the sampled `lambda`.
    pub min_spectral_gap: f64,
    pub violations: Vec<HypothesisViolation>,
    /// (A1) asks for convergence uniform in `lambda`; only a grid is checked.
    pub coverage: String,
}

pub const DEFAULT_HYPOTHESIS_SAMPLES: usize = 101;

/// Samples `lambda` and checks stabilization, hyperbolicity of both limits and
/// `dim V^+(S^-) = k`, `dim V^-(S^+) = n - k`.
pub fn check_hypotheses(fam: &LinearFamily, samples: usize) -> HypothesisReport {
    let (lo, hi) = fam.lambda_range;
    let samples = samples.max(2);
    let mut violations = Vec::new();
    let mut min_gap = f64::INFINITY;
    for i in 0..samples {
        let lambda = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        match asymptotic_limits(fam, lambda) {
            Ok(lim) => {
                min_gap = min_gap.min(lim.split_minus.gap).min(lim.split_plus.gap);
                if let Err(e) = check_dimensions(fam, &lim) {
                    violations.push(HypothesisViolation {
                        lambda,
                        assumption: "A3".into(),
                        detail: e.to_string(),
                    });
                }
            }
            Err(e) => violations.push(HypothesisViolation {
                lambda,
                assumption: "A1".into(),
                detail: e.to_string(),
            }),
        }
    }
    HypothesisReport {
        passed: violations.is_empty(),
        lambda_samples: samples,
        min_spectral_gap: if min_gap.is_finite() { min_gap } else { 0.0 },
        violations,
        coverage: "sampled, not uniform".into(),
    }
}

/// `check_A1_A3` with the default number of samples.
pub fn check_a1_a3(fam: &LinearFamily) -> HypothesisReport {
    check_hypotheses(fam, DEFAULT_HYPOTHESIS_SAMPLES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gap_distance;
    use nalgebra::dmatrix;

    fn poschl_teller() -> LinearFamily {
        let m = MatrixExpr::from_strs(&[["0", "1"], ["1-2.5*lambda*sech(t)^2", "0"]]).unwrap();
        LinearFamily::from_expr(m, 1).unwrap()
    }

    #[test]
    fn fundamental_solution_of_constant_diagonal() {
        let fam = LinearFamily::from_fn(2, 1, |_, _| dmatrix![-1.0, 0.0; 0.0, 1.0]).unwrap();
        let g = fundamental_solution(&fam, 0.0, 0.0, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((g[(0, 0)] - 1.0 / e).abs() < 1e-9 / e);
        assert!((g[(1, 1)] - e).abs() < 1e-9 * e);
        assert!(g[(0, 1)].abs() < 1e-15 && g[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn fundamental_solution_of_nilpotent() {
        let fam = LinearFamily::from_fn(2, 1, |_, _| dmatrix![0.0, 1.0; 0.0, 0.0]).unwrap();
        for &(tau, t) in &[(0.0, 1.0), (2.0, -1.5), (-3.0, 4.0)] {
            let g = fundamental_solution(&fam, 0.0, tau, t).unwrap();
            let expect = dmatrix![1.0, t - tau; 0.0, 1.0];
            assert!((g - expect).amax() < 1e-10);
        }
    }

    #[test]
    fn cocycle_on_poschl_teller() {
        use rand::{Rng, SeedableRng};
        let fam = poschl_teller();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let lambda = rng.gen_range(0.0..1.0);
            let (tau, sigma, t) = (
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            );
            let direct = fundamental_solution(&fam, lambda, tau, t).unwrap();
            let composed = fundamental_solution(&fam, lambda, sigma, t).unwrap()
                * fundamental_solution(&fam, lambda, tau, sigma).unwrap();
            let scale = direct.amax().max(1.0);
            assert!((direct - composed).amax() < 1e-6 * scale);
        }
    }

    #[test]
    fn limits_examples() {
        let lim = asymptotic_limits(&poschl_teller(), 0.7).unwrap();
        assert!((&lim.plus - dmatrix![0.0, 1.0; 1.0, 0.0]).amax() < 1e-6);
        let diag = Frame::orthonormalize(&dmatrix![1.0; 1.0]).unwrap();
        assert!(gap_distance(&lim.split_plus.v_plus, &diag).unwrap() < 1e-8);

        let c = dmatrix![1.0, 2.0; 0.0, -3.0];
        let cc = c.clone();
        let fam = LinearFamily::from_fn(2, 1, move |_, _| cc.clone()).unwrap();
        let lim = asymptotic_limits(&fam, 0.0).unwrap();
        assert_eq!(lim.minus, c);
        assert_eq!(lim.plus, c);

        let m = MatrixExpr::from_strs(&[["tanh(t)", "0"], ["0", "-1"]]).unwrap();
        let fam = LinearFamily::from_expr(m, 1).unwrap();
        let lim = asymptotic_limits(&fam, 0.0).unwrap();
        assert!((lim.minus - dmatrix![-1.0, 0.0; 0.0, -1.0]).amax() < 1e-12);
        assert!((lim.plus - dmatrix![1.0, 0.0; 0.0, -1.0]).amax() < 1e-12);
    }

    use crate::linalg::Frame;

    #[test]
    fn not_stabilized() {
        let m = MatrixExpr::from_strs(&[["1+t/100", "0"], ["0", "-1"]]).unwrap();
        let fam = LinearFamily::from_expr(m, 1).unwrap();
        assert!(matches!(
            asymptotic_limits(&fam, 0.0),
            Err(FlowError::NotStabilized { .. })
        ));
    }

    #[test]
    fn hypothesis_examples() {
        let rep = check_a1_a3(&poschl_teller());
        assert!(rep.passed, "{:?}", rep.violations);
        assert!((rep.min_spectral_gap - 1.0).abs() < 1e-6);
        assert_eq!(rep.lambda_samples, 101);

        let m = MatrixExpr::from_strs(&[["tanh(t)", "0"], ["0", "-1"]]).unwrap();
        let rep = check_a1_a3(&LinearFamily::from_expr(m, 1).unwrap());
        assert!(!rep.passed);
        assert!(rep.violations.iter().all(|v| v.assumption == "A3"));

        let m = MatrixExpr::from_strs(&[["0", "1"], ["-1", "0"]]).unwrap();
        let rep = check_a1_a3(&LinearFamily::from_expr(m, 1).unwrap());
        assert!(!rep.passed);
        assert!(rep.violations[0].detail.contains("not hyperbolic"));
    }

    #[test]
    fn state_variables_rejected_in_linear_family() {
        let m = MatrixExpr::from_strs(&[["z1"]]).unwrap();
        assert!(LinearFamily::from_expr(m, 0).is_err());
    }
}
